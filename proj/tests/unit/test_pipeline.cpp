#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"

#include "fpam/error.hpp"
#include "fpam/io.hpp"
#include "fpam/pipeline.hpp"

using namespace fpam;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / "fpam_pipeline_test" / name;
  fs::remove_all(d);
  return d;
}

json lambda_config() {
  return json::parse(R"({
    "pipeline": "lambda",
    "seed": 3,
    "alpha": 1.5,
    "K_trunc": [2, 4, 8],
    "field": {"grid": {"M": 1.0, "N": 32, "dim": 1}, "type": "bump", "amplitude": 2.0, "width": 0.1}
  })");
}

json lyapunov_config() {
  return json::parse(R"({
    "pipeline": "lyapunov",
    "seed": 11,
    "M_value": 0.3,
    "experiment": {
      "spec": {"alpha": 2.0, "beta0": 0.0, "kernel": {"type": "riesz", "beta": 0.5}, "dim": 1},
      "p": 2, "rho": 1, "t_grid": [0.5, 1.0, 1.5], "n_replicas": 64, "n_steps": 16
    }
  })");
}

RunOptions to(const fs::path& dir) {
  RunOptions o;
  o.out_dir = dir;
  return o;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FPAM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("re-runs are byte identical") {
  const auto a = scratch("rep_a");
  const auto b = scratch("rep_b");
  const auto ra = run_pipeline(lyapunov_config(), to(a));
  const auto rb = run_pipeline(lyapunov_config(), to(b));
  CHECK(ra.ok);
  CHECK(io::read_text(a / "records.json") == io::read_text(b / "records.json"));
  CHECK(io::read_text(a / "estimates.csv") == io::read_text(b / "estimates.csv"));

  RunOptions other = to(scratch("rep_c"));
  other.seed = 12;
  const auto rc = run_pipeline(lyapunov_config(), other);
  CHECK(io::read_text(rc.run_dir / "records.json") != io::read_text(a / "records.json"));

  // Thread count never changes the output.
  RunOptions threaded = to(scratch("rep_d"));
  threaded.threads = 3;
  const auto rd = run_pipeline(lyapunov_config(), threaded);
  CHECK(io::read_text(rd.run_dir / "records.json") == io::read_text(a / "records.json"));
}

TEST_CASE("manifest is append-only and verified") {
  const auto d = scratch("manifest");
  run_pipeline(lambda_config(), to(d));
  run_pipeline(lambda_config(), to(d));
  const auto m = read_manifest(d);
  CHECK(m.at("entries").size() == 2);
  const auto& e = m.at("entries")[1];
  CHECK(e.at("pipeline") == "lambda");
  CHECK(e.at("master_seed") == 3);
  CHECK(e.at("tool_version") == kToolVersion);
  CHECK(e.at("files")[0].at("sha256") == io::sha256_file(d / "records.json"));
  io::write_text(d / "records.json", "[]\n");
  try {
    (void)read_manifest(d);
    FAIL("expected Io");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::Io);
  }
}

TEST_CASE("lambda records follow the truncation sweep") {
  const auto d = scratch("lambda");
  run_pipeline(lambda_config(), to(d));
  const auto recs = json::parse(io::read_text(d / "records.json"));
  double prev = -1e300;
  int n = 0;
  for (const auto& r : recs) {
    if (r.at("kind") != "lambda") continue;
    CHECK(r.at("value").get<double>() >= prev - 1e-10);
    prev = r.at("value").get<double>();
    ++n;
  }
  CHECK(n == 3);
  CHECK(fs::exists(d / "lambda.csv"));
}

TEST_CASE("invalid configs fail before anything is written") {
  const auto d = scratch("invalid");
  auto cfg = lambda_config();
  cfg["alpha"] = 2.5;
  CHECK_THROWS_AS(run_pipeline(cfg, to(d)), Error);
  CHECK_FALSE(fs::exists(d));

  auto bad_field = lambda_config();
  bad_field["field"]["grid"]["N"] = 0;
  try {
    run_pipeline(bad_field, to(d));
    FAIL("expected ConfigInvalid");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConfigInvalid);
    CHECK(std::string(e.what()).find("field") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(d));

  auto skorohod = json::parse(R"({
    "pipeline": "exp-moment", "t": 1.0, "thetas": [0.1],
    "spec": {"alpha": 1.0, "beta0": 0.5, "kernel": {"type": "riesz", "beta": 0.6}, "dim": 1}
  })");
  try {
    run_pipeline(skorohod, to(d));
    FAIL("expected RegimeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RegimeMismatch);
  }
  CHECK_FALSE(fs::exists(d));

  auto unknown = lambda_config();
  unknown["pipeline"] = "nonsense";
  CHECK_THROWS_AS(run_pipeline(unknown, to(d)), Error);
}

TEST_CASE("plot data") {
  const auto d = scratch("plot");
  run_pipeline(lyapunov_config(), to(d));
  const auto csv = emit_plot_data(d, "lyapunov");
  const auto t = io::parse_csv(io::read_text(csv));
  CHECK(t.rows.size() == 3);
  const auto tchi = t.column("tchi");
  CHECK(t.number(2, tchi) == doctest::Approx(std::pow(1.5, 3.5 / 1.5)));
  CHECK(t.column("prediction") > 0);

  const auto l = scratch("plot_missing");
  run_pipeline(lambda_config(), to(l));
  try {
    (void)emit_plot_data(l, "scaling");
    FAIL("expected MissingRecords");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingRecords);
  }
}

TEST_CASE("other pipelines produce their files") {
  const auto sp = scratch("paths");
  run_pipeline(json::parse(R"({"pipeline": "sample-paths",
    "path": {"dim": 2, "alpha": 1.2, "horizon": 1.0, "n_steps": 8, "seed": 0}, "n_paths": 3})"), to(sp));
  CHECK(fs::exists(sp / "paths" / "path_0002.csv"));
  const auto [spec, path] = io::path_from_csv(io::read_text(sp / "paths" / "path_0000.csv"));
  CHECK(path.n_points() == 9);

  const auto eh = scratch("hamiltonian");
  run_pipeline(json::parse(R"({"pipeline": "estimate-hamiltonian", "t": 1.0, "n_paths": 4, "n_steps": 16,
    "spec": {"alpha": 1.5, "beta0": 0.2, "kernel": {"type": "riesz", "beta": 0.3}, "dim": 1}})"), to(eh));
  const auto h = io::parse_csv(io::read_text(eh / "hamiltonian.csv"));
  CHECK(h.rows.size() == 4);

  const auto kv = scratch("kernels");
  const auto r = run_pipeline(json::parse(R"({"pipeline": "kernels-validate",
    "spec": {"alpha": 2.0, "beta0": 0.5, "kernel": {"type": "product", "betas": [0.3, 0.4]}, "dim": 2}})"), to(kv));
  CHECK(r.ok);
}

TEST_CASE("field descriptions") {
  const auto f = field_from_json(json::parse(R"({"grid": {"M": 2.0, "N": 16, "dim": 1}, "type": "bump",
    "amplitude": 3.0, "width": 0.2, "center": [1.0]})"));
  CHECK(f.n_slices == 1);
  CHECK(f.values[8] == doctest::Approx(3.0));
  const auto v = field_from_json(json::parse(R"({"grid": {"M": 1.0, "N": 2, "dim": 1}, "n_slices": 2,
    "type": "values", "values": [1, 2, 3, 4]})"));
  CHECK(v.slice(1)[0] == 3.0);
  CHECK_THROWS_AS(field_from_json(json::parse(R"({"grid": {"M": 1.0, "N": 2, "dim": 1}, "type": "values",
    "values": [1, 2, 3]})")), Error);
}

#ifdef FPAM_CLI_PATH
TEST_CASE("command line exit codes") {
  const auto d = scratch("cli");
  fs::create_directories(d);
  io::write_text(d / "bad.json", "{\"pipeline\": ");
  CHECK(run_cli("lambda --config " + (d / "bad.json").string() + " --out " + (d / "out").string()) == 2);
  io::write_text(d / "good.json", lambda_config().dump());
  CHECK(run_cli("lambda --config " + (d / "good.json").string() + " --out " + (d / "out").string()) == 0);
  CHECK(fs::exists(d / "out" / "records.json"));
  CHECK(run_cli("plot scaling --run " + (d / "out").string()) != 0);
  CHECK(run_cli("no-such-command") == 2);
  io::write_text(d / "lyap.json", lyapunov_config().dump());
  CHECK(run_cli("lyapunov --config " + (d / "lyap.json").string() + " --out " + (d / "ly").string() + " --seed 5") == 0);
  CHECK(run_cli("plot lyapunov --run " + (d / "ly").string()) == 0);
  CHECK(fs::exists(d / "ly" / "plot_lyapunov.csv"));
}
#endif
