#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fpam/error.hpp"
#include "fpam/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical experiments for the fractional parabolic Anderson model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fpam::kToolVersion);

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string run_dir;
  std::string plot_name;

  for (const auto& name : fpam::pipeline_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " pipeline");
    sub->add_option("--config", config, "JSON configuration file")->required();
    sub->add_option("--out", out, "run directory (default $FPAM_OUT, then runs/<pipeline>)");
    sub->add_option("--seed", seed, "master seed, overrides the config");
    sub->add_option("--threads", threads, "worker threads (default $FPAM_THREADS, then all cores)");
  }
  auto* plot = app.add_subcommand("plot", "emit plot-ready CSV from a finished run");
  plot->add_option("name", plot_name, "lyapunov or scaling")->required();
  plot->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (plot->parsed()) {
      std::cout << fpam::emit_plot_data(run_dir, plot_name).string() << "\n";
      return 0;
    }
    auto* sub = app.get_subcommands().front();
    fpam::RunOptions opts;
    opts.pipeline = sub->get_name();
    if (!out.empty()) opts.out_dir = out;
    if (sub->count("--seed") > 0) opts.seed = seed;
    opts.threads = threads;
    const auto outcome = fpam::run_experiment(config, opts);
    for (const auto& line : outcome.summary) std::cout << line << "\n";
    std::cout << "run directory: " << outcome.run_dir.string() << "\n";
    return outcome.ok ? 0 : 1;
  } catch (const fpam::Error& e) {
    std::cerr << "fpam: " << e.what() << "\n";
    return fpam::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "fpam: " << e.what() << "\n";
    return 1;
  }
}
