#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpam/spectral.hpp"

namespace fpam {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

const std::vector<std::string>& pipeline_names();

struct RunOptions {
  std::string pipeline;                // required unless the config names one
  std::optional<fs::path> out_dir;     // default: $FPAM_OUT, then runs/<pipeline>
  std::optional<std::uint64_t> seed;   // overrides the config seed
  int threads = 0;                     // 0: $FPAM_THREADS, then the config, then all cores
};

struct RunOutcome {
  fs::path run_dir;
  bool ok = true;  // false when a check inside the pipeline failed
  std::vector<std::string> summary;
};

// Parses and validates the whole configuration before touching the file
// system: ConfigInvalid (with the offending field) or RegimeMismatch leave
// nothing behind.
RunOutcome run_pipeline(const nlohmann::json& config, const RunOptions& opts);
RunOutcome run_experiment(const fs::path& config_path, const RunOptions& opts);

// Writes plot_<name>.csv from the records of a run ("lyapunov" or "scaling").
// Throws MissingRecords if the run lacks them.
fs::path emit_plot_data(const fs::path& run_dir, const std::string& plot);

// Reads manifest.json and checks every listed file against its latest hash.
// Throws Io on a mismatch or a missing file.
nlohmann::json read_manifest(const fs::path& run_dir);

// Field description shared by fk-check and lambda:
//   {"grid": {...}, "n_slices": 1, "type": "bump", "amplitude": a, "center": [...],
//    "width": w, "time_modulation": m}   f = a exp(-|x-c|^2/(2w^2)) (1 + m cos 2 pi s)
//   {"grid": {...}, "n_slices": n, "type": "values", "values": [...]}
SliceFamily field_from_json(const nlohmann::json& j);

}  // namespace fpam
