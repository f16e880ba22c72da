// sgp/config.hpp
//
// Flat key-value run configuration (`section.key = value`), validated up
// front with unknown keys rejected.  CLI flags override file values.  The
// canonical echo re-parses to an equal RunConfig, which is what the report
// stores for reproducibility.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgp/admm.hpp"
#include "sgp/data.hpp"
#include "sgp/fusion.hpp"

namespace sgp {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
  // data source: a CSV path, or the synthetic generator when empty
  std::string csv_path;
  ImputePolicy impute = ImputePolicy::kReject;
  SyntheticSpec synth;  // synth.seed == 0 mirrors run.seed

  KernelSpec kernel;

  // sigma2_e policy: "diff" (half the lag-1 difference variance) or "fixed"
  std::string noise_policy = "diff";
  double noise_value = 0.1;

  GpOptions gp;
  AdmmConfig admm;

  FusionStrategy strategy = FusionStrategy::kQp;
  int validation_points = 1;
  bool concatenate = false;
  int mirror_iterations = 500;

  int train_len = 300;
  int horizon = 1;
  int repeats = 10;  // number of rolling windows executed
  int step = 1;

  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 0;

  std::vector<int> k_sweep = {1, 2, 4, 8};
  int bench_rounds = 3;
  int bench_inner_iterations = 25;
  bool bench_toeplitz_compare = true;

  bool use_synth() const { return csv_path.empty(); }
  // Resolved synthetic seed / worker seed / thread cap.
  std::uint64_t synth_seed() const {
    return synth.seed != 0 ? synth.seed : seed;
  }

  // Throws ConfigError on any inconsistency.
  void validate() const;

  bool operator==(const RunConfig& other) const;
};

/// Parses config text; later assignments win.  Throws ConfigError on
/// unknown keys or malformed values.
RunConfig parse_config_text(const std::string& text);

/// Applies one `section.key=value` override in place.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Loads a file (optional) and applies overrides, then validates.
RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides);

/// Canonical echo: every key in a fixed order; re-parses to an equal config.
std::string canonical_text(const RunConfig& cfg);

}  // namespace sgp
