#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpcsim/types.hpp"

namespace qpcsim {

enum class Mode {
  kSimulate,
  kVerifyOracle,
  kVerifyRelation,
  kNoiseCurve,
  kSweep,
};

const char* mode_name(Mode mode);

struct SweepAxis {
  std::string name;
  double from = 0.0;
  double to = 0.0;
  double step = 0.0;
};

/// Unparseable or invalid configuration; the message names the offending
/// field. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One experiment: everything needed to reproduce an output byte for byte.
/// All physical parameters are explicit in the config file; only flux and
/// charge fall back to 1. The remaining defaults below are grid and
/// bookkeeping knobs, not physics.
struct ExperimentConfig {
  Mode mode = Mode::kSimulate;
  BarrierPair barriers{};
  DetectorConfig detector{};
  bool has_n_max = false;  // detector.n_max was given explicitly
  PolarizationVector initial{};
  HamiltonianVector hamiltonian{};
  std::int64_t n = 1;
  std::int64_t ensemble = 1;
  std::uint64_t master_seed = 0;
  int workers = 1;
  std::int64_t smoothing_window = 1;
  std::string out_dir = ".";
  bool quiet = false;

  // verify-oracle: random-draw grid against the enumeration oracle
  std::int64_t oracle_draws = 200;
  std::int64_t oracle_window_max = 12;

  // verify-relation: measurement-noise vs decoherence-rate sweep
  std::vector<double> relation_delta_thetas{0.01, 0.02, 0.05, 0.1};
  std::vector<std::int64_t> relation_windows{10, 100, 1000};
  double relation_theta_mean = 0.78539816339744831;

  // noise-curve: Monte Carlo ensemble for the windowed-variance overlay
  std::int64_t mc_ensemble = 3000;

  // sweep
  std::vector<SweepAxis> axes;
};

/// Parse a JSON document. When mode_override is set (the CLI subcommand)
/// the config's own "mode" entry may be omitted; if both are present they
/// must agree.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig parse_config(const std::string& json_text,
                              const std::string& mode_override);
ExperimentConfig load_config(const std::string& path);
ExperimentConfig load_config(const std::string& path,
                             const std::string& mode_override);

/// Re-check every module precondition the config feeds into; throws
/// ConfigError naming the parameter. parse_config calls this; call it
/// yourself when building an ExperimentConfig by hand.
void validate_config(const ExperimentConfig& config);

struct RunOutcome {
  int exit_code = 0;  // 0 pass, 1 a verification check failed
  bool pass = true;
  std::vector<std::string> files;  // paths written, in emission order
};

/// Dispatches on config.mode and writes the mode's artifacts (CSV plus a
/// summary.json) into out_dir. Deterministic given the config and seed,
/// including under a worker pool.
RunOutcome run(const ExperimentConfig& config);

}  // namespace qpcsim
