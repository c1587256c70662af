#pragma once

// Batch drivers: the planted-spike demonstrations, the power-method versus
// squaring comparison, the Ackley pipeline, and file-level access to
// reduction and maximum-entry search. Every driver writes its artifacts plus
// a manifest.json into the configured output directory.
//
// Outputs that depend only on the configuration (CSV, summary JSON) are
// bit-identical for a fixed seed. Wall-clock times go to separate timing
// files.

#include "ctdopt/ctd.hpp"
#include "ctdopt/max_entry.hpp"
#include "ctdopt/reduction.hpp"
#include "ctdopt/sep_func.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ctdopt {

inline constexpr const char* kVersion = "0.1.0";

/// SplitMix64 of master + stream; used for per-trial seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

struct PlantedInstance {
  CTD tensor;
  std::vector<MultiIndex> locations;
  /// Entry of `tensor` at each planted location.
  std::vector<double> peaks;
};

/// Rank-r uniform[low, high] background plus spikes lifting the entries at
/// `count` distinct random locations to `target`.
PlantedInstance planted_to_target(Index d, Index m, Index rank, double low, double high, double target, int count,
                                  std::uint64_t seed);

/// Rank-r uniform[low, high] background plus one spike of the given
/// magnitude added at a random location.
PlantedInstance planted_added(Index d, Index m, Index rank, double low, double high, double magnitude,
                              std::uint64_t seed);

struct ExperimentConfig {
  std::string experiment = "demo-convergence";
  std::uint64_t seed = 1;
  int trials = 1;
  Index dims = 6;
  Index modes = 32;
  Index rank = 3;
  double low = 0.9;
  double high = 1.0;
  /// Peak value for the demos, added spike magnitude for compare.
  double spike = 3.5;
  ReductionConfig reduction{};
  MaxEntrySearchConfig search{};
  /// Two-maxima demo: k_max of the run that continues to rank 1.
  int extended_k_max = 60;
  /// Worker threads for compare; 0 means one per hardware thread.
  int threads = 0;
  AckleyProblemConfig ackley{};
  CompassOptions compass{};
  std::filesystem::path out_dir = "out";

  void validate() const;
};

/// Defaults for "demo-convergence", "demo-two-maxima", "compare", "ackley",
/// "reduce" and "max-entry".
ExperimentConfig default_config(const std::string& experiment);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Applies the keys present in `j`; unknown keys raise ConfigError.
void apply_overrides(ExperimentConfig& cfg, const nlohmann::json& j);

nlohmann::json trace_to_json(const MaxEntryTrace& t);
/// k, rank, lambda, term_max_1..term_max_R (blank-padded to the largest rank).
std::string trace_to_csv(const MaxEntryTrace& t);

// -- single trials ----------------------------------------------------------

struct ConvergenceRun {
  PlantedInstance instance;
  MaxEntryTrace trace;
  bool located = false;
};
ConvergenceRun run_convergence_trial(const ExperimentConfig& cfg, std::uint64_t seed);

struct TwoMaximaRun {
  PlantedInstance instance;
  MaxEntryTrace fixed;     // stopped after search.termination
  MaxEntryTrace extended;  // continued to rank 1
  bool both_reported = false;
  bool collapsed = false;
};
TwoMaximaRun run_two_maxima_trial(const ExperimentConfig& cfg, std::uint64_t seed);

struct CompareTrial {
  int trial = 0;
  std::uint64_t seed = 0;
  MultiIndex planted;
  double peak = 0.0;
  MultiIndex power_found;
  MultiIndex squaring_found;
  int power_iterations = 0;
  int squaring_iterations = 0;
  bool power_terminated = false;
  bool squaring_terminated = false;
  double power_seconds = 0.0;
  double squaring_seconds = 0.0;

  bool power_correct() const { return power_found == planted; }
  bool squaring_correct() const { return squaring_found == planted; }
};
CompareTrial run_compare_trial(const ExperimentConfig& cfg, int trial);
/// All trials, run concurrently, ordered by trial index.
std::vector<CompareTrial> run_compare_trials(const ExperimentConfig& cfg);

struct AckleyRun {
  AckleyProblem problem;
  OptimizationReport report;
  double tensor_distance = 0.0;
  double refined_distance = 0.0;
  double refined_relative_error = 0.0;
  double seconds = 0.0;
};
AckleyRun run_ackley_problem(const ExperimentConfig& cfg);

// -- drivers that write files -----------------------------------------------

struct ExperimentOutput {
  std::vector<std::filesystem::path> files;
  nlohmann::json summary;
};

ExperimentOutput run_demo_convergence(const ExperimentConfig& cfg);
ExperimentOutput run_demo_two_maxima(const ExperimentConfig& cfg);
ExperimentOutput run_compare(const ExperimentConfig& cfg);
ExperimentOutput run_ackley(const ExperimentConfig& cfg);
ExperimentOutput reduce_file(const std::filesystem::path& input, const ExperimentConfig& cfg);
ExperimentOutput max_entry_file(const std::filesystem::path& input, const ExperimentConfig& cfg);

/// Dispatches the four batch experiments on cfg.experiment.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

}  // namespace ctdopt
