#pragma once

// Locating maximum-absolute-value entries of a CTD.
//
// Power method: Y_0 uniform, Q_k = U * Y_{k-1}, Y_k = tau(Q_k / ||Q_k||).
// Converges linearly.
//
// Squaring: Y_0 = U / ||U||, Q_k = Y_{k-1} * Y_{k-1}, Y_k = tau(Q_k)
// normalized. Entries of Y_k track U's entries raised to 2^k, so the gap
// between the largest entry and the rest closes quadratically.
//
// Both report a per-iteration trace and candidate locations whose values are
// read from the original tensor.

#include "ctdopt/ctd.hpp"
#include "ctdopt/reduction.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ctdopt {

enum class SearchMethod { PowerMethod, Squaring };

std::string to_string(SearchMethod m);

struct Termination {
  enum class Kind { FixedIterations, LambdaStall, RankThreshold };
  Kind kind = Kind::RankThreshold;
  int iterations = 0;
  double delta = 1e-4;
  Index rank = 1;

  static Termination fixed(int n) { return {Kind::FixedIterations, n, 0.0, 0}; }
  static Termination lambda_stall(double delta) { return {Kind::LambdaStall, 0, delta, 0}; }
  static Termination rank_threshold(Index r) { return {Kind::RankThreshold, 0, 0.0, r}; }

  /// "fixed:N", "lambda:DELTA", "rank:R"
  static Termination parse(const std::string& s);
  std::string to_string() const;
};

struct MaxEntrySearchConfig {
  SearchMethod method = SearchMethod::Squaring;
  /// Reduction applied after every product; nullopt disables it.
  std::optional<ReductionConfig> reduction = ReductionConfig{};
  int k_max = 100;
  Termination termination = Termination::rank_threshold(1);
  /// Locations reported per rank-1 term of the final iterate.
  Index candidates_per_term = 1;
  /// Keep every Y_k in the trace (tests and diagnostics).
  bool keep_iterates = false;

  void validate() const;
};

struct IterationRecord {
  int k = 0;
  Index rank = 0;
  /// Power method: <Y_{k-1}, Q_k>. Squaring: <Y_k, U>. NaN at k = 0 for the
  /// power method.
  double lambda = 0.0;
  /// s_l * prod_j max_i |u_j^(l)[i]| for each term of Y_k.
  std::vector<double> term_maxima;
  double seconds = 0.0;
  bool tolerance_not_met = false;
};

struct Candidate {
  MultiIndex index;
  double value = 0.0;  // entry of the original tensor
};

struct MaxEntryTrace {
  SearchMethod method = SearchMethod::Squaring;
  std::vector<IterationRecord> records;  // records[0] describes Y_0
  std::vector<Candidate> candidates;
  CTD final_iterate;
  std::vector<CTD> iterates;  // filled when keep_iterates
  /// The termination rule fired before k_max ran out.
  bool terminated = false;
  /// The first iteration left Y unchanged: every entry has the same
  /// magnitude on the support, so no location stands out.
  bool degenerate_plateau = false;

  int iterations() const { return static_cast<int>(records.size()) - 1; }
  double total_seconds() const;
};

MaxEntryTrace power_method_max(const CTD& u, const MaxEntrySearchConfig& cfg);
MaxEntryTrace squaring_max(const CTD& u, const MaxEntrySearchConfig& cfg);

/// Dispatches on cfg.method.
MaxEntryTrace find_max_entries(const CTD& u, const MaxEntrySearchConfig& cfg);

/// Smallest j with (b/a)^(2^j) <= eps. Requires 0 < b < a, 0 < eps < 1.
int iteration_bound(double a, double b, double eps);

/// For each term of y, its `per_term` largest-magnitude locations; merged,
/// valued on u, sorted by |value| descending (ties by index).
std::vector<Candidate> extract_candidates(const CTD& y, const CTD& u, Index per_term = 1);

/// The k largest-|entry| locations of a rank-1 term.
std::vector<MultiIndex> top_locations_of_term(const CTD& y, Index term, Index k);

}  // namespace ctdopt
