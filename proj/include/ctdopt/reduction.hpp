#pragma once

// Separation-rank reduction: given U and a relative tolerance eps, find V of
// lower rank with ||U - V|| <= eps ||U|| in the selected norm.
//
// Two algorithms are available. ALS refits all factors by alternating least
// squares. The interpolative path keeps a skeleton subset of U's own terms,
// picked by diagonally pivoted Cholesky on the term Gram matrix, and refits
// their weights by least squares.

#include "ctdopt/ctd.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ctdopt {

enum class NormKind { Frobenius, SNorm };
enum class ReductionAlgorithm { ALS, Interpolative };

std::string to_string(NormKind n);
std::string to_string(ReductionAlgorithm a);
NormKind parse_norm(const std::string& s);
ReductionAlgorithm parse_algorithm(const std::string& s);

struct ReductionConfig {
  double epsilon = 1e-6;
  NormKind norm = NormKind::Frobenius;
  ReductionAlgorithm algorithm = ReductionAlgorithm::Interpolative;
  std::optional<Index> max_rank;
  int als_max_sweeps = 200;
  /// Relative residual change below which an ALS fit is considered stalled.
  /// Defaults to 1e-3 * epsilon.
  std::optional<double> als_stall_tol;
  /// Ridge added to the ALS normal equations, relative to trace(Z_j).
  double ridge = 1e-14;

  void validate() const;
  double stall_tol() const { return als_stall_tol.value_or(1e-3 * epsilon); }
};

struct ReductionResult {
  CTD ctd;
  Index input_rank = 0;
  /// ||U - V|| / ||U|| in the configured norm.
  double relative_error = 0.0;
  int sweeps = 0;
  bool tolerance_met = true;
  /// Interpolative path hit an indefinite Gram matrix and ALS took over.
  bool als_fallback = false;
  /// Frobenius tolerance below 1e-8: inner-product cancellation limits the
  /// attainable accuracy.
  bool precision_warning = false;

  Index rank() const { return ctd.rank(); }
};

struct RankOneApprox {
  double svalue = 0.0;
  std::vector<Eigen::VectorXd> factors;
  int sweeps = 0;

  CTD to_ctd() const;
};

/// Dispatches on cfg.algorithm. Never returns a rank above the input's; if
/// no smaller rank meets the tolerance the input comes back renormalized.
ReductionResult reduce(const CTD& u, const ReductionConfig& cfg);

ReductionResult interpolative_reduce(const CTD& u, const ReductionConfig& cfg);
ReductionResult als_reduce(const CTD& u, const ReductionConfig& cfg);

/// One ALS update of dimension `dim` of `approx` towards `target`.
CTD als_sweep(const CTD& target, const CTD& approx, Index dim, double ridge = 1e-14);

/// als_sweep over every dimension in order.
CTD als_pass(const CTD& target, const CTD& approx, double ridge = 1e-14);

/// Rank-1 ALS (higher-order power iteration). Starts from `start` when
/// given, otherwise from the term of u with the largest |<u, term>|.
RankOneApprox best_rank_one(const CTD& u, const std::optional<std::vector<Eigen::VectorXd>>& start = std::nullopt,
                            int max_sweeps = 500, double rel_tol = 1e-14);

/// s-value of the converged rank-1 approximation. A stationary value of the
/// rank-1 fit; it is not guaranteed to be the global maximum.
double s_norm(const CTD& u);

double tensor_norm(const CTD& u, NormKind n);
double norm_of_difference(const CTD& u, const CTD& v, NormKind n);

}  // namespace ctdopt
