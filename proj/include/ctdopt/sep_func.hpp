#pragma once

// Separated representations of multivariate functions and the pipeline that
// turns one into a CTD, locates its maximum with the squaring search, and
// polishes the result with a compass search on the exact function.
//
// The worked example is Ackley's function. Its radial factor
// exp(-(b/sqrt(d)) |x|) is expanded in Gaussians, which separate across
// coordinates; its cosine factor is already a product of univariate terms.

#include "ctdopt/ctd.hpp"
#include "ctdopt/max_entry.hpp"
#include "ctdopt/reduction.hpp"

#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace ctdopt {

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  static Box cube(Index d, double lo, double hi);
  static Box centered(std::span<const double> center, double half_width);
  Index dims() const { return static_cast<Index>(lo.size()); }
  bool contains(std::span<const double> x, double slack = 0.0) const;
};

using Univariate = std::function<double(double)>;
using Objective = std::function<double(std::span<const double>)>;

/// sum_l s_l prod_j u_j^(l)(x_j) on a box.
class SeparatedFunction {
 public:
  SeparatedFunction(Index dims, Box box);

  void add_term(double weight, std::vector<Univariate> factors);

  Index dims() const { return dims_; }
  Index rank() const { return static_cast<Index>(weights_.size()); }
  const Box& box() const { return box_; }
  double weight(Index l) const { return weights_[static_cast<std::size_t>(l)]; }
  const Univariate& factor(Index l, Index j) const {
    return factors_[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
  }

  double operator()(std::span<const double> x) const;

 private:
  Index dims_;
  Box box_;
  std::vector<double> weights_;
  std::vector<std::vector<Univariate>> factors_;
};

/// Per-dimension strictly increasing sample coordinates inside a box.
class Grid {
 public:
  Grid(std::vector<std::vector<double>> axes, Box box);

  Index dims() const { return static_cast<Index>(axes_.size()); }
  const std::vector<double>& axis(Index j) const { return axes_[static_cast<std::size_t>(j)]; }
  std::vector<Index> modes() const;
  const Box& box() const { return box_; }

 private:
  std::vector<std::vector<double>> axes_;
  Box box_;
};

/// Trapezoidal discretization of
///   e^{-kx} = (k / (2 sqrt(pi))) int exp(-(k^2/4) e^{-s} - x^2 e^{s} - s/2) ds,
/// k = b / sqrt(d), on nodes s_j = s_start + j h, j = 0..R:
///   G_e(x) = sum_j w_j exp(-x^2 e^{s_j}).
struct GaussianExpansion {
  double b = 0.2;
  double d = 10.0;
  double epsilon = 1e-8;
  double delta = 3e-6;
  double x_max = 1.0;
  double h = 1.0;
  double s_start = 0.0;
  int R = 0;

  int terms() const { return R + 1; }
  double node(int j) const { return s_start + j * h; }
  double weight(int j) const;
  double operator()(double x) const;
  /// exp(-(b / sqrt(d)) x)
  double target(double x) const;
};

/// Halves h from 1 and widens the node range until the expansion is
/// certified to eps on [delta, x_max]. Throws NumericalError past 10^4 terms.
GaussianExpansion build_gaussian_expansion(double b, double d, double eps, double delta, double x_max);

/// max over probes of |G_e(x) - e^{-(b/sqrt d) x}|.
double certify_expansion(const GaussianExpansion& g, std::span<const double> probes);

std::vector<double> log_spaced(double lo, double hi, std::size_t n);

struct AckleyParams {
  Index d = 10;
  double a = 20.0;
  double b = 0.2;
  double c = 2.0 * std::numbers::pi;
  /// Location of the maximum; empty means the origin.
  std::vector<double> center;

  void validate() const;
  double max_value() const { return a + std::numbers::e; }
  double center_at(Index i) const { return center.empty() ? 0.0 : center[static_cast<std::size_t>(i)]; }
};

double ackley_eval(const AckleyParams& p, std::span<const double> x);
std::vector<double> ackley_gradient(const AckleyParams& p, std::span<const double> x);

/// (R+2)-term separated approximation: a w_j prod_i exp(-(x_i - p_i)^2 e^{s_j})
/// for every node, plus prod_i exp(cos(c (x_i - p_i)) / d).
SeparatedFunction ackley_separated(const AckleyParams& p, const GaussianExpansion& g, const Box& box);

/// Samples for the Gaussian part, as offsets from the center. A stencil of
/// `points_per_gaussian` equally spaced points on [-halfwidth, halfwidth]
/// is mapped onto each Gaussian (multiplied by e^{-s_j/2}); going from the
/// sharpest Gaussian outward, only points beyond the radius already covered
/// are kept.
std::vector<double> build_radial_grid(const GaussianExpansion& g, int points_per_gaussian = 10,
                                      double stencil_halfwidth = 3.0);

/// Uniform offsets with spacing (2 pi / c) / samples_per_oscillation,
/// symmetric about 0, covering [-half_width, half_width].
std::vector<double> build_cosine_grid(double c, double half_width, int samples_per_oscillation = 16);

struct MergedAxis {
  std::vector<double> coords;
  /// Radial samples are kept for |x| <= radius, cosine samples beyond.
  double crossover_radius = 0.0;
  std::size_t radial_kept = 0;
  std::size_t cosine_kept = 0;
  std::size_t count_before_dedup = 0;
};

MergedAxis merge_grids(std::span<const double> radial, std::span<const double> cosine);

/// Evaluates every univariate factor on its axis; one CTD term per term of f.
CTD sample_to_ctd(const SeparatedFunction& f, const Grid& grid);

std::vector<double> index_to_point(const Grid& grid, const MultiIndex& i);

struct CompassOptions {
  double step0 = 0.1;
  double shrink = 0.5;
  double tol = 1e-10;
  std::size_t max_evaluations = 10'000'000;
};

struct CompassResult {
  std::vector<double> point;
  double value = 0.0;
  std::size_t evaluations = 0;
  int shrinks = 0;
  /// Objective value after each accepted move, starting with f(x0).
  std::vector<double> accepted_values;
};

/// Maximizes f by polling +-step along each coordinate, accepting the first
/// improvement in cyclic order and shrinking the step after a full
/// unsuccessful poll. Stops once step < tol.
CompassResult compass_search(const Objective& f, std::vector<double> x0, const CompassOptions& opt = {});

struct OptimizeOptions {
  ReductionConfig initial_reduction{};
  MaxEntrySearchConfig search{};
  CompassOptions compass{};
  /// Function refined by compass search; defaults to the separated function.
  Objective objective;
};

struct OptimizationReport {
  Index sampled_rank = 0;
  Index reduced_rank = 0;
  double initial_reduction_error = 0.0;
  MaxEntryTrace trace;
  MultiIndex tensor_index;
  std::vector<double> tensor_point;
  double tensor_entry = 0.0;     // CTD entry at tensor_index
  double tensor_objective = 0.0; // objective at tensor_point
  CompassResult refined;
};

/// sample -> reduce -> squaring search -> grid point -> compass search.
OptimizationReport optimize_function(const SeparatedFunction& f, const Grid& grid, const OptimizeOptions& opt);

/// Everything needed to run the Ackley example.
struct AckleyProblemConfig {
  AckleyParams params{};
  double half_width = 32.768;
  double expansion_eps = 1e-8;
  double expansion_delta = 3e-6;
  int points_per_gaussian = 10;
  double stencil_halfwidth = 3.0;
  int samples_per_oscillation = 16;
};

struct AckleyProblem {
  AckleyParams params;
  Box box;
  GaussianExpansion expansion;
  SeparatedFunction function;
  Grid grid;
  MergedAxis axis;  // offsets shared by every dimension
  std::size_t radial_count = 0;
  std::size_t cosine_count = 0;
};

AckleyProblem build_ackley_problem(const AckleyProblemConfig& cfg);

}  // namespace ctdopt
