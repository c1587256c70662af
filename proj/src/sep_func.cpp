#include "ctdopt/sep_func.hpp"

#include "ctdopt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ctdopt {

// ---------------------------------------------------------------------------
// Box, SeparatedFunction, Grid

Box Box::cube(Index d, double lo, double hi) {
  if (!(lo < hi)) throw DomainError("box needs lo < hi");
  return {std::vector<double>(static_cast<std::size_t>(d), lo), std::vector<double>(static_cast<std::size_t>(d), hi)};
}

Box Box::centered(std::span<const double> center, double half_width) {
  if (!(half_width > 0.0)) throw DomainError("box half-width must be positive");
  Box b;
  for (double c : center) {
    b.lo.push_back(c - half_width);
    b.hi.push_back(c + half_width);
  }
  return b;
}

bool Box::contains(std::span<const double> x, double slack) const {
  if (static_cast<Index>(x.size()) != dims()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
  return true;
}

SeparatedFunction::SeparatedFunction(Index dims, Box box) : dims_(dims), box_(std::move(box)) {
  if (dims_ < 1) throw ShapeError("separated function needs at least one dimension");
  if (box_.dims() != dims_) throw ShapeError("box dimension does not match function dimension");
}

void SeparatedFunction::add_term(double weight, std::vector<Univariate> factors) {
  if (static_cast<Index>(factors.size()) != dims_) throw ShapeError("term needs one factor per dimension");
  weights_.push_back(weight);
  factors_.push_back(std::move(factors));
}

double SeparatedFunction::operator()(std::span<const double> x) const {
  if (static_cast<Index>(x.size()) != dims_) throw ShapeError("point has wrong dimension");
  double sum = 0.0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    double p = weights_[l];
    for (std::size_t j = 0; j < x.size(); ++j) p *= factors_[l][j](x[j]);
    sum += p;
  }
  return sum;
}

Grid::Grid(std::vector<std::vector<double>> axes, Box box) : axes_(std::move(axes)), box_(std::move(box)) {
  if (axes_.empty()) throw ShapeError("grid needs at least one dimension");
  if (box_.dims() != dims()) throw ShapeError("grid box dimension mismatch");
  for (std::size_t j = 0; j < axes_.size(); ++j) {
    const auto& a = axes_[j];
    if (a.empty()) throw ShapeError("grid axis " + std::to_string(j) + " is empty");
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i > 0 && !(a[i] > a[i - 1])) throw DomainError("grid axis " + std::to_string(j) + " is not strictly increasing");
      if (a[i] < box_.lo[j] || a[i] > box_.hi[j]) throw DomainError("grid axis " + std::to_string(j) + " leaves the box");
    }
  }
}

std::vector<Index> Grid::modes() const {
  std::vector<Index> m;
  for (const auto& a : axes_) m.push_back(static_cast<Index>(a.size()));
  return m;
}

// ---------------------------------------------------------------------------
// Gaussian expansion of the radial exponential

double GaussianExpansion::weight(int j) const {
  const double k = b / std::sqrt(d);
  const double s = node(j);
  return h * k / (2.0 * std::sqrt(std::numbers::pi)) * std::exp(-0.25 * k * k * std::exp(-s) - 0.5 * s);
}

double GaussianExpansion::operator()(double x) const {
  double sum = 0.0;
  for (int j = 0; j <= R; ++j) sum += weight(j) * std::exp(-x * x * std::exp(node(j)));
  return sum;
}

double GaussianExpansion::target(double x) const { return std::exp(-b / std::sqrt(d) * x); }

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) throw DomainError("log_spaced needs 0 < lo < hi and n >= 2");
  std::vector<double> x(n);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  x.front() = lo;
  x.back() = hi;
  return x;
}

double certify_expansion(const GaussianExpansion& g, std::span<const double> probes) {
  std::vector<double> w(static_cast<std::size_t>(g.terms())), e(static_cast<std::size_t>(g.terms()));
  for (int j = 0; j <= g.R; ++j) {
    w[static_cast<std::size_t>(j)] = g.weight(j);
    e[static_cast<std::size_t>(j)] = std::exp(g.node(j));
  }
  double worst = 0.0;
  for (double x : probes) {
    double sum = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) sum += w[j] * std::exp(-x * x * e[j]);
    worst = std::max(worst, std::abs(sum - g.target(x)));
  }
  return worst;
}

GaussianExpansion build_gaussian_expansion(double b, double d, double eps, double delta, double x_max) {
  if (!(b > 0.0) || !(d > 0.0)) throw DomainError("expansion needs b > 0 and d > 0");
  if (!(eps > 0.0) || !(delta > 0.0) || !(x_max > delta)) throw DomainError("expansion needs eps > 0, 0 < delta < x_max");
  constexpr int kMaxTerms = 10'000;
  constexpr double kWindow = 120.0;  // nodes searched in [-kWindow, kWindow]
  const std::vector<double> probes = log_spaced(delta, x_max, 100'000);

  for (double h = 1.0;; h *= 0.5) {
    const int n = static_cast<int>(std::ceil(kWindow / h));
    if (2 * n + 1 > 4 * kMaxTerms) break;
    GaussianExpansion g{b, d, eps, delta, x_max, h, -n * h, 2 * n};
    // Largest value each term takes on [delta, x_max] is at x = delta.
    std::vector<double> peak(static_cast<std::size_t>(2 * n + 1));
    for (int j = 0; j <= 2 * n; ++j) {
      const double v = g.weight(j) * std::exp(-delta * delta * std::exp(g.node(j)));
      peak[static_cast<std::size_t>(j)] = std::isfinite(v) ? v : 0.0;
    }
    // Widen the kept node range outward in steps until certified.
    for (double tail : {0.25, 1.0 / 64.0, 1.0 / 4096.0}) {
      int lo = 0, hi = 2 * n;
      double dropped = 0.0;
      while (lo < hi && dropped + peak[static_cast<std::size_t>(lo)] <= tail * eps) dropped += peak[static_cast<std::size_t>(lo++)];
      dropped = 0.0;
      while (hi > lo && dropped + peak[static_cast<std::size_t>(hi)] <= tail * eps) dropped += peak[static_cast<std::size_t>(hi--)];
      GaussianExpansion cand{b, d, eps, delta, x_max, h, g.node(lo), hi - lo};
      if (cand.terms() > kMaxTerms) break;
      if (certify_expansion(cand, probes) <= eps) return cand;
    }
  }
  throw NumericalError("Gaussian expansion could not be certified within 10^4 terms");
}

// ---------------------------------------------------------------------------
// Ackley

void AckleyParams::validate() const {
  if (d < 1) throw DomainError("Ackley needs d >= 1");
  if (!(a > 0.0) || !(b >= 0.0) || !(c > 0.0)) throw DomainError("Ackley needs a > 0, b >= 0, c > 0");
  if (!center.empty() && static_cast<Index>(center.size()) != d) throw ShapeError("Ackley center has wrong dimension");
}

double ackley_eval(const AckleyParams& p, std::span<const double> x) {
  if (static_cast<Index>(x.size()) != p.d) throw ShapeError("Ackley point has wrong dimension");
  double r2 = 0.0, cs = 0.0;
  for (Index i = 0; i < p.d; ++i) {
    const double t = x[static_cast<std::size_t>(i)] - p.center_at(i);
    r2 += t * t;
    cs += std::cos(p.c * t);
  }
  const double dd = static_cast<double>(p.d);
  return p.a * std::exp(-p.b * std::sqrt(r2 / dd)) + std::exp(cs / dd);
}

std::vector<double> ackley_gradient(const AckleyParams& p, std::span<const double> x) {
  if (static_cast<Index>(x.size()) != p.d) throw ShapeError("Ackley point has wrong dimension");
  const double dd = static_cast<double>(p.d);
  double r2 = 0.0, cs = 0.0;
  for (Index i = 0; i < p.d; ++i) {
    const double t = x[static_cast<std::size_t>(i)] - p.center_at(i);
    r2 += t * t;
    cs += std::cos(p.c * t);
  }
  const double rms = std::sqrt(r2 / dd);
  const double radial = p.a * std::exp(-p.b * rms);
  const double osc = std::exp(cs / dd);
  std::vector<double> g(static_cast<std::size_t>(p.d));
  for (Index i = 0; i < p.d; ++i) {
    const double t = x[static_cast<std::size_t>(i)] - p.center_at(i);
    const double dr = rms > 0.0 ? -p.b * radial * t / (dd * rms) : 0.0;
    g[static_cast<std::size_t>(i)] = dr - osc * p.c * std::sin(p.c * t) / dd;
  }
  return g;
}

SeparatedFunction ackley_separated(const AckleyParams& p, const GaussianExpansion& g, const Box& box) {
  p.validate();
  SeparatedFunction f(p.d, box);
  for (int j = 0; j <= g.R; ++j) {
    const double e = std::exp(g.node(j));
    std::vector<Univariate> fac;
    for (Index i = 0; i < p.d; ++i) {
      const double ci = p.center_at(i);
      fac.emplace_back([e, ci](double x) { return std::exp(-(x - ci) * (x - ci) * e); });
    }
    f.add_term(p.a * g.weight(j), std::move(fac));
  }
  std::vector<Univariate> fac;
  const double dd = static_cast<double>(p.d);
  for (Index i = 0; i < p.d; ++i) {
    const double ci = p.center_at(i);
    const double c = p.c;
    fac.emplace_back([c, ci, dd](double x) { return std::exp(std::cos(c * (x - ci)) / dd); });
  }
  f.add_term(1.0, std::move(fac));
  return f;
}

// ---------------------------------------------------------------------------
// Sampling

std::vector<double> build_radial_grid(const GaussianExpansion& g, int points_per_gaussian, double stencil_halfwidth) {
  if (points_per_gaussian < 2) throw DomainError("need at least two points per Gaussian");
  if (!(stencil_halfwidth > 0.0)) throw DomainError("stencil half-width must be positive");
  std::vector<double> stencil(static_cast<std::size_t>(points_per_gaussian));
  for (int i = 0; i < points_per_gaussian; ++i)
    stencil[static_cast<std::size_t>(i)] = -stencil_halfwidth + 2.0 * stencil_halfwidth * i / (points_per_gaussian - 1);

  std::vector<double> pts;
  double covered = 0.0;
  bool first = true;
  // Sharpest Gaussian (largest node) first.
  for (int j = g.R; j >= 0; --j) {
    const double scale = std::exp(-0.5 * g.node(j));
    for (double t : stencil) {
      const double x = t * scale;
      if (first || std::abs(x) > covered) pts.push_back(x);
    }
    covered = std::max(covered, stencil_halfwidth * scale);
    first = false;
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

std::vector<double> build_cosine_grid(double c, double half_width, int samples_per_oscillation) {
  if (!(c > 0.0) || !(half_width > 0.0) || samples_per_oscillation < 1)
    throw DomainError("cosine grid needs c > 0, half_width > 0, samples >= 1");
  const double spacing = 2.0 * std::numbers::pi / c / samples_per_oscillation;
  const auto n = static_cast<long>(std::floor(half_width / spacing + 1e-9));
  std::vector<double> pts;
  for (long i = -n; i <= n; ++i) pts.push_back(static_cast<double>(i) * spacing);
  return pts;
}

MergedAxis merge_grids(std::span<const double> radial, std::span<const double> cosine) {
  MergedAxis m;
  // Cosine spacing: the smallest gap of the uniform grid.
  double hc = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < cosine.size(); ++i) hc = std::min(hc, cosine[i] - cosine[i - 1]);

  std::vector<double> pos;
  for (double x : radial)
    if (x > 0.0) pos.push_back(x);
  std::sort(pos.begin(), pos.end());

  // Walk outward; the first gap coarser than the cosine spacing marks the
  // crossover. The gap across the origin counts as the first one.
  double radius = pos.empty() ? 0.0 : pos.back();
  if (!pos.empty() && 2.0 * pos.front() > hc) {
    radius = 0.0;
  } else {
    for (std::size_t i = 0; i + 1 < pos.size(); ++i)
      if (pos[i + 1] - pos[i] > hc) {
        radius = pos[i];
        break;
      }
  }
  m.crossover_radius = radius;

  std::vector<double> all;
  if (radius > 0.0)
    for (double x : radial)
      if (std::abs(x) <= radius) {
        all.push_back(x);
        ++m.radial_kept;
      }
  for (double x : cosine)
    if (radius == 0.0 || std::abs(x) > radius) {
      all.push_back(x);
      ++m.cosine_kept;
    }
  m.count_before_dedup = all.size();
  std::sort(all.begin(), all.end());
  for (double x : all)
    if (m.coords.empty() || x - m.coords.back() > 1e-12) m.coords.push_back(x);
  return m;
}

CTD sample_to_ctd(const SeparatedFunction& f, const Grid& grid) {
  if (f.dims() != grid.dims()) throw ShapeError("function and grid dimensions differ");
  const Index r = f.rank();
  if (r == 0) return CTD::zero(grid.modes());
  std::vector<Eigen::MatrixXd> fac;
  for (Index j = 0; j < f.dims(); ++j) {
    const auto& ax = grid.axis(j);
    Eigen::MatrixXd m(static_cast<Index>(ax.size()), r);
    for (Index l = 0; l < r; ++l)
      for (std::size_t i = 0; i < ax.size(); ++i) m(static_cast<Index>(i), l) = f.factor(l, j)(ax[i]);
    fac.push_back(std::move(m));
  }
  Eigen::VectorXd w(r);
  for (Index l = 0; l < r; ++l) w[l] = f.weight(l);
  return CTD::from_terms(std::move(fac), std::move(w));
}

std::vector<double> index_to_point(const Grid& grid, const MultiIndex& i) {
  if (static_cast<Index>(i.size()) != grid.dims()) throw RangeError("multi-index has wrong length");
  std::vector<double> x(i.size());
  for (std::size_t j = 0; j < i.size(); ++j) {
    const auto& ax = grid.axis(static_cast<Index>(j));
    if (i[j] < 0 || i[j] >= static_cast<Index>(ax.size())) throw RangeError("grid index out of range");
    x[j] = ax[static_cast<std::size_t>(i[j])];
  }
  return x;
}

// ---------------------------------------------------------------------------
// Compass search

CompassResult compass_search(const Objective& f, std::vector<double> x0, const CompassOptions& opt) {
  if (!(opt.step0 > 0.0) || !(opt.shrink > 0.0 && opt.shrink < 1.0) || !(opt.tol > 0.0))
    throw DomainError("compass search needs step0 > 0, 0 < shrink < 1, tol > 0");
  CompassResult res;
  res.point = std::move(x0);
  res.value = f(res.point);
  res.evaluations = 1;
  res.accepted_values.push_back(res.value);
  const std::size_t n = res.point.size();
  const std::size_t ndir = 2 * n;
  double step = opt.step0;
  std::size_t dir = 0;  // next direction to poll
  std::vector<double> y;
  while (step >= opt.tol && res.evaluations < opt.max_evaluations) {
    bool improved = false;
    for (std::size_t tried = 0; tried < ndir && res.evaluations < opt.max_evaluations; ++tried) {
      const std::size_t i = dir / 2;
      const double sign = (dir % 2 == 0) ? 1.0 : -1.0;
      dir = (dir + 1) % ndir;
      y = res.point;
      y[i] += sign * step;
      const double fy = f(y);
      ++res.evaluations;
      if (fy > res.value) {
        res.point = y;
        res.value = fy;
        res.accepted_values.push_back(fy);
        improved = true;
        break;
      }
    }
    if (!improved) {
      step *= opt.shrink;
      ++res.shrinks;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Pipeline

OptimizationReport optimize_function(const SeparatedFunction& f, const Grid& grid, const OptimizeOptions& opt) {
  OptimizationReport rep;
  const CTD sampled = sample_to_ctd(f, grid);
  rep.sampled_rank = sampled.rank();
  ReductionResult red = reduce(sampled, opt.initial_reduction);
  rep.reduced_rank = red.rank();
  rep.initial_reduction_error = red.relative_error;

  rep.trace = find_max_entries(red.ctd, opt.search);
  if (rep.trace.candidates.empty()) throw NumericalError("maximum-entry search produced no candidates");
  const Candidate& best = rep.trace.candidates.front();
  rep.tensor_index = best.index;
  rep.tensor_entry = best.value;
  rep.tensor_point = index_to_point(grid, best.index);

  const Objective objective = opt.objective ? opt.objective : Objective([&f](std::span<const double> x) { return f(x); });
  rep.tensor_objective = objective(rep.tensor_point);
  rep.refined = compass_search(objective, rep.tensor_point, opt.compass);
  return rep;
}

AckleyProblem build_ackley_problem(const AckleyProblemConfig& cfg) {
  const AckleyParams& p = cfg.params;
  p.validate();
  std::vector<double> center(static_cast<std::size_t>(p.d));
  for (Index i = 0; i < p.d; ++i) center[static_cast<std::size_t>(i)] = p.center_at(i);
  Box box = Box::centered(center, cfg.half_width);

  // The radial variable |x - p| ranges over [0, half_width * sqrt(d)].
  const double x_max = cfg.half_width * std::sqrt(static_cast<double>(p.d));
  GaussianExpansion g =
      build_gaussian_expansion(p.b, static_cast<double>(p.d), cfg.expansion_eps, cfg.expansion_delta, x_max);

  const auto radial = build_radial_grid(g, cfg.points_per_gaussian, cfg.stencil_halfwidth);
  const auto cosine = build_cosine_grid(p.c, cfg.half_width, cfg.samples_per_oscillation);
  MergedAxis axis = merge_grids(radial, cosine);

  std::vector<std::vector<double>> axes;
  for (Index i = 0; i < p.d; ++i) {
    std::vector<double> a;
    for (double t : axis.coords) {
      const double x = center[static_cast<std::size_t>(i)] + t;
      if (x >= box.lo[static_cast<std::size_t>(i)] && x <= box.hi[static_cast<std::size_t>(i)]) a.push_back(x);
    }
    axes.push_back(std::move(a));
  }
  Grid grid(std::move(axes), box);
  SeparatedFunction f = ackley_separated(p, g, box);
  return AckleyProblem{p, std::move(box), g, std::move(f), std::move(grid), std::move(axis), radial.size(), cosine.size()};
}

}  // namespace ctdopt
