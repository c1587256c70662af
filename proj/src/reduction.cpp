#include "ctdopt/reduction.hpp"

#include "ctdopt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

namespace ctdopt {

std::string to_string(NormKind n) { return n == NormKind::Frobenius ? "frobenius" : "snorm"; }
std::string to_string(ReductionAlgorithm a) { return a == ReductionAlgorithm::ALS ? "als" : "id"; }

NormKind parse_norm(const std::string& s) {
  if (s == "frobenius") return NormKind::Frobenius;
  if (s == "snorm") return NormKind::SNorm;
  throw ConfigError("unknown norm '" + s + "' (expected frobenius|snorm)");
}

ReductionAlgorithm parse_algorithm(const std::string& s) {
  if (s == "als") return ReductionAlgorithm::ALS;
  if (s == "id" || s == "interpolative") return ReductionAlgorithm::Interpolative;
  throw ConfigError("unknown reduction algorithm '" + s + "' (expected als|id)");
}

void ReductionConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("reduction epsilon must be > 0");
  if (max_rank && *max_rank < 1) throw ConfigError("max_rank must be >= 1");
  if (als_max_sweeps < 1) throw ConfigError("als_max_sweeps must be >= 1");
  if (als_stall_tol && !(*als_stall_tol > 0.0)) throw ConfigError("als_stall_tol must be > 0");
  if (ridge < 0.0) throw ConfigError("ridge must be >= 0");
}

CTD RankOneApprox::to_ctd() const {
  std::vector<Eigen::MatrixXd> f;
  for (const auto& x : factors) f.emplace_back(x);
  return CTD::from_terms(std::move(f), Eigen::VectorXd::Constant(1, svalue));
}

// ---------------------------------------------------------------------------
// Rank-1 fit and norms

namespace {

// Index of the term t_l (unit rank-1) maximizing |<u, t_l>|.
Index best_single_term(const CTD& u) {
  if (u.rank() <= 2048) {
    const Eigen::VectorXd proj = factor_gram(u) * u.svalues();
    Index best = 0;
    proj.cwiseAbs().maxCoeff(&best);
    return best;
  }
  Index best = 0;
  u.svalues().maxCoeff(&best);
  return best;
}

std::vector<Eigen::VectorXd> term_columns(const CTD& u, Index l) {
  std::vector<Eigen::VectorXd> x;
  for (Index j = 0; j < u.dims(); ++j) x.emplace_back(u.factor(j).col(l));
  return x;
}

}  // namespace

RankOneApprox best_rank_one(const CTD& u, const std::optional<std::vector<Eigen::VectorXd>>& start, int max_sweeps,
                            double rel_tol) {
  RankOneApprox out;
  const Index d = u.dims();
  const Index r = u.rank();
  if (r == 0) {
    for (Index j = 0; j < d; ++j) out.factors.push_back(Eigen::VectorXd::Unit(u.mode(j), 0));
    return out;
  }
  out.factors = start ? *start : term_columns(u, best_single_term(u));
  if (static_cast<Index>(out.factors.size()) != d) throw ShapeError("rank-1 start has wrong dimension count");
  for (Index j = 0; j < d; ++j) {
    auto& x = out.factors[static_cast<std::size_t>(j)];
    if (x.size() != u.mode(j)) throw ShapeError("rank-1 start has wrong mode size");
    const double n = x.norm();
    if (n > 0) x /= n;
  }

  // c(l, j) = <u_j^(l), x_j>
  Eigen::MatrixXd c(r, d);
  for (Index j = 0; j < d; ++j) c.col(j) = u.factor(j).transpose() * out.factors[static_cast<std::size_t>(j)];

  double sigma = 0.0;
  double prev = -1.0;
  Eigen::VectorXd coef(r);
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    out.sweeps = sweep;
    for (Index j = 0; j < d; ++j) {
      for (Index l = 0; l < r; ++l) {
        double p = u.svalues()[l];
        for (Index k = 0; k < d; ++k)
          if (k != j) p *= c(l, k);
        coef[l] = p;
      }
      Eigen::VectorXd y = u.factor(j) * coef;
      sigma = y.norm();
      if (sigma == 0.0) {
        out.svalue = 0.0;
        return out;
      }
      y /= sigma;
      c.col(j) = u.factor(j).transpose() * y;
      out.factors[static_cast<std::size_t>(j)] = std::move(y);
    }
    if (std::abs(sigma - prev) <= rel_tol * sigma) break;
    prev = sigma;
  }
  out.svalue = sigma;
  return out;
}

double s_norm(const CTD& u) { return best_rank_one(u).svalue; }

double tensor_norm(const CTD& u, NormKind n) { return n == NormKind::Frobenius ? frobenius_norm(u) : s_norm(u); }

double norm_of_difference(const CTD& u, const CTD& v, NormKind n) {
  check_same_shape(u, v);
  if (n == NormKind::Frobenius) {
    const double d2 = inner(u, u) + inner(v, v) - 2.0 * inner(u, v);
    return std::sqrt(std::max(0.0, d2));
  }
  return s_norm(add(u, scale(v, -1.0)));
}

// ---------------------------------------------------------------------------
// ALS

namespace {

// Cached Gram and cross-Gram matrices for fitting `approx` to `target`.
class AlsState {
 public:
  AlsState(const CTD& target, const CTD& approx, double ridge)
      : u_(target), ridge_(ridge), a_(approx.factors()), sv_(approx.svalues()) {
    check_same_shape(target, approx);
    for (Index j = 0; j < u_.dims(); ++j) {
      gram_.push_back(a_[static_cast<std::size_t>(j)].transpose() * a_[static_cast<std::size_t>(j)]);
      cross_.push_back(u_.factor(j).transpose() * a_[static_cast<std::size_t>(j)]);
    }
    norm_u2_ = inner(u_, u_);
  }

  void update(Index j) {
    const Index rv = sv_.size();
    if (rv == 0) return;
    Eigen::MatrixXd z = Eigen::MatrixXd::Ones(rv, rv);
    Eigen::MatrixXd p = Eigen::MatrixXd::Ones(u_.rank(), rv);
    for (Index k = 0; k < u_.dims(); ++k) {
      if (k == j) continue;
      z.array() *= gram_[static_cast<std::size_t>(k)].array();
      p.array() *= cross_[static_cast<std::size_t>(k)].array();
    }
    const Eigen::MatrixXd f = u_.factor(j) * (u_.svalues().asDiagonal() * p);
    z.diagonal().array() += ridge_ * z.trace();
    Eigen::LLT<Eigen::MatrixXd> llt(z);
    if (llt.info() != Eigen::Success)
      throw NumericalError("ALS normal equations singular in dimension " + std::to_string(j));
    Eigen::MatrixXd x = llt.solve(f.transpose()).transpose();
    if (!x.allFinite()) throw NumericalError("ALS normal equations singular in dimension " + std::to_string(j));
    auto& aj = a_[static_cast<std::size_t>(j)];
    for (Index l = 0; l < rv; ++l) {
      const double n = x.col(l).norm();
      if (n > 0.0) {
        aj.col(l) = x.col(l) / n;
        sv_[l] = n;
      } else {
        sv_[l] = 0.0;
      }
    }
    gram_[static_cast<std::size_t>(j)] = aj.transpose() * aj;
    cross_[static_cast<std::size_t>(j)] = u_.factor(j).transpose() * aj;
  }

  void pass() {
    for (Index j = 0; j < u_.dims(); ++j) update(j);
  }

  double residual() const {
    if (sv_.size() == 0) return std::sqrt(std::max(0.0, norm_u2_));
    Eigen::MatrixXd g = Eigen::MatrixXd::Ones(sv_.size(), sv_.size());
    Eigen::MatrixXd c = Eigen::MatrixXd::Ones(u_.rank(), sv_.size());
    for (Index k = 0; k < u_.dims(); ++k) {
      g.array() *= gram_[static_cast<std::size_t>(k)].array();
      c.array() *= cross_[static_cast<std::size_t>(k)].array();
    }
    const double r2 = norm_u2_ - 2.0 * u_.svalues().dot(c * sv_) + sv_.dot(g * sv_);
    return std::sqrt(std::max(0.0, r2));
  }

  CTD to_ctd() const { return CTD::from_terms(a_, sv_); }

 private:
  const CTD& u_;
  double ridge_;
  std::vector<Eigen::MatrixXd> a_;
  Eigen::VectorXd sv_;
  std::vector<Eigen::MatrixXd> gram_;
  std::vector<Eigen::MatrixXd> cross_;
  double norm_u2_ = 0.0;
};

struct Fit {
  CTD ctd;
  double error = 0.0;  // absolute, in the configured norm
  int sweeps = 0;
  bool ok = false;
};

Fit als_fit(const CTD& u, std::span<const Index> init_terms, const ReductionConfig& cfg, double norm_f,
            double threshold) {
  AlsState st(u, u.select_terms(init_terms), cfg.ridge);
  Fit fit;
  double prev = st.residual();
  for (int s = 0; s < cfg.als_max_sweeps; ++s) {
    st.pass();
    ++fit.sweeps;
    const double res = st.residual();
    if (cfg.norm == NormKind::Frobenius && res <= threshold) break;
    if (prev - res < cfg.stall_tol() * norm_f) break;
    prev = res;
  }
  fit.ctd = st.to_ctd();
  fit.error = norm_of_difference(u, fit.ctd, cfg.norm);
  fit.ok = fit.error <= threshold;
  return fit;
}

ReductionResult unreduced(const CTD& u, const ReductionConfig& cfg) {
  ReductionResult res;
  res.ctd = renormalize(u);
  res.input_rank = u.rank();
  res.relative_error = 0.0;
  res.precision_warning = cfg.norm == NormKind::Frobenius && cfg.epsilon < 1e-8;
  return res;
}

}  // namespace

CTD als_sweep(const CTD& target, const CTD& approx, Index dim, double ridge) {
  if (dim < 0 || dim >= target.dims()) throw RangeError("ALS dimension out of range");
  AlsState st(target, renormalize(approx), ridge);
  st.update(dim);
  return st.to_ctd();
}

CTD als_pass(const CTD& target, const CTD& approx, double ridge) {
  AlsState st(target, renormalize(approx), ridge);
  st.pass();
  return st.to_ctd();
}

// Rank-1 terms with |cosine| this close to 1 count as repeats.
constexpr double kParallelSlack = 1e-12;

ReductionResult als_reduce(const CTD& u, const ReductionConfig& cfg) {
  cfg.validate();
  const Index r = u.rank();
  if (r == 0) return unreduced(u, cfg);
  const double norm_f = frobenius_norm(u);
  const double norm_u = cfg.norm == NormKind::Frobenius ? norm_f : s_norm(u);
  const double threshold = cfg.epsilon * norm_u;

  ReductionResult res;
  res.input_rank = r;
  res.precision_warning = cfg.norm == NormKind::Frobenius && cfg.epsilon < 1e-8;
  if (norm_u == 0.0) {
    res.ctd = CTD::zero(u.modes());
    return res;
  }

  std::vector<Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return u.svalues()[a] > u.svalues()[b]; });
  {
    // Repeats of an earlier term go last; a start holding two copies of one
    // direction cannot reach a third.
    const Eigen::MatrixXd cosines = factor_gram(u);
    std::vector<Index> lead, repeats;
    for (Index l : order) {
      bool parallel = false;
      for (Index e : lead)
        if (std::abs(cosines(l, e)) >= 1.0 - kParallelSlack) {
          parallel = true;
          break;
        }
      (parallel ? repeats : lead).push_back(l);
    }
    order = std::move(lead);
    order.insert(order.end(), repeats.begin(), repeats.end());
  }
  const Index cap = std::min(r - 1, cfg.max_rank.value_or(r));

  int sweeps = 0;
  auto attempt = [&](Index k) {
    Fit f = als_fit(u, std::span<const Index>(order.data(), static_cast<std::size_t>(k)), cfg, norm_f, threshold);
    sweeps += f.sweeps;
    return f;
  };

  std::optional<Fit> best;
  Index last_fail = 0;
  Index success_k = 0;
  std::optional<Fit> last_attempt;
  for (Index k = 1; k <= cap; k = (k == cap) ? cap + 1 : std::min(2 * k, cap)) {
    Fit f = attempt(k);
    if (f.ok) {
      success_k = k;
      best = std::move(f);
      break;
    }
    last_fail = k;
    last_attempt = std::move(f);
  }

  if (best) {
    // Smallest successful rank between the last failure and the success.
    Index lo = last_fail + 1, hi = success_k;
    while (lo < hi) {
      const Index mid = lo + (hi - lo) / 2;
      Fit f = attempt(mid);
      if (f.ok) {
        hi = mid;
        best = std::move(f);
      } else {
        lo = mid + 1;
      }
    }
    res.ctd = best->ctd;
    res.relative_error = best->error / norm_u;
    res.sweeps = sweeps;
    return res;
  }

  if (cap < r - 1 || (cfg.max_rank && r > *cfg.max_rank)) {
    // Rank cap binds: best effort at the cap.
    res.ctd = last_attempt ? last_attempt->ctd : renormalize(u);
    res.relative_error = last_attempt ? last_attempt->error / norm_u : 0.0;
    res.tolerance_met = false;
    res.sweeps = sweeps;
    return res;
  }
  ReductionResult full = unreduced(u, cfg);
  full.sweeps = sweeps;
  return full;
}

// ---------------------------------------------------------------------------
// Interpolative (skeleton) reduction

namespace {

struct PivotedCholesky {
  std::vector<Index> pivots;
  Eigen::MatrixXd l;                 // r x k
  std::vector<double> z;             // forward-substituted right-hand side
  std::vector<double> err2;          // err2[k] = squared Frobenius error with k pivots
  bool indefinite = false;
  // Stopped because every remaining term lies numerically in the span.
  bool exhausted = false;

  // Weights of the k-pivot skeleton fit: G_SS alpha = b_S.
  Eigen::VectorXd alpha(std::size_t k) const {
    Eigen::VectorXd a(static_cast<Index>(k));
    for (std::size_t ii = k; ii-- > 0;) {
      double v = z[ii];
      for (std::size_t c = ii + 1; c < k; ++c) v -= l(pivots[c], static_cast<Index>(ii)) * a[static_cast<Index>(c)];
      a[static_cast<Index>(ii)] = v / l(pivots[ii], static_cast<Index>(ii));
    }
    return a;
  }
};

// Terms whose residual diagonal falls below this fraction of their own
// squared norm are numerically inside the current skeleton span.
constexpr double kDependentDiag = 1e-14;
// Negative residual diagonal beyond this relative size marks the Gram matrix
// as indefinite.
constexpr double kIndefiniteDiag = 1e-8;
// Squared residuals below this fraction of |U|^2 are rounding noise.
constexpr double kRoundingFloor = 1e-13;
// Largest input rank whose term Gram matrix interpolative reduction will form.
constexpr Index kMaxGramRank = Index{1} << 14;

PivotedCholesky pivoted_cholesky(const Eigen::MatrixXd& g, const Eigen::VectorXd& b, double norm2, double stop_err2,
                                 Index max_pivots) {
  const Index r = g.rows();
  PivotedCholesky pc;
  pc.l.resize(r, std::min<Index>({r, max_pivots, Index{64}}));
  Eigen::VectorXd diag = g.diagonal();
  std::vector<char> used(static_cast<std::size_t>(r), 0);
  double zz = 0.0;
  pc.err2.push_back(norm2);
  for (Index k = 0; k < std::min<Index>(r, max_pivots); ++k) {
    if (pc.err2.back() <= stop_err2) break;
    Index p = -1;
    double best = 0.0;
    for (Index i = 0; i < r; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double gi = g(i, i);
      if (diag[i] < -kIndefiniteDiag * gi) pc.indefinite = true;
      if (diag[i] <= kDependentDiag * gi) continue;
      if (diag[i] > best) {  // strict: lowest index wins ties
        best = diag[i];
        p = i;
      }
    }
    if (p < 0) {
      pc.exhausted = true;
      break;
    }
    if (k == pc.l.cols()) pc.l.conservativeResize(r, std::min<Index>({r, max_pivots, 2 * k}));
    Eigen::VectorXd col = g.col(p);
    if (k > 0) col.noalias() -= pc.l.leftCols(k) * pc.l.row(p).head(k).transpose();
    col /= std::sqrt(diag[p]);
    pc.l.col(k) = col;
    diag.array() -= col.array().square();
    used[static_cast<std::size_t>(p)] = 1;
    double zk = b[p];
    for (Index i = 0; i < k; ++i) zk -= pc.l(p, i) * pc.z[static_cast<std::size_t>(i)];
    zk /= pc.l(p, k);
    pc.z.push_back(zk);
    zz += zk * zk;
    pc.pivots.push_back(p);
    pc.err2.push_back(norm2 - zz);
  }
  pc.l.conservativeResize(r, static_cast<Index>(pc.pivots.size()));
  return pc;
}

CTD skeleton_ctd(const CTD& u, const PivotedCholesky& pc, std::size_t k) {
  const Eigen::VectorXd a = pc.alpha(k);
  std::vector<Index> sel(pc.pivots.begin(), pc.pivots.begin() + static_cast<std::ptrdiff_t>(k));
  CTD s = u.select_terms(sel);
  std::vector<Eigen::MatrixXd> f = s.factors();
  Eigen::VectorXd w = s.svalues().cwiseProduct(a);
  return CTD::from_terms(std::move(f), std::move(w));
}

// Rank-1 start for s_norm(U - V_k): the term of U with the largest
// |<U - V_k, t_l>|, all read off the Gram matrix.
std::vector<Eigen::VectorXd> difference_start(const CTD& u, const Eigen::MatrixXd& g, const Eigen::VectorXd& b,
                                              const PivotedCholesky& pc, std::size_t k) {
  Eigen::VectorXd resid = b;
  const Eigen::VectorXd a = pc.alpha(k);
  for (std::size_t i = 0; i < k; ++i) resid -= a[static_cast<Index>(i)] * g.col(pc.pivots[i]);
  Index best = 0;
  resid.cwiseQuotient(u.svalues()).cwiseAbs().maxCoeff(&best);
  return term_columns(u, best);
}

}  // namespace

ReductionResult interpolative_reduce(const CTD& u, const ReductionConfig& cfg) {
  cfg.validate();
  const Index r = u.rank();
  if (r == 0) return unreduced(u, cfg);

  if (r > kMaxGramRank)
    throw CapacityError("interpolative reduction of rank " + std::to_string(r) + " exceeds guard " +
                        std::to_string(kMaxGramRank));
  const Eigen::VectorXd& s = u.svalues();
  const Eigen::MatrixXd g = s.asDiagonal() * factor_gram(u) * s.asDiagonal();
  const Eigen::VectorXd b = g.rowwise().sum();
  const double norm2 = b.sum();
  const double norm_f = std::sqrt(std::max(0.0, norm2));

  double norm_u = norm_f;
  if (cfg.norm == NormKind::SNorm) {
    Index start = 0;
    b.cwiseQuotient(s).cwiseAbs().maxCoeff(&start);
    norm_u = best_rank_one(u, term_columns(u, start)).svalue;
  }
  const double threshold = cfg.epsilon * norm_u;

  ReductionResult res;
  res.input_rank = r;
  res.precision_warning = cfg.norm == NormKind::Frobenius && cfg.epsilon < 1e-8;
  if (norm_u == 0.0 || cfg.epsilon >= 1.0) {
    res.ctd = CTD::zero(u.modes());
    res.relative_error = norm_u == 0.0 ? 0.0 : 1.0;
    return res;
  }

  const Index cap = std::min(r - 1, cfg.max_rank.value_or(r));
  // The Frobenius error bounds the s-norm error, so stopping on it is
  // sufficient for either norm.
  const PivotedCholesky pc = pivoted_cholesky(g, b, norm2, threshold * threshold, r);

  if (pc.indefinite) {
    ReductionResult fb = als_reduce(u, cfg);
    fb.als_fallback = true;
    return fb;
  }

  const std::size_t npiv = pc.pivots.size();
  auto frob_ok = [&](std::size_t k) { return pc.err2[k] <= threshold * threshold; };

  std::optional<std::size_t> chosen;
  std::optional<double> snorm_chosen_err;
  if (cfg.norm == NormKind::Frobenius) {
    for (std::size_t k = 1; k <= npiv; ++k)
      if (frob_ok(k)) {
        chosen = k;
        break;
      }
  } else {
    std::map<std::size_t, double> cache;
    auto snorm_err = [&](std::size_t k) {
      if (auto it = cache.find(k); it != cache.end()) return it->second;
      const CTD v = skeleton_ctd(u, pc, k);
      const double e = best_rank_one(add(u, scale(v, -1.0)), difference_start(u, g, b, pc, k)).svalue;
      cache[k] = e;
      return e;
    };
    std::size_t hi = npiv;
    bool hi_ok = false;
    for (std::size_t k = 1; k <= npiv; ++k)
      if (frob_ok(k)) {
        hi = k;
        hi_ok = true;
        break;
      }
    if (!hi_ok && npiv > 0) hi_ok = snorm_err(npiv) <= threshold;
    if (hi_ok) {
      std::size_t lo = 1;
      while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (snorm_err(mid) <= threshold)
          hi = mid;
        else
          lo = mid + 1;
      }
      chosen = hi;
      snorm_chosen_err = snorm_err(hi);
    }
  }

  if (chosen && static_cast<Index>(*chosen) <= cap) {
    res.ctd = skeleton_ctd(u, pc, *chosen);
    res.relative_error =
        (snorm_chosen_err ? *snorm_chosen_err : norm_of_difference(u, res.ctd, cfg.norm)) / norm_u;
    return res;
  }
  if (cap < r - 1 || (cfg.max_rank && r > *cfg.max_rank)) {
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cap), npiv);
    res.ctd = k > 0 ? skeleton_ctd(u, pc, k) : CTD::zero(u.modes());
    res.relative_error = norm_of_difference(u, res.ctd, cfg.norm) / norm_u;
    res.tolerance_met = res.relative_error <= cfg.epsilon;
    return res;
  }
  if (pc.exhausted && static_cast<Index>(npiv) <= cap && pc.err2[npiv] <= kRoundingFloor * norm2) {
    // The tolerance sits below what the Gram recurrence can resolve; the
    // dropped terms are in the span up to rounding.
    res.ctd = skeleton_ctd(u, pc, npiv);
    res.relative_error = std::sqrt(std::max(0.0, pc.err2[npiv])) / norm_f;
    res.tolerance_met = false;
    res.precision_warning = true;
    return res;
  }
  return unreduced(u, cfg);
}

ReductionResult reduce(const CTD& u, const ReductionConfig& cfg) {
  return cfg.algorithm == ReductionAlgorithm::ALS ? als_reduce(u, cfg) : interpolative_reduce(u, cfg);
}

}  // namespace ctdopt
