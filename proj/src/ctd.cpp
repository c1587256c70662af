#include "ctdopt/ctd.hpp"

#include "ctdopt/errors.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace ctdopt {

namespace {

// Columns with norm below this are treated as exactly zero.
constexpr double kZeroColumnNorm = 1e-300;
constexpr double kFlushBelow = 1e-150;
constexpr double kUnitSlack = 8 * std::numeric_limits<double>::epsilon();

std::string shape_string(const std::vector<Index>& modes) {
  std::string s = "(";
  for (std::size_t j = 0; j < modes.size(); ++j) {
    if (j) s += ",";
    s += std::to_string(modes[j]);
  }
  return s + ")";
}

void check_factor_shapes(const std::vector<Eigen::MatrixXd>& factors, const Eigen::VectorXd& w) {
  if (factors.empty()) throw ShapeError("CTD needs at least one dimension");
  for (std::size_t j = 0; j < factors.size(); ++j) {
    if (factors[j].cols() != w.size())
      throw ShapeError("factor " + std::to_string(j) + " has " + std::to_string(factors[j].cols()) +
                       " columns, expected rank " + std::to_string(w.size()));
    if (factors[j].rows() < 1) throw ShapeError("factor " + std::to_string(j) + " has no rows");
  }
}

}  // namespace

CTD CTD::zero(std::vector<Index> modes) {
  if (modes.empty()) throw ShapeError("CTD needs at least one dimension");
  CTD z;
  for (Index m : modes) {
    if (m < 1) throw ShapeError("mode sizes must be positive");
    z.factors_.emplace_back(m, 0);
  }
  z.modes_ = std::move(modes);
  z.svalues_.resize(0);
  return z;
}

CTD CTD::raw(std::vector<Eigen::MatrixXd> factors, Eigen::VectorXd weights) {
  check_factor_shapes(factors, weights);
  CTD u;
  for (const auto& f : factors) u.modes_.push_back(f.rows());
  u.factors_ = std::move(factors);
  u.svalues_ = std::move(weights);
  return u;
}

CTD CTD::from_terms(std::vector<Eigen::MatrixXd> factors, Eigen::VectorXd weights) {
  return renormalize(raw(std::move(factors), std::move(weights)));
}

bool CTD::is_canonical(double tol) const {
  for (Index l = 0; l < rank(); ++l) {
    if (!(svalues_[l] > 0.0)) return false;
    for (const auto& f : factors_)
      if (std::abs(f.col(l).norm() - 1.0) > tol) return false;
  }
  return true;
}

CTD CTD::term(Index l) const {
  if (l < 0 || l >= rank()) throw RangeError("term index out of range");
  const Index one[] = {l};
  return select_terms(one);
}

CTD CTD::select_terms(std::span<const Index> which) const {
  CTD out;
  out.modes_ = modes_;
  out.svalues_.resize(static_cast<Index>(which.size()));
  for (const auto& f : factors_) out.factors_.emplace_back(f.rows(), static_cast<Index>(which.size()));
  for (std::size_t k = 0; k < which.size(); ++k) {
    const Index l = which[k];
    if (l < 0 || l >= rank()) throw RangeError("term index out of range");
    out.svalues_[static_cast<Index>(k)] = svalues_[l];
    for (std::size_t j = 0; j < factors_.size(); ++j)
      out.factors_[j].col(static_cast<Index>(k)) = factors_[j].col(l);
  }
  return out;
}

Index DenseTensor::linear(const MultiIndex& i) const {
  if (i.size() != modes.size()) throw RangeError("multi-index has wrong length");
  Index lin = 0;
  Index stride = 1;
  for (std::size_t j = 0; j < modes.size(); ++j) {
    if (i[j] < 0 || i[j] >= modes[j]) throw RangeError("multi-index out of range");
    lin += i[j] * stride;
    stride *= modes[j];
  }
  return lin;
}

MultiIndex DenseTensor::unravel(Index linear_index) const {
  MultiIndex i(modes.size());
  for (std::size_t j = 0; j < modes.size(); ++j) {
    i[j] = linear_index % modes[j];
    linear_index /= modes[j];
  }
  return i;
}

void check_same_shape(const CTD& u, const CTD& v) {
  if (u.modes() != v.modes())
    throw ShapeError("shape mismatch: " + shape_string(u.modes()) + " vs " + shape_string(v.modes()));
}

double eval_entry(const CTD& u, const MultiIndex& i) {
  if (static_cast<Index>(i.size()) != u.dims()) throw RangeError("multi-index has wrong length");
  for (Index j = 0; j < u.dims(); ++j)
    if (i[static_cast<std::size_t>(j)] < 0 || i[static_cast<std::size_t>(j)] >= u.mode(j))
      throw RangeError("index " + std::to_string(i[static_cast<std::size_t>(j)]) + " out of range in dimension " +
                       std::to_string(j));
  double sum = 0.0;
  for (Index l = 0; l < u.rank(); ++l) {
    double p = u.svalues()[l];
    for (Index j = 0; j < u.dims(); ++j) p *= u.factor(j)(i[static_cast<std::size_t>(j)], l);
    sum += p;
  }
  return sum;
}

Eigen::MatrixXd factor_gram(const CTD& u, const CTD& v) {
  check_same_shape(u, v);
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(u.rank(), v.rank());
  if (u.rank() == 0 || v.rank() == 0) return g;
  if (&u == &v) return factor_gram(u);
  Eigen::MatrixXd t(u.rank(), v.rank());
  for (Index j = 0; j < u.dims(); ++j) {
    t.noalias() = u.factor(j).transpose() * v.factor(j);
    g.array() *= t.array();
  }
  return g;
}

Eigen::MatrixXd factor_gram(const CTD& u) {
  const Index r = u.rank();
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(r, r);
  if (r == 0) return g;
  Eigen::MatrixXd t(r, r);
  for (Index j = 0; j < u.dims(); ++j) {
    t.setZero();
    t.selfadjointView<Eigen::Lower>().rankUpdate(u.factor(j).transpose());
    g.triangularView<Eigen::Lower>() = g.cwiseProduct(t);
  }
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

double inner(const CTD& u, const CTD& v) {
  const Eigen::MatrixXd g = factor_gram(u, v);
  if (g.size() == 0) return 0.0;
  return u.svalues().dot(g * v.svalues());
}

double frobenius_norm(const CTD& u) { return std::sqrt(std::max(0.0, inner(u, u))); }

CTD hadamard(const CTD& u, const CTD& v, Index max_rank) {
  check_same_shape(u, v);
  const Index ru = u.rank(), rv = v.rank();
  if (ru != 0 && rv > max_rank / ru)
    throw CapacityError("hadamard rank " + std::to_string(ru) + "x" + std::to_string(rv) + " exceeds guard " +
                        std::to_string(max_rank));
  const Index r = ru * rv;
  std::vector<Eigen::MatrixXd> f;
  f.reserve(static_cast<std::size_t>(u.dims()));
  for (Index j = 0; j < u.dims(); ++j) {
    Eigen::MatrixXd fj(u.mode(j), r);
    for (Index l = 0; l < ru; ++l)
      for (Index m = 0; m < rv; ++m) fj.col(l * rv + m) = u.factor(j).col(l).cwiseProduct(v.factor(j).col(m));
    f.push_back(std::move(fj));
  }
  Eigen::VectorXd w(r);
  for (Index l = 0; l < ru; ++l)
    for (Index m = 0; m < rv; ++m) w[l * rv + m] = u.svalues()[l] * v.svalues()[m];
  return CTD::from_terms(std::move(f), std::move(w));
}

CTD hadamard_square(const CTD& u, Index max_rank) {
  const Index ru = u.rank();
  const Index r = ru * (ru + 1) / 2;
  if (r > max_rank)
    throw CapacityError("hadamard square rank " + std::to_string(r) + " exceeds guard " + std::to_string(max_rank));
  std::vector<Eigen::MatrixXd> f;
  for (Index j = 0; j < u.dims(); ++j) {
    Eigen::MatrixXd fj(u.mode(j), r);
    Index t = 0;
    for (Index l = 0; l < ru; ++l)
      for (Index m = l; m < ru; ++m) fj.col(t++) = u.factor(j).col(l).cwiseProduct(u.factor(j).col(m));
    f.push_back(std::move(fj));
  }
  Eigen::VectorXd w(r);
  Index t = 0;
  for (Index l = 0; l < ru; ++l)
    for (Index m = l; m < ru; ++m) w[t++] = (l == m ? 1.0 : 2.0) * u.svalues()[l] * u.svalues()[m];
  return CTD::from_terms(std::move(f), std::move(w));
}

CTD add(const CTD& u, const CTD& v) {
  check_same_shape(u, v);
  const Index ru = u.rank(), rv = v.rank();
  std::vector<Eigen::MatrixXd> f;
  for (Index j = 0; j < u.dims(); ++j) {
    Eigen::MatrixXd fj(u.mode(j), ru + rv);
    fj << u.factor(j), v.factor(j);
    f.push_back(std::move(fj));
  }
  Eigen::VectorXd w(ru + rv);
  w << u.svalues(), v.svalues();
  return CTD::from_terms(std::move(f), std::move(w));
}

CTD scale(const CTD& u, double c) {
  if (c == 0.0) return CTD::zero(u.modes());
  std::vector<Eigen::MatrixXd> f = u.factors();
  Eigen::VectorXd w = u.svalues() * c;
  return CTD::from_terms(std::move(f), std::move(w));
}

CTD renormalize(const CTD& u) {
  std::vector<Index> keep;
  std::vector<Eigen::MatrixXd> f = u.factors();
  Eigen::VectorXd w = u.svalues();
  for (Index l = 0; l < u.rank(); ++l) {
    double s = w[l];
    bool vanished = (s == 0.0) || !std::isfinite(s);
    for (auto& fj : f) {
      if (vanished) break;
      const double n = fj.col(l).norm();
      if (!(n >= kZeroColumnNorm)) {
        vanished = true;
        break;
      }
      // Columns already unit to rounding are left alone so that renormalize
      // is idempotent.
      if (std::abs(n - 1.0) > kUnitSlack) fj.col(l) /= n;
      // Products of tiny factor entries turn subnormal and stall the
      // arithmetic; against a unit column they are invisible anyway.
      fj.col(l) = (fj.col(l).array().abs() < kFlushBelow).select(0.0, fj.col(l));
      if (std::abs(n - 1.0) > kUnitSlack) s *= n;
    }
    if (vanished || s == 0.0) continue;
    if (s < 0.0) {
      f[0].col(l) = -f[0].col(l);
      s = -s;
    }
    w[l] = s;
    keep.push_back(l);
  }
  CTD tmp = CTD::raw(std::move(f), std::move(w));
  if (static_cast<Index>(keep.size()) == u.rank()) return tmp;
  return tmp.select_terms(keep);
}

DenseTensor to_dense(const CTD& u) {
  Index total = 1;
  for (Index m : u.modes()) {
    if (total > kMaxDenseEntries / m) throw CapacityError("dense materialization exceeds 1e7 entries");
    total *= m;
  }
  DenseTensor t{u.modes(), std::vector<double>(static_cast<std::size_t>(total), 0.0)};
  std::vector<double> term(static_cast<std::size_t>(total));
  for (Index l = 0; l < u.rank(); ++l) {
    // Build the outer product dimension by dimension.
    term[0] = u.svalues()[l];
    Index filled = 1;
    for (Index j = 0; j < u.dims(); ++j) {
      const auto col = u.factor(j).col(l);
      for (Index i = u.mode(j) - 1; i >= 0; --i)
        for (Index k = 0; k < filled; ++k)
          term[static_cast<std::size_t>(i * filled + k)] = term[static_cast<std::size_t>(k)] * col[i];
      filled *= u.mode(j);
    }
    for (Index k = 0; k < total; ++k) t.data[static_cast<std::size_t>(k)] += term[static_cast<std::size_t>(k)];
  }
  return t;
}

CTD random_ctd(Index d, const std::vector<Index>& modes, Index rank, double low, double high, std::uint64_t seed) {
  if (d < 1) throw ShapeError("random_ctd needs d >= 1");
  std::vector<Index> m = modes;
  if (m.size() == 1 && d > 1) m.assign(static_cast<std::size_t>(d), modes[0]);
  if (static_cast<Index>(m.size()) != d) throw ShapeError("random_ctd: modes list does not match d");
  if (rank < 0) throw ShapeError("random_ctd: negative rank");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(low, high);
  std::vector<Eigen::MatrixXd> f;
  for (Index j = 0; j < d; ++j) {
    Eigen::MatrixXd fj(m[static_cast<std::size_t>(j)], rank);
    for (Index l = 0; l < rank; ++l)
      for (Index i = 0; i < fj.rows(); ++i) fj(i, l) = dist(gen);
    f.push_back(std::move(fj));
  }
  return CTD::from_terms(std::move(f), Eigen::VectorXd::Ones(rank));
}

CTD spike_ctd(const std::vector<Index>& modes, const MultiIndex& loc, double magnitude) {
  if (loc.size() != modes.size()) throw RangeError("spike location has wrong length");
  if (magnitude == 0.0) return CTD::zero(modes);
  std::vector<Eigen::MatrixXd> f;
  for (std::size_t j = 0; j < modes.size(); ++j) {
    if (loc[j] < 0 || loc[j] >= modes[j]) throw RangeError("spike location out of range");
    Eigen::MatrixXd fj = Eigen::MatrixXd::Zero(modes[j], 1);
    fj(loc[j], 0) = 1.0;
    f.push_back(std::move(fj));
  }
  return CTD::from_terms(std::move(f), Eigen::VectorXd::Constant(1, magnitude));
}

CTD constant_ctd(const std::vector<Index>& modes, double value) {
  if (value == 0.0) return CTD::zero(modes);
  std::vector<Eigen::MatrixXd> f;
  for (Index m : modes) f.push_back(Eigen::MatrixXd::Ones(m, 1));
  return CTD::from_terms(std::move(f), Eigen::VectorXd::Constant(1, value));
}

std::vector<double> term_max_abs(const CTD& u) {
  std::vector<double> out(static_cast<std::size_t>(u.rank()));
  for (Index l = 0; l < u.rank(); ++l) {
    double p = std::abs(u.svalues()[l]);
    for (Index j = 0; j < u.dims(); ++j) p *= u.factor(j).col(l).cwiseAbs().maxCoeff();
    out[static_cast<std::size_t>(l)] = p;
  }
  return out;
}

}  // namespace ctdopt
