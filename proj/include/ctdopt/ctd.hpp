#pragma once

// Canonical tensor decomposition (CTD) and its exact multilinear algebra.
//
// A CTD of separation rank r over an M_1 x ... x M_d index space is
//
//   U(i_1, ..., i_d) = sum_l s_l prod_j u_j^(l)[i_j]
//
// stored as one M_j x r factor matrix per dimension plus the vector of
// s-values. In canonical form every factor column has unit Euclidean norm,
// every s-value is strictly positive, and the sign of a term lives in its
// first-dimension column. Every operation below returns canonical CTDs.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace ctdopt {

using Index = Eigen::Index;

/// 0-based position in a d-dimensional index space. Serialized output uses
/// 1-based indices.
using MultiIndex = std::vector<Index>;

/// Hadamard products larger than this are refused with CapacityError.
inline constexpr Index kDefaultMaxHadamardRank = Index{1} << 22;

/// Guard on the number of entries `to_dense` will materialize.
inline constexpr Index kMaxDenseEntries = 10'000'000;

class CTD {
 public:
  CTD() = default;

  /// Rank-0 tensor over the given modes.
  static CTD zero(std::vector<Index> modes);

  /// Builds from arbitrary (non-normalized, signed) factor columns and
  /// per-term weights, then brings the result to canonical form.
  static CTD from_terms(std::vector<Eigen::MatrixXd> factors, Eigen::VectorXd weights);

  /// Shape-checked but otherwise untouched storage. Used to hold inputs that
  /// are not (yet) canonical; see `renormalize`.
  static CTD raw(std::vector<Eigen::MatrixXd> factors, Eigen::VectorXd weights);

  Index dims() const { return static_cast<Index>(modes_.size()); }
  const std::vector<Index>& modes() const { return modes_; }
  Index mode(Index j) const { return modes_[static_cast<std::size_t>(j)]; }
  Index rank() const { return svalues_.size(); }

  const Eigen::VectorXd& svalues() const { return svalues_; }
  const std::vector<Eigen::MatrixXd>& factors() const { return factors_; }
  const Eigen::MatrixXd& factor(Index j) const { return factors_[static_cast<std::size_t>(j)]; }

  /// Unit columns (within tol), strictly positive s-values.
  bool is_canonical(double tol = 1e-12) const;

  /// The l-th term as a rank-1 CTD.
  CTD term(Index l) const;

  /// Terms listed in `which`, in that order.
  CTD select_terms(std::span<const Index> which) const;

 private:
  std::vector<Index> modes_;
  std::vector<Eigen::MatrixXd> factors_;
  Eigen::VectorXd svalues_;
};

/// Dense materialization, first index fastest.
struct DenseTensor {
  std::vector<Index> modes;
  std::vector<double> data;

  Index linear(const MultiIndex& i) const;
  double operator()(const MultiIndex& i) const { return data[static_cast<std::size_t>(linear(i))]; }
  MultiIndex unravel(Index linear_index) const;
};

/// Throws ShapeError unless both operands share dimension count and modes.
void check_same_shape(const CTD& u, const CTD& v);

double eval_entry(const CTD& u, const MultiIndex& i);

/// r_u x r_v matrix of prod_j <u_j^(l), v_j^(l')>, s-values excluded.
Eigen::MatrixXd factor_gram(const CTD& u, const CTD& v);
/// Symmetric Gram of u with itself, computed from one triangle.
Eigen::MatrixXd factor_gram(const CTD& u);

double inner(const CTD& u, const CTD& v);
double frobenius_norm(const CTD& u);

/// Entrywise product. Terms are ordered l-major: term l * r_v + l' is the
/// product of u's term l with v's term l'. Terms whose product column
/// vanishes are dropped.
CTD hadamard(const CTD& u, const CTD& v, Index max_rank = kDefaultMaxHadamardRank);

/// hadamard(u, u) with the symmetric pairs (l, l') and (l', l) merged:
/// r(r+1)/2 terms, l-major over l <= l'.
CTD hadamard_square(const CTD& u, Index max_rank = kDefaultMaxHadamardRank);

CTD add(const CTD& u, const CTD& v);
CTD scale(const CTD& u, double c);
CTD renormalize(const CTD& u);

DenseTensor to_dense(const CTD& u);

/// Factors drawn i.i.d. from uniform[low, high] with unit weights, then
/// brought to canonical form. Deterministic for a fixed seed.
CTD random_ctd(Index d, const std::vector<Index>& modes, Index rank, double low, double high,
               std::uint64_t seed);

/// Rank-1 tensor equal to `magnitude` at `loc` and zero elsewhere.
CTD spike_ctd(const std::vector<Index>& modes, const MultiIndex& loc, double magnitude);

/// Rank-1 tensor with every entry equal to `value`.
CTD constant_ctd(const std::vector<Index>& modes, double value);

/// Per term: s_l * prod_j max_i |u_j^(l)[i]|. Exact for sign-consistent
/// columns, an upper bound otherwise.
std::vector<double> term_max_abs(const CTD& u);

}  // namespace ctdopt
