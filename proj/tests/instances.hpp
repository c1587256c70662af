#pragma once

// Constructed CTDs with known structure, shared by unit and acceptance tests.

#include "ctdopt/ctd.hpp"

#include <random>

namespace instances {

using ctdopt::CTD;
using ctdopt::Index;

/// `distinct` generic terms, each listed `copies` times with its own weight;
/// minimal rank is `distinct`. With `perturb` > 0 every copy's factors are
/// nudged by that relative amount, so the terms are only nearly dependent.
inline CTD duplicated(Index d, Index m, Index distinct, int copies, double perturb, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> wd(0.5, 2.0);
  std::vector<Eigen::MatrixXd> base;
  for (Index j = 0; j < d; ++j) {
    Eigen::MatrixXd b(m, distinct);
    for (Index k = 0; k < b.size(); ++k) b.data()[k] = nd(gen);
    b.colwise().normalize();
    base.push_back(b);
  }
  const Index r = distinct * copies;
  std::vector<Eigen::MatrixXd> f(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) f[static_cast<std::size_t>(j)].resize(m, r);
  Eigen::VectorXd w(r);
  for (Index c = 0; c < copies; ++c)
    for (Index l = 0; l < distinct; ++l) {
      const Index col = c * distinct + l;
      w[col] = wd(gen);
      for (Index j = 0; j < d; ++j) {
        Eigen::VectorXd v = base[static_cast<std::size_t>(j)].col(l);
        if (perturb > 0.0 && c > 0)
          for (Index i = 0; i < m; ++i) v[i] += perturb * nd(gen);
        f[static_cast<std::size_t>(j)].col(col) = v;
      }
    }
  return CTD::from_terms(std::move(f), std::move(w));
}

/// Spike of magnitude 1 at `loc` plus noise_level times a random rank-3
/// tensor with unit-scale entries.
inline CTD spike_plus_noise(Index d, Index m, const ctdopt::MultiIndex& loc, double noise_level, std::uint64_t seed) {
  CTD noise = ctdopt::random_ctd(d, {m}, 3, -1.0, 1.0, seed);
  return ctdopt::add(ctdopt::spike_ctd(noise.modes(), loc, 1.0), ctdopt::scale(noise, noise_level / ctdopt::frobenius_norm(noise)));
}

}  // namespace instances
