#include "ctdopt/errors.hpp"
#include "ctdopt/max_entry.hpp"
#include "ctdopt/reduction.hpp"
#include "instances.hpp"
#include "oracle.hpp"

#include <doctest.h>

using namespace ctdopt;

namespace {

ReductionConfig config(double eps, NormKind n = NormKind::Frobenius, ReductionAlgorithm a = ReductionAlgorithm::Interpolative) {
  ReductionConfig c;
  c.epsilon = eps;
  c.norm = n;
  c.algorithm = a;
  return c;
}

double dense_rel_error(const CTD& u, const CTD& v) {
  auto du = oracle::materialize(u);
  return oracle::distance(du, oracle::materialize(v)) / oracle::norm(du);
}

const ReductionAlgorithm kAlgorithms[] = {ReductionAlgorithm::Interpolative, ReductionAlgorithm::ALS};

}  // namespace

TEST_CASE("config parsing and validation") {
  CHECK(parse_norm("frobenius") == NormKind::Frobenius);
  CHECK(parse_norm("snorm") == NormKind::SNorm);
  CHECK(parse_algorithm("als") == ReductionAlgorithm::ALS);
  CHECK(parse_algorithm("id") == ReductionAlgorithm::Interpolative);
  CHECK_THROWS_AS(parse_norm("l2"), ConfigError);
  CHECK_THROWS_AS(parse_algorithm("svd"), ConfigError);
  ReductionConfig c;
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.epsilon = 1e-6;
  c.max_rank = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("spike plus tiny noise reduces to the spike") {
  const MultiIndex loc{2, 5, 1};
  CTD u = instances::spike_plus_noise(3, 7, loc, 1e-12, 5);
  for (auto a : kAlgorithms) {
    auto r = reduce(u, config(1e-6, NormKind::Frobenius, a));
    CHECK(r.rank() == 1);
    CHECK(r.tolerance_met);
    CHECK(dense_rel_error(u, r.ctd) <= 1e-6);
    auto dv = oracle::materialize(r.ctd);
    CHECK(dv.index(oracle::argmax_abs(dv)) == loc);
  }
}

TEST_CASE("rank-1 and rank-0 inputs") {
  CTD u = random_ctd(3, {4}, 1, 0.1, 1.0, 3);
  for (auto a : kAlgorithms) {
    auto r = reduce(u, config(1e-8, NormKind::Frobenius, a));
    CHECK(r.rank() == 1);
    CHECK(dense_rel_error(u, r.ctd) <= 1e-12);
    CHECK(reduce(CTD::zero({3, 3}), config(1e-6, NormKind::Frobenius, a)).rank() == 0);
  }
}

TEST_CASE("duplicated term collapses to one with doubled s-value") {
  CTD t = random_ctd(3, {5}, 1, -1.0, 1.0, 9);
  CTD u = add(t, t);
  for (auto a : kAlgorithms) {
    auto r = reduce(u, config(1e-6, NormKind::Frobenius, a));
    REQUIRE(r.rank() == 1);
    CHECK(r.ctd.svalues()[0] == doctest::Approx(2 * t.svalues()[0]).epsilon(1e-12));
    CHECK(dense_rel_error(u, r.ctd) <= 1e-12);
  }
}

TEST_CASE("interpolative reduction finds the number of distinct terms") {
  CTD exact = instances::duplicated(3, 6, 4, 2, 0.0, 17);
  auto r = interpolative_reduce(exact, config(1e-6));
  CHECK(r.rank() == 4);
  CHECK(dense_rel_error(exact, r.ctd) <= 1e-6);

  CTD near = instances::duplicated(3, 6, 4, 2, 1e-10, 18);
  REQUIRE(near.rank() == 8);
  auto q = interpolative_reduce(near, config(1e-6));
  CHECK(q.rank() == 4);
  CHECK(dense_rel_error(near, q.ctd) <= 1e-6);
}

TEST_CASE("reduction contract on random inputs") {
  for (int t = 0; t < 12; ++t) {
    CTD u = add(instances::duplicated(3, 5, 2 + t % 3, 2, 1e-4, 100 + t), scale(random_ctd(3, {5}, 2, -1, 1, 200 + t), 1e-3));
    for (auto a : kAlgorithms) {
      const double eps = t % 2 ? 1e-3 : 1e-5;
      auto r = reduce(u, config(eps, NormKind::Frobenius, a));
      CHECK(r.rank() <= u.rank());
      CHECK(r.ctd.is_canonical(1e-10));
      CHECK(dense_rel_error(u, r.ctd) <= eps * (1 + 1e-6));
      CHECK(r.relative_error == doctest::Approx(dense_rel_error(u, r.ctd)).epsilon(1e-3).scale(1e-9));
    }
  }
}

TEST_CASE("reduction is idempotent in rank") {
  CTD u = add(instances::duplicated(3, 5, 3, 2, 1e-5, 300), scale(random_ctd(3, {5}, 2, -1, 1, 301), 1e-4));
  for (auto a : kAlgorithms) {
    auto cfg = config(1e-4, NormKind::Frobenius, a);
    auto r1 = reduce(u, cfg);
    auto r2 = reduce(r1.ctd, cfg);
    CHECK(r2.rank() == r1.rank());
    CHECK(dense_rel_error(u, r2.ctd) <= 2e-4);
  }
}

TEST_CASE("s-norm reduction on matrices meets its bound") {
  for (int t = 0; t < 6; ++t) {
    CTD u = add(random_ctd(2, {6}, 2, 0.0, 1.0, 400 + t), scale(random_ctd(2, {6}, 3, -1, 1, 500 + t), 1e-4));
    for (auto a : kAlgorithms) {
      auto r = reduce(u, config(1e-3, NormKind::SNorm, a));
      auto du = oracle::materialize(u);
      auto diff = oracle::combine(du, oracle::materialize(r.ctd), 1, -1);
      CHECK(r.rank() <= u.rank());
      CHECK(oracle::top_singular_value(diff) <= 1e-3 * oracle::top_singular_value(du) * (1 + 1e-8));
    }
  }
}

TEST_CASE("max_rank cap reports tolerance not met") {
  CTD u = random_ctd(3, {6}, 5, -1, 1, 600);
  for (auto a : kAlgorithms) {
    auto cfg = config(1e-10, NormKind::Frobenius, a);
    cfg.max_rank = 2;
    auto r = reduce(u, cfg);
    CHECK(r.rank() <= 2);
    CHECK_FALSE(r.tolerance_met);
  }
}

TEST_CASE("precision warning below 1e-8 in Frobenius") {
  CTD u = random_ctd(2, {4}, 2, 0, 1, 601);
  CHECK(reduce(u, config(1e-9)).precision_warning);
  CHECK_FALSE(reduce(u, config(1e-9, NormKind::SNorm)).precision_warning);
  CHECK_FALSE(reduce(u, config(1e-6)).precision_warning);
}

TEST_CASE("tolerance below rounding returns the flagged skeleton") {
  CTD exact = instances::duplicated(3, 6, 3, 2, 0.0, 611);
  REQUIRE(exact.rank() == 6);
  auto r = interpolative_reduce(exact, config(1e-12));
  CHECK(r.rank() == 3);
  CHECK(r.precision_warning);
  CHECK(dense_rel_error(exact, r.ctd) <= 1e-7);
}

TEST_CASE("interpolative reduction refuses ranks past its Gram guard") {
  CTD big = random_ctd(2, {2}, (Index{1} << 14) + 1, 0.5, 1.0, 612);
  CHECK_THROWS_AS(interpolative_reduce(big, config(1e-6)), CapacityError);
}

TEST_CASE("als_sweep fixed point and monotone residual") {
  CTD u = random_ctd(3, {4}, 1, -1, 1, 700);
  CTD v = als_sweep(u, u, 1);
  CHECK(dense_rel_error(u, v) <= 1e-12);

  for (int t = 0; t < 8; ++t) {
    CTD target = random_ctd(3, {5}, 4, -1, 1, 710 + t);
    CTD approx = random_ctd(3, {5}, 2, -1, 1, 720 + t);
    auto dt = oracle::materialize(target);
    double prev = oracle::distance(dt, oracle::materialize(approx));
    for (Index j = 0; j < 3; ++j) {
      approx = als_sweep(target, approx, j);
      const double now = oracle::distance(dt, oracle::materialize(approx));
      CHECK(now <= prev * (1 + 1e-12));
      prev = now;
    }
    CTD full = als_pass(target, approx);
    CHECK(oracle::distance(dt, oracle::materialize(full)) <= prev * (1 + 1e-12));
  }
}

TEST_CASE("als_sweep on matrices is a least-squares projection") {
  CTD target = random_ctd(2, {7}, 4, -1, 1, 800);
  CTD approx = random_ctd(2, {7}, 2, -1, 1, 801);
  CTD v = als_sweep(target, approx, 0);
  // Optimal first factor: rows of U projected onto the span of B's columns.
  Eigen::MatrixXd u = oracle::as_matrix(oracle::materialize(target));
  Eigen::MatrixXd b = approx.factor(1);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(7, 2);
  Eigen::MatrixXd want = u * q * q.transpose();
  Eigen::MatrixXd got = oracle::as_matrix(oracle::materialize(v));
  CHECK((got - want).norm() <= 1e-10 * want.norm());
}

TEST_CASE("s_norm") {
  CTD one = scale(random_ctd(4, {3}, 1, -1, 1, 900), 3.5 / random_ctd(4, {3}, 1, -1, 1, 900).svalues()[0]);
  CHECK(s_norm(one) == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(s_norm(CTD::zero({3, 3})) == 0.0);
  for (int t = 0; t < 10; ++t) {
    CTD u = random_ctd(3, {5}, 3, -1, 1, 910 + t);
    const double s = s_norm(u);
    CHECK(s <= frobenius_norm(u) * (1 + 1e-12));
    CHECK(oracle::rel(s_norm(scale(u, -2.5)), 2.5 * s) <= 1e-10);
  }
  for (int t = 0; t < 10; ++t) {
    CTD u = random_ctd(2, {6 + t % 3}, 4, -1, 1, 930 + t);
    CHECK(oracle::rel(s_norm(u), oracle::top_singular_value(oracle::materialize(u))) <= 1e-8);
  }
  auto r1 = best_rank_one(random_ctd(3, {4}, 2, 0, 1, 950));
  for (const auto& f : r1.factors) CHECK(f.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r1.svalue >= 0.0);
}

TEST_CASE("norm_of_difference") {
  CTD u = random_ctd(3, {4}, 3, -1, 1, 1000), v = random_ctd(3, {4}, 2, -1, 1, 1001);
  CHECK(norm_of_difference(u, u, NormKind::Frobenius) <= 1e-10 * frobenius_norm(u));
  CHECK(norm_of_difference(u, u, NormKind::SNorm) <= 1e-10 * frobenius_norm(u));
  CHECK(norm_of_difference(u, CTD::zero(u.modes()), NormKind::Frobenius) == doctest::Approx(frobenius_norm(u)));
  CHECK(norm_of_difference(u, CTD::zero(u.modes()), NormKind::SNorm) == doctest::Approx(s_norm(u)));
  CHECK(oracle::rel(norm_of_difference(u, v, NormKind::Frobenius),
                    oracle::distance(oracle::materialize(u), oracle::materialize(v))) <= 1e-10);
  CTD a = random_ctd(2, {5}, 3, -1, 1, 1002), b = random_ctd(2, {5}, 2, -1, 1, 1003);
  auto diff = oracle::combine(oracle::materialize(a), oracle::materialize(b), 1, -1);
  CHECK(oracle::rel(norm_of_difference(a, b, NormKind::SNorm), oracle::top_singular_value(diff)) <= 1e-8);
}
