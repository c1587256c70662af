#include "ctdopt/max_entry.hpp"

#include "ctdopt/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <set>

namespace ctdopt {

std::string to_string(SearchMethod m) { return m == SearchMethod::PowerMethod ? "power" : "squaring"; }

Termination Termination::parse(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("termination must look like fixed:N, lambda:DELTA or rank:R");
  const std::string kind = s.substr(0, colon);
  const std::string arg = s.substr(colon + 1);
  try {
    std::size_t used = 0;
    Termination t;
    if (kind == "fixed") {
      t = fixed(std::stoi(arg, &used));
      if (t.iterations < 1) throw ConfigError("fixed:N needs N >= 1");
    } else if (kind == "lambda") {
      t = lambda_stall(std::stod(arg, &used));
      if (!(t.delta > 0.0)) throw ConfigError("lambda:DELTA needs DELTA > 0");
    } else if (kind == "rank") {
      t = rank_threshold(std::stol(arg, &used));
      if (t.rank < 1) throw ConfigError("rank:R needs R >= 1");
    } else {
      throw ConfigError("unknown termination kind '" + kind + "'");
    }
    if (used != arg.size()) throw ConfigError("trailing characters in termination '" + s + "'");
    return t;
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse termination '" + s + "'");
  }
}

std::string Termination::to_string() const {
  switch (kind) {
    case Kind::FixedIterations:
      return "fixed:" + std::to_string(iterations);
    case Kind::LambdaStall: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "lambda:%.17g", delta);
      return buf;
    }
    case Kind::RankThreshold:
      return "rank:" + std::to_string(rank);
  }
  return {};
}

void MaxEntrySearchConfig::validate() const {
  if (k_max < 1) throw ConfigError("k_max must be >= 1");
  if (candidates_per_term < 1) throw ConfigError("candidates_per_term must be >= 1");
  switch (termination.kind) {
    case Termination::Kind::FixedIterations:
      if (termination.iterations < 1) throw ConfigError("fixed iteration count must be >= 1");
      break;
    case Termination::Kind::LambdaStall:
      if (!(termination.delta > 0.0)) throw ConfigError("lambda stall delta must be > 0");
      break;
    case Termination::Kind::RankThreshold:
      if (termination.rank < 1) throw ConfigError("rank threshold must be >= 1");
      break;
  }
  if (reduction) reduction->validate();
}

double MaxEntryTrace::total_seconds() const {
  double t = 0.0;
  for (const auto& r : records) t += r.seconds;
  return t;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

IterationRecord make_record(int k, const CTD& y, double lambda, double secs, bool not_met) {
  return {k, y.rank(), lambda, term_max_abs(y), secs, not_met};
}

CTD normalized(const CTD& y) {
  const double n = frobenius_norm(y);
  if (n == 0.0) throw NumericalError("iterate vanished during maximum-entry search");
  return scale(y, 1.0 / n);
}

// Applies tau when enabled; returns the reduced tensor and whether the
// reduction reported its tolerance as met.
std::pair<CTD, bool> apply_tau(const CTD& q, const MaxEntrySearchConfig& cfg) {
  if (!cfg.reduction) return {q, true};
  ReductionResult r = reduce(q, *cfg.reduction);
  return {std::move(r.ctd), r.tolerance_met};
}

bool should_stop(const MaxEntrySearchConfig& cfg, int k, Index rank, double lambda_prev, double lambda) {
  switch (cfg.termination.kind) {
    case Termination::Kind::FixedIterations:
      return k >= cfg.termination.iterations;
    case Termination::Kind::LambdaStall:
      if (k < 2 || lambda_prev == 0.0 || !std::isfinite(lambda_prev)) return false;
      return std::abs(lambda - lambda_prev) / std::abs(lambda_prev) < cfg.termination.delta;
    case Termination::Kind::RankThreshold:
      return rank <= cfg.termination.rank;
  }
  return false;
}

}  // namespace

MaxEntryTrace power_method_max(const CTD& u, const MaxEntrySearchConfig& cfg) {
  cfg.validate();
  if (u.rank() == 0) throw DomainError("maximum-entry search needs a nonzero tensor");
  MaxEntryTrace tr;
  tr.method = SearchMethod::PowerMethod;

  double inv_count = 1.0;
  for (Index m : u.modes()) inv_count /= static_cast<double>(m);
  const CTD y0 = constant_ctd(u.modes(), inv_count);
  CTD y = y0;
  tr.records.push_back(make_record(0, y, std::numeric_limits<double>::quiet_NaN(), 0.0, false));
  if (cfg.keep_iterates) tr.iterates.push_back(y);

  double rayleigh_prev = std::numeric_limits<double>::quiet_NaN();
  for (int k = 1; k <= cfg.k_max; ++k) {
    const auto t0 = Clock::now();
    const CTD q = hadamard(u, y);
    const double lambda = inner(y, q);
    const double nq = frobenius_norm(q);
    if (nq == 0.0) throw NumericalError("power method: U * Y vanished (U is zero on the support of Y)");
    const double rayleigh = lambda / inner(y, y);
    auto [reduced, met] = apply_tau(scale(q, 1.0 / nq), cfg);
    // tau moves the norm by up to eps; keep ||Y_k||_F = 1.
    y = normalized(reduced);
    tr.records.push_back(make_record(k, y, lambda, seconds_since(t0), !met));
    if (cfg.keep_iterates) tr.iterates.push_back(y);
    if (k == 1) tr.degenerate_plateau = norm_of_difference(y, normalized(y0), NormKind::Frobenius) <= 1e-10;
    if (should_stop(cfg, k, y.rank(), rayleigh_prev, rayleigh)) {
      tr.terminated = true;
      break;
    }
    rayleigh_prev = rayleigh;
  }
  tr.final_iterate = y;
  tr.candidates = extract_candidates(y, u, cfg.candidates_per_term);
  return tr;
}

MaxEntryTrace squaring_max(const CTD& u, const MaxEntrySearchConfig& cfg) {
  cfg.validate();
  if (u.rank() == 0) throw DomainError("maximum-entry search needs a nonzero tensor");
  MaxEntryTrace tr;
  tr.method = SearchMethod::Squaring;

  CTD y = normalized(u);
  double lambda_prev = inner(y, u);
  tr.records.push_back(make_record(0, y, lambda_prev, 0.0, false));
  if (cfg.keep_iterates) tr.iterates.push_back(y);

  for (int k = 1; k <= cfg.k_max; ++k) {
    const auto t0 = Clock::now();
    const CTD q = hadamard_square(y);
    auto [reduced, met] = apply_tau(q, cfg);
    y = normalized(reduced);
    const double lambda = inner(y, u);
    tr.records.push_back(make_record(k, y, lambda, seconds_since(t0), !met));
    if (cfg.keep_iterates) tr.iterates.push_back(y);
    if (k == 1) tr.degenerate_plateau = std::abs(lambda - lambda_prev) <= 1e-12 * std::abs(lambda_prev);
    if (should_stop(cfg, k, y.rank(), lambda_prev, lambda)) {
      tr.terminated = true;
      break;
    }
    lambda_prev = lambda;
  }
  tr.final_iterate = y;
  tr.candidates = extract_candidates(y, u, cfg.candidates_per_term);
  return tr;
}

MaxEntryTrace find_max_entries(const CTD& u, const MaxEntrySearchConfig& cfg) {
  return cfg.method == SearchMethod::PowerMethod ? power_method_max(u, cfg) : squaring_max(u, cfg);
}

int iteration_bound(double a, double b, double eps) {
  if (!(a > 0.0) || !(b > 0.0) || !(b < a)) throw DomainError("iteration_bound needs 0 < b < a");
  if (!(eps > 0.0) || !(eps < 1.0)) throw DomainError("iteration_bound needs 0 < eps < 1");
  const double log_q = std::log(b / a);
  const double guess = std::log2(std::log(eps) / log_q);
  int j = std::max(0, static_cast<int>(std::ceil(guess)));
  const double q = b / a;
  auto reaches = [&](int n) { return std::pow(q, std::ldexp(1.0, n)) <= eps; };
  while (j > 0 && reaches(j - 1)) --j;
  while (!reaches(j)) ++j;
  return j;
}

std::vector<MultiIndex> top_locations_of_term(const CTD& y, Index term, Index k) {
  const Index d = y.dims();
  if (term < 0 || term >= y.rank()) throw RangeError("term index out of range");
  // Per dimension: indices sorted by |entry| descending, lowest index first
  // among equals.
  std::vector<std::vector<Index>> order(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) {
    auto& o = order[static_cast<std::size_t>(j)];
    o.resize(static_cast<std::size_t>(y.mode(j)));
    std::iota(o.begin(), o.end(), Index{0});
    const auto col = y.factor(j).col(term);
    std::stable_sort(o.begin(), o.end(), [&](Index a, Index b) { return std::abs(col[a]) > std::abs(col[b]); });
  }
  auto magnitude = [&](const std::vector<Index>& pos) {
    double p = 1.0;
    for (Index j = 0; j < d; ++j)
      p *= std::abs(y.factor(j)(order[static_cast<std::size_t>(j)][static_cast<std::size_t>(pos[static_cast<std::size_t>(j)])], term));
    return p;
  };
  using Item = std::pair<double, std::vector<Index>>;
  auto cmp = [](const Item& a, const Item& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> heap(cmp);
  std::set<std::vector<Index>> seen;
  std::vector<Index> start(static_cast<std::size_t>(d), 0);
  heap.emplace(magnitude(start), start);
  seen.insert(start);
  std::vector<MultiIndex> out;
  while (!heap.empty() && static_cast<Index>(out.size()) < k) {
    auto [mag, pos] = heap.top();
    heap.pop();
    MultiIndex loc(static_cast<std::size_t>(d));
    for (Index j = 0; j < d; ++j)
      loc[static_cast<std::size_t>(j)] = order[static_cast<std::size_t>(j)][static_cast<std::size_t>(pos[static_cast<std::size_t>(j)])];
    out.push_back(std::move(loc));
    for (Index j = 0; j < d; ++j) {
      if (pos[static_cast<std::size_t>(j)] + 1 >= y.mode(j)) continue;
      auto next = pos;
      ++next[static_cast<std::size_t>(j)];
      if (seen.insert(next).second) heap.emplace(magnitude(next), next);
    }
  }
  return out;
}

std::vector<Candidate> extract_candidates(const CTD& y, const CTD& u, Index per_term) {
  check_same_shape(y, u);
  std::set<MultiIndex> locations;
  for (Index l = 0; l < y.rank(); ++l)
    for (auto& loc : top_locations_of_term(y, l, per_term)) locations.insert(std::move(loc));
  std::vector<Candidate> out;
  for (const auto& loc : locations) out.push_back({loc, eval_entry(u, loc)});
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return std::abs(a.value) > std::abs(b.value); });
  return out;
}

}  // namespace ctdopt
