#include "ctdopt/experiments.hpp"

#include "ctdopt/ctd_json.hpp"
#include "ctdopt/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace ctdopt {

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + (stream + 1) * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

MultiIndex random_location(std::mt19937_64& gen, Index d, Index m) {
  std::uniform_int_distribution<Index> dist(0, m - 1);
  MultiIndex loc(static_cast<std::size_t>(d));
  for (auto& i : loc) i = dist(gen);
  return loc;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

class OutputDir {
 public:
  explicit OutputDir(const fs::path& dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }
  void text(const std::string& name, const std::string& content) {
    write_text(dir_ / name, content);
    files_.push_back(dir_ / name);
  }
  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }
  ExperimentOutput finish(const ExperimentConfig& cfg, json summary) {
    json manifest = {{"tool", "ctdopt"}, {"version", kVersion}, {"experiment", cfg.experiment},
                     {"config", config_to_json(cfg)}};
    json names = json::array();
    for (const auto& f : files_) names.push_back(f.filename().string());
    names.push_back("manifest.json");
    manifest["files"] = names;
    json_file("manifest.json", manifest);
    return {files_, std::move(summary)};
  }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

json real_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string csv_real(double x) { return std::isfinite(x) ? format_real(x) : std::string("nan"); }

std::string index_string(const MultiIndex& i) {
  std::string s;
  for (std::size_t j = 0; j < i.size(); ++j) {
    if (j) s += ' ';
    s += std::to_string(i[j] + 1);
  }
  return s;
}

json reduction_to_json(const ReductionConfig& r) {
  json j = {{"epsilon", r.epsilon},
            {"norm", to_string(r.norm)},
            {"algorithm", to_string(r.algorithm)},
            {"als_max_sweeps", r.als_max_sweeps},
            {"ridge", r.ridge}};
  j["max_rank"] = r.max_rank ? json(*r.max_rank) : json(nullptr);
  j["als_stall_tol"] = r.als_stall_tol ? json(*r.als_stall_tol) : json(nullptr);
  return j;
}

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) {
    try {
      dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown " + where + " key '" + k + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Planted instances

PlantedInstance planted_to_target(Index d, Index m, Index rank, double low, double high, double target, int count,
                                  std::uint64_t seed) {
  if (count < 1) throw ConfigError("need at least one planted location");
  PlantedInstance p;
  CTD bg = random_ctd(d, {m}, rank, low, high, derive_seed(seed, 0));
  std::mt19937_64 gen(derive_seed(seed, 1));
  std::set<MultiIndex> used;
  while (static_cast<int>(p.locations.size()) < count) {
    MultiIndex loc = random_location(gen, d, m);
    if (used.insert(loc).second) p.locations.push_back(std::move(loc));
  }
  CTD u = bg;
  for (const auto& loc : p.locations) u = add(u, spike_ctd(bg.modes(), loc, target - eval_entry(bg, loc)));
  for (const auto& loc : p.locations) p.peaks.push_back(eval_entry(u, loc));
  p.tensor = std::move(u);
  return p;
}

PlantedInstance planted_added(Index d, Index m, Index rank, double low, double high, double magnitude,
                              std::uint64_t seed) {
  PlantedInstance p;
  CTD bg = random_ctd(d, {m}, rank, low, high, derive_seed(seed, 0));
  std::mt19937_64 gen(derive_seed(seed, 1));
  p.locations.push_back(random_location(gen, d, m));
  p.tensor = add(bg, spike_ctd(bg.modes(), p.locations[0], magnitude));
  p.peaks.push_back(eval_entry(p.tensor, p.locations[0]));
  return p;
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (dims < 1 || modes < 1) throw ConfigError("dims and modes must be >= 1");
  if (rank < 0) throw ConfigError("rank must be >= 0");
  if (!(low <= high)) throw ConfigError("need low <= high");
  if (extended_k_max < 1) throw ConfigError("extended_k_max must be >= 1");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  reduction.validate();
  search.validate();
  ackley.params.validate();
}

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  c.out_dir = fs::path("out") / experiment;
  if (experiment == "demo-convergence") {
    c.search.termination = Termination::rank_threshold(1);
  } else if (experiment == "demo-two-maxima") {
    c.search.termination = Termination::fixed(6);
  } else if (experiment == "compare") {
    c.trials = 100;
    c.dims = 8;
    c.rank = 4;
    c.spike = 4.0;
    c.reduction.norm = NormKind::SNorm;
    c.search.k_max = 200;
  } else if (experiment == "ackley") {
    c.search.k_max = 60;
  } else if (experiment == "reduce" || experiment == "max-entry") {
  } else {
    throw ConfigError("unknown experiment '" + experiment + "'");
  }
  c.search.reduction = c.reduction;
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  const auto& a = c.ackley;
  json ack = {{"d", a.params.d},
              {"a", a.params.a},
              {"b", a.params.b},
              {"c", a.params.c},
              {"center", a.params.center},
              {"half_width", a.half_width},
              {"expansion_eps", a.expansion_eps},
              {"expansion_delta", a.expansion_delta},
              {"points_per_gaussian", a.points_per_gaussian},
              {"stencil_halfwidth", a.stencil_halfwidth},
              {"samples_per_oscillation", a.samples_per_oscillation}};
  json s = {{"method", to_string(c.search.method)},
            {"k_max", c.search.k_max},
            {"termination", c.search.termination.to_string()},
            {"candidates_per_term", c.search.candidates_per_term}};
  s["reduction"] = c.search.reduction ? reduction_to_json(*c.search.reduction) : json(nullptr);
  return {{"experiment", c.experiment},
          {"seed", c.seed},
          {"trials", c.trials},
          {"dims", c.dims},
          {"modes", c.modes},
          {"rank", c.rank},
          {"low", c.low},
          {"high", c.high},
          {"spike", c.spike},
          {"reduction", reduction_to_json(c.reduction)},
          {"search", s},
          {"extended_k_max", c.extended_k_max},
          {"threads", c.threads},
          {"ackley", ack},
          {"compass", {{"step0", c.compass.step0}, {"shrink", c.compass.shrink}, {"tol", c.compass.tol},
                       {"max_evaluations", c.compass.max_evaluations}}},
          {"out", c.out_dir.string()}};
}

namespace {

void apply_reduction(ReductionConfig& r, const json& j) {
  check_keys(j, {"epsilon", "norm", "algorithm", "max_rank", "als_max_sweeps", "als_stall_tol", "ridge"}, "reduction");
  take(j, "epsilon", r.epsilon);
  if (j.contains("norm")) r.norm = parse_norm(j["norm"].get<std::string>());
  if (j.contains("algorithm")) r.algorithm = parse_algorithm(j["algorithm"].get<std::string>());
  if (j.contains("max_rank")) r.max_rank = j["max_rank"].is_null() ? std::nullopt : std::optional<Index>(j["max_rank"].get<Index>());
  take(j, "als_max_sweeps", r.als_max_sweeps);
  if (j.contains("als_stall_tol"))
    r.als_stall_tol = j["als_stall_tol"].is_null() ? std::nullopt : std::optional<double>(j["als_stall_tol"].get<double>());
  take(j, "ridge", r.ridge);
}

}  // namespace

void apply_overrides(ExperimentConfig& c, const json& j) {
  try {
    check_keys(j, {"experiment", "seed", "trials", "dims", "modes", "rank", "low", "high", "spike", "reduction",
                   "search", "extended_k_max", "threads", "ackley", "compass", "out"},
               "config");
    take(j, "experiment", c.experiment);
    take(j, "seed", c.seed);
    take(j, "trials", c.trials);
    take(j, "dims", c.dims);
    take(j, "modes", c.modes);
    take(j, "rank", c.rank);
    take(j, "low", c.low);
    take(j, "high", c.high);
    take(j, "spike", c.spike);
    take(j, "extended_k_max", c.extended_k_max);
    take(j, "threads", c.threads);
    if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
    if (j.contains("reduction")) {
      apply_reduction(c.reduction, j["reduction"]);
      // The search reuses the top-level reduction unless it sets its own.
      if (c.search.reduction) c.search.reduction = c.reduction;
    }
    if (j.contains("search")) {
      const json& s = j["search"];
      check_keys(s, {"method", "k_max", "termination", "candidates_per_term", "reduction"}, "search");
      if (s.contains("method")) {
        const auto m = s["method"].get<std::string>();
        if (m == "power") c.search.method = SearchMethod::PowerMethod;
        else if (m == "squaring") c.search.method = SearchMethod::Squaring;
        else throw ConfigError("unknown search method '" + m + "'");
      }
      take(s, "k_max", c.search.k_max);
      if (s.contains("termination")) c.search.termination = Termination::parse(s["termination"].get<std::string>());
      take(s, "candidates_per_term", c.search.candidates_per_term);
      if (s.contains("reduction")) {
        if (s["reduction"].is_null()) {
          c.search.reduction.reset();
        } else {
          ReductionConfig r = c.search.reduction.value_or(c.reduction);
          apply_reduction(r, s["reduction"]);
          c.search.reduction = r;
        }
      }
    }
    if (j.contains("ackley")) {
      const json& a = j["ackley"];
      check_keys(a, {"d", "a", "b", "c", "center", "half_width", "expansion_eps", "expansion_delta",
                     "points_per_gaussian", "stencil_halfwidth", "samples_per_oscillation"},
                 "ackley");
      auto& k = c.ackley;
      take(a, "d", k.params.d);
      take(a, "a", k.params.a);
      take(a, "b", k.params.b);
      take(a, "c", k.params.c);
      take(a, "center", k.params.center);
      take(a, "half_width", k.half_width);
      take(a, "expansion_eps", k.expansion_eps);
      take(a, "expansion_delta", k.expansion_delta);
      take(a, "points_per_gaussian", k.points_per_gaussian);
      take(a, "stencil_halfwidth", k.stencil_halfwidth);
      take(a, "samples_per_oscillation", k.samples_per_oscillation);
    }
    if (j.contains("compass")) {
      const json& p = j["compass"];
      check_keys(p, {"step0", "shrink", "tol", "max_evaluations"}, "compass");
      take(p, "step0", c.compass.step0);
      take(p, "shrink", c.compass.shrink);
      take(p, "tol", c.compass.tol);
      take(p, "max_evaluations", c.compass.max_evaluations);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trace serialization

json trace_to_json(const MaxEntryTrace& t) {
  json recs = json::array();
  for (const auto& r : t.records)
    recs.push_back({{"k", r.k},
                    {"rank", r.rank},
                    {"lambda", real_or_null(r.lambda)},
                    {"term_maxima", r.term_maxima},
                    {"tolerance_not_met", r.tolerance_not_met}});
  json cands = json::array();
  for (const auto& c : t.candidates) cands.push_back({{"index", multi_index_to_json(c.index)}, {"value", c.value}});
  return {{"method", to_string(t.method)},
          {"iterations", t.iterations()},
          {"terminated", t.terminated},
          {"degenerate_plateau", t.degenerate_plateau},
          {"final_rank", t.final_iterate.rank()},
          {"records", recs},
          {"candidates", cands}};
}

std::string trace_to_csv(const MaxEntryTrace& t) {
  std::size_t width = 0;
  for (const auto& r : t.records) width = std::max(width, r.term_maxima.size());
  std::ostringstream out;
  out << "k,rank,lambda";
  for (std::size_t i = 1; i <= width; ++i) out << ",term_max_" << i;
  out << '\n';
  for (const auto& r : t.records) {
    out << r.k << ',' << r.rank << ',' << csv_real(r.lambda);
    for (std::size_t i = 0; i < width; ++i) {
      out << ',';
      if (i < r.term_maxima.size()) out << format_real(r.term_maxima[i]);
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Trials

ConvergenceRun run_convergence_trial(const ExperimentConfig& cfg, std::uint64_t seed) {
  ConvergenceRun run;
  run.instance = planted_to_target(cfg.dims, cfg.modes, cfg.rank, cfg.low, cfg.high, cfg.spike, 1, seed);
  run.trace = find_max_entries(run.instance.tensor, cfg.search);
  run.located = !run.trace.candidates.empty() && run.trace.candidates.front().index == run.instance.locations[0];
  return run;
}

TwoMaximaRun run_two_maxima_trial(const ExperimentConfig& cfg, std::uint64_t seed) {
  TwoMaximaRun run;
  run.instance = planted_to_target(cfg.dims, cfg.modes, cfg.rank, cfg.low, cfg.high, cfg.spike, 2, seed);
  run.fixed = find_max_entries(run.instance.tensor, cfg.search);

  MaxEntrySearchConfig ext = cfg.search;
  ext.termination = Termination::rank_threshold(1);
  ext.k_max = cfg.extended_k_max;
  run.extended = find_max_entries(run.instance.tensor, ext);

  const double tol = 1e-6 * std::abs(cfg.spike);
  run.both_reported = true;
  for (const auto& loc : run.instance.locations) {
    const auto it = std::find_if(run.fixed.candidates.begin(), run.fixed.candidates.end(),
                                 [&](const Candidate& c) { return c.index == loc; });
    if (it == run.fixed.candidates.end() || std::abs(it->value - cfg.spike) > tol) run.both_reported = false;
  }
  run.collapsed = run.extended.final_iterate.rank() == 1 && !run.extended.candidates.empty() &&
                  std::find(run.instance.locations.begin(), run.instance.locations.end(),
                            run.extended.candidates.front().index) != run.instance.locations.end();
  return run;
}

CompareTrial run_compare_trial(const ExperimentConfig& cfg, int trial) {
  CompareTrial t;
  t.trial = trial;
  t.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(trial));
  const PlantedInstance inst = planted_added(cfg.dims, cfg.modes, cfg.rank, cfg.low, cfg.high, cfg.spike, t.seed);
  t.planted = inst.locations[0];
  t.peak = inst.peaks[0];

  MaxEntrySearchConfig sc = cfg.search;
  sc.method = SearchMethod::PowerMethod;
  auto t0 = Clock::now();
  MaxEntryTrace p = find_max_entries(inst.tensor, sc);
  t.power_seconds = seconds_since(t0);
  sc.method = SearchMethod::Squaring;
  t0 = Clock::now();
  MaxEntryTrace s = find_max_entries(inst.tensor, sc);
  t.squaring_seconds = seconds_since(t0);

  t.power_iterations = p.iterations();
  t.squaring_iterations = s.iterations();
  t.power_terminated = p.terminated;
  t.squaring_terminated = s.terminated;
  if (!p.candidates.empty()) t.power_found = p.candidates.front().index;
  if (!s.candidates.empty()) t.squaring_found = s.candidates.front().index;
  return t;
}

std::vector<CompareTrial> run_compare_trials(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<CompareTrial> out(static_cast<std::size_t>(cfg.trials));
  unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, static_cast<unsigned>(cfg.trials));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int i = next++; i < cfg.trials; i = next++) {
      try {
        out[static_cast<std::size_t>(i)] = run_compare_trial(cfg, i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

AckleyRun run_ackley_problem(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  AckleyRun run{build_ackley_problem(cfg.ackley), {}, 0.0, 0.0, 0.0, 0.0};
  const AckleyParams p = run.problem.params;
  OptimizeOptions opt;
  opt.initial_reduction = cfg.reduction;
  opt.search = cfg.search;
  opt.compass = cfg.compass;
  opt.objective = [p](std::span<const double> x) { return ackley_eval(p, x); };
  run.report = optimize_function(run.problem.function, run.problem.grid, opt);

  auto distance = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (Index i = 0; i < p.d; ++i) {
      const double t = x[static_cast<std::size_t>(i)] - p.center_at(i);
      s += t * t;
    }
    return std::sqrt(s);
  };
  run.tensor_distance = distance(run.report.tensor_point);
  run.refined_distance = distance(run.report.refined.point);
  run.refined_relative_error = std::abs(run.report.refined.value - p.max_value()) / p.max_value();
  run.seconds = seconds_since(t0);
  return run;
}

// ---------------------------------------------------------------------------
// File-writing drivers

ExperimentOutput run_demo_convergence(const ExperimentConfig& cfg) {
  cfg.validate();
  OutputDir dir(cfg.out_dir);
  std::ostringstream trials, timing;
  trials << "trial,seed,iterations,final_rank,terminated,located,planted,found\n";
  timing << "trial,seconds\n";
  int located = 0, rank_one_by_10 = 0;
  std::vector<double> iters;
  for (int i = 0; i < cfg.trials; ++i) {
    const std::uint64_t seed = cfg.trials == 1 ? cfg.seed : derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    const ConvergenceRun run = run_convergence_trial(cfg, seed);
    if (i == 0) {
      dir.text("trace.csv", trace_to_csv(run.trace));
      json t = trace_to_json(run.trace);
      t["planted"] = multi_index_to_json(run.instance.locations[0]);
      t["peak"] = run.instance.peaks[0];
      dir.json_file("trace.json", t);
    }
    const auto& tr = run.trace;
    located += run.located;
    const bool fast = tr.terminated && tr.final_iterate.rank() == 1 && tr.iterations() <= 10;
    rank_one_by_10 += fast && run.located;
    iters.push_back(tr.iterations());
    trials << i << ',' << seed << ',' << tr.iterations() << ',' << tr.final_iterate.rank() << ',' << tr.terminated
           << ',' << run.located << ',' << index_string(run.instance.locations[0]) << ','
           << (tr.candidates.empty() ? "" : index_string(tr.candidates.front().index)) << '\n';
    timing << i << ',' << format_real(tr.total_seconds()) << '\n';
  }
  dir.text("trials.csv", trials.str());
  json summary = {{"trials", cfg.trials},
                  {"located", located},
                  {"rank_one_within_10_at_planted", rank_one_by_10},
                  {"median_iterations", median(iters)},
                  {"max_iterations", iters.empty() ? 0.0 : *std::max_element(iters.begin(), iters.end())}};
  dir.json_file("summary.json", summary);
  dir.text("timing.csv", timing.str());
  return dir.finish(cfg, summary);
}

ExperimentOutput run_demo_two_maxima(const ExperimentConfig& cfg) {
  cfg.validate();
  OutputDir dir(cfg.out_dir);
  std::ostringstream trials;
  trials << "trial,seed,fixed_iterations,fixed_rank,both_reported,extended_iterations,extended_rank,collapsed\n";
  int both = 0, collapsed = 0;
  for (int i = 0; i < cfg.trials; ++i) {
    const std::uint64_t seed = cfg.trials == 1 ? cfg.seed : derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    const TwoMaximaRun run = run_two_maxima_trial(cfg, seed);
    if (i == 0) {
      dir.text("trace_fixed.csv", trace_to_csv(run.fixed));
      dir.text("trace_extended.csv", trace_to_csv(run.extended));
      json planted = json::array();
      for (std::size_t k = 0; k < run.instance.locations.size(); ++k)
        planted.push_back({{"index", multi_index_to_json(run.instance.locations[k])}, {"value", run.instance.peaks[k]}});
      dir.json_file("candidates.json", {{"planted", planted},
                                        {"fixed", trace_to_json(run.fixed)},
                                        {"extended", trace_to_json(run.extended)}});
    }
    both += run.both_reported;
    collapsed += run.collapsed;
    trials << i << ',' << seed << ',' << run.fixed.iterations() << ',' << run.fixed.final_iterate.rank() << ','
           << run.both_reported << ',' << run.extended.iterations() << ',' << run.extended.final_iterate.rank() << ','
           << run.collapsed << '\n';
  }
  dir.text("trials.csv", trials.str());
  json summary = {{"trials", cfg.trials}, {"both_reported", both}, {"collapsed", collapsed}};
  dir.json_file("summary.json", summary);
  return dir.finish(cfg, summary);
}

ExperimentOutput run_compare(const ExperimentConfig& cfg) {
  const std::vector<CompareTrial> res = run_compare_trials(cfg);
  OutputDir dir(cfg.out_dir);
  std::ostringstream trials, timing;
  trials << "trial,seed,planted,peak,power_iterations,squaring_iterations,power_correct,squaring_correct,"
            "power_terminated,squaring_terminated\n";
  timing << "trial,power_seconds,squaring_seconds\n";
  int pc = 0, sq = 0, fewer = 0;
  std::vector<double> pi, si, pt, st;
  std::map<int, std::pair<int, int>> hist;
  for (const auto& t : res) {
    pc += t.power_correct();
    sq += t.squaring_correct();
    fewer += t.squaring_iterations < t.power_iterations;
    pi.push_back(t.power_iterations);
    si.push_back(t.squaring_iterations);
    pt.push_back(t.power_seconds);
    st.push_back(t.squaring_seconds);
    ++hist[t.power_iterations].first;
    ++hist[t.squaring_iterations].second;
    trials << t.trial << ',' << t.seed << ',' << index_string(t.planted) << ',' << format_real(t.peak) << ','
           << t.power_iterations << ',' << t.squaring_iterations << ',' << t.power_correct() << ','
           << t.squaring_correct() << ',' << t.power_terminated << ',' << t.squaring_terminated << '\n';
    timing << t.trial << ',' << format_real(t.power_seconds) << ',' << format_real(t.squaring_seconds) << '\n';
  }
  std::ostringstream h;
  h << "iterations,power,squaring\n";
  for (const auto& [k, c] : hist) h << k << ',' << c.first << ',' << c.second << '\n';
  dir.text("trials.csv", trials.str());
  dir.text("histogram.csv", h.str());
  const double n = static_cast<double>(cfg.trials);
  json summary = {{"trials", cfg.trials},
                  {"power_correct", pc},
                  {"squaring_correct", sq},
                  {"squaring_fewer_iterations", fewer},
                  {"squaring_fewer_fraction", fewer / n},
                  {"median_power_iterations", median(pi)},
                  {"median_squaring_iterations", median(si)}};
  dir.json_file("summary.json", summary);
  dir.text("timing.csv", timing.str());
  const json tsum = {{"median_power_seconds", median(pt)},
                     {"median_squaring_seconds", median(st)},
                     {"squaring_median_faster", median(st) < median(pt)}};
  dir.json_file("timing_summary.json", tsum);
  json all = summary;
  all["timing"] = tsum;
  return dir.finish(cfg, all);
}

ExperimentOutput run_ackley(const ExperimentConfig& cfg) {
  cfg.validate();
  const AckleyRun run = run_ackley_problem(cfg);
  OutputDir dir(cfg.out_dir);
  const auto& pr = run.problem;
  const auto& rep = run.report;
  const auto& g = pr.expansion;

  double innermost = std::numeric_limits<double>::infinity();
  for (double x : pr.axis.coords)
    if (x != 0.0) innermost = std::min(innermost, std::abs(x));
  const std::vector<double> probes = log_spaced(g.delta, g.x_max, 100'000);

  json ranks = json::array();
  for (const auto& r : rep.trace.records) ranks.push_back(r.rank);
  json report = {
      {"expansion", {{"terms", g.terms()}, {"h", g.h}, {"s_start", g.s_start}, {"delta", g.delta},
                     {"x_max", g.x_max}, {"sup_error", certify_expansion(g, probes)}}},
      {"grid", {{"points_per_dim", pr.axis.coords.size()}, {"points_before_dedup", pr.axis.count_before_dedup},
                {"radial_points", pr.radial_count}, {"cosine_points", pr.cosine_count},
                {"radial_kept", pr.axis.radial_kept}, {"cosine_kept", pr.axis.cosine_kept},
                {"crossover_radius", pr.axis.crossover_radius}, {"innermost_nonzero_radius", innermost},
                {"delta_inside_innermost", g.delta <= innermost}}},
      {"sampled_rank", rep.sampled_rank},
      {"reduced_rank", rep.reduced_rank},
      {"initial_reduction_error", rep.initial_reduction_error},
      {"squaring_iterations", rep.trace.iterations()},
      {"squaring_terminated", rep.trace.terminated},
      {"iterate_ranks", ranks},
      {"tensor_index", multi_index_to_json(rep.tensor_index)},
      {"tensor_point", rep.tensor_point},
      {"tensor_entry", rep.tensor_entry},
      {"tensor_value", rep.tensor_objective},
      {"tensor_distance", run.tensor_distance},
      {"refined_point", rep.refined.point},
      {"refined_value", rep.refined.value},
      {"refined_distance", run.refined_distance},
      {"refined_relative_error", run.refined_relative_error},
      {"compass_evaluations", rep.refined.evaluations},
      {"max_value", pr.params.max_value()}};
  dir.json_file("report.json", report);
  dir.text("trace.csv", trace_to_csv(rep.trace));
  dir.json_file("timing.json", {{"seconds", run.seconds}, {"squaring_seconds", rep.trace.total_seconds()}});
  return dir.finish(cfg, report);
}

ExperimentOutput reduce_file(const fs::path& input, const ExperimentConfig& cfg) {
  cfg.reduction.validate();
  const CTD u = read_ctd_file(input);
  const ReductionResult r = reduce(u, cfg.reduction);
  OutputDir dir(cfg.out_dir);
  dir.text("reduced.json", ctd_to_json_string(r.ctd) + "\n");
  json meta = {{"input", input.string()},
               {"input_rank", r.input_rank},
               {"rank", r.rank()},
               {"relative_error", r.relative_error},
               {"norm", to_string(cfg.reduction.norm)},
               {"algorithm", to_string(cfg.reduction.algorithm)},
               {"tolerance_met", r.tolerance_met},
               {"als_fallback", r.als_fallback},
               {"precision_warning", r.precision_warning},
               {"sweeps", r.sweeps}};
  dir.json_file("metadata.json", meta);
  return dir.finish(cfg, meta);
}

ExperimentOutput max_entry_file(const fs::path& input, const ExperimentConfig& cfg) {
  cfg.search.validate();
  const CTD u = read_ctd_file(input);
  const MaxEntryTrace t = find_max_entries(u, cfg.search);
  OutputDir dir(cfg.out_dir);
  json result = trace_to_json(t);
  result["input"] = input.string();
  if (!t.candidates.empty()) {
    result["location"] = multi_index_to_json(t.candidates.front().index);
    result["value"] = t.candidates.front().value;
  }
  dir.json_file("result.json", result);
  dir.text("trace.csv", trace_to_csv(t));
  dir.text("final_iterate.json", ctd_to_json_string(t.final_iterate) + "\n");
  json summary = {{"iterations", t.iterations()}, {"terminated", t.terminated}};
  if (result.contains("location")) {
    summary["location"] = result["location"];
    summary["value"] = result["value"];
  }
  return dir.finish(cfg, summary);
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "demo-convergence") return run_demo_convergence(cfg);
  if (cfg.experiment == "demo-two-maxima") return run_demo_two_maxima(cfg);
  if (cfg.experiment == "compare") return run_compare(cfg);
  if (cfg.experiment == "ackley") return run_ackley(cfg);
  throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

}  // namespace ctdopt
