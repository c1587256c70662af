// ctdopt: experiment driver and file-level access to reduction and
// maximum-entry search. Prints a JSON summary on success; on failure prints
// {"error": kind, "message": ...} to stderr and exits nonzero.

#include "ctdopt/errors.hpp"
#include "ctdopt/experiments.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using ctdopt::ExperimentConfig;

struct Flags {
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<double> epsilon;
  std::optional<std::string> norm;
  std::optional<std::string> algorithm;
  std::optional<std::string> termination;
  std::optional<std::string> method;
  std::optional<int> k_max;
  std::optional<int> threads;
  std::optional<std::string> out;
  std::optional<std::string> config;
  std::string input;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--trials", f.trials, "Number of trials");
  sub->add_option("--epsilon", f.epsilon, "Reduction tolerance");
  sub->add_option("--norm", f.norm, "Reduction norm")->check(CLI::IsMember({"frobenius", "snorm"}));
  sub->add_option("--algorithm", f.algorithm, "Reduction algorithm")->check(CLI::IsMember({"als", "id"}));
  sub->add_option("--termination", f.termination, "fixed:N | lambda:DELTA | rank:R");
  sub->add_option("--method", f.method, "Search method")->check(CLI::IsMember({"power", "squaring"}));
  sub->add_option("--k-max", f.k_max, "Iteration cap for the search");
  sub->add_option("--threads", f.threads, "Worker threads (compare)");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--config", f.config, "JSON file whose keys override the flags");
}

ExperimentConfig build_config(const std::string& name, const Flags& f) {
  ExperimentConfig c = ctdopt::default_config(name);
  if (f.seed) c.seed = *f.seed;
  if (f.trials) c.trials = *f.trials;
  if (f.epsilon) c.reduction.epsilon = *f.epsilon;
  if (f.norm) c.reduction.norm = ctdopt::parse_norm(*f.norm);
  if (f.algorithm) c.reduction.algorithm = ctdopt::parse_algorithm(*f.algorithm);
  if (c.search.reduction) c.search.reduction = c.reduction;
  if (f.termination) c.search.termination = ctdopt::Termination::parse(*f.termination);
  if (f.method) c.search.method = *f.method == "power" ? ctdopt::SearchMethod::PowerMethod : ctdopt::SearchMethod::Squaring;
  if (f.k_max) c.search.k_max = *f.k_max;
  if (f.threads) c.threads = *f.threads;
  if (f.out) c.out_dir = *f.out;
  if (f.config) {
    std::ifstream in(*f.config);
    if (!in) throw ctdopt::IoError("cannot open config " + *f.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ctdopt::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ctdopt::apply_overrides(c, j);
  }
  c.validate();
  return c;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maximum-entry search and rank reduction for canonical tensor decompositions"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::string> batch = {"demo-convergence", "demo-two-maxima", "compare", "ackley"};
  for (const auto& name : batch) add_common(app.add_subcommand(name, "Run the " + name + " experiment"), flags);
  auto* red = app.add_subcommand("reduce", "Reduce the rank of a CTD file");
  auto* mx = app.add_subcommand("max-entry", "Locate the largest entry of a CTD file");
  for (auto* sub : {red, mx}) {
    add_common(sub, flags);
    sub->add_option("input", flags.input, "CTD JSON file")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    const ExperimentConfig cfg = build_config(name, flags);
    ctdopt::ExperimentOutput out;
    if (name == "reduce")
      out = ctdopt::reduce_file(flags.input, cfg);
    else if (name == "max-entry")
      out = ctdopt::max_entry_file(flags.input, cfg);
    else
      out = ctdopt::run_experiment(cfg);
    nlohmann::json files = nlohmann::json::array();
    for (const auto& p : out.files) files.push_back(p.string());
    std::cout << nlohmann::json{{"summary", out.summary}, {"files", files}}.dump(2) << '\n';
    return 0;
  } catch (const ctdopt::ConfigError& e) {
    return fail(e.kind(), e.what(), 2);
  } catch (const ctdopt::Error& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}
