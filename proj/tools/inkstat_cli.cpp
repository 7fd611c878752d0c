// inkstat: command-line front end for the tattoo-removal analysis.
//
// Every subcommand reads a data source (a run config, an input directory or
// the built-in synthetic cohort) and writes into --out. Exit status: 0 on
// success, 2 when the data produced issues, 1 on error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "inkstat/boost_rank.hpp"
#include "inkstat/report.hpp"

namespace fs = std::filesystem;
using namespace inkstat;

namespace {

constexpr int kExitIssues = 2;
constexpr int kExitError = 1;

struct Flags {
  std::string config;
  std::string input;
  bool synth = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<double> alpha;
  std::optional<long> n_perm;
  std::optional<int> sims;
  std::optional<std::string> out;
};

void add_source(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Run config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--input", f.input, "Directory holding patients.csv, tattoos.csv, treatments.csv")
      ->check(CLI::ExistingDirectory);
  cmd->add_flag("--synth", f.synth, "Use the default synthetic cohort");
  cmd->add_option("--seed", f.seed, "Seed for synthesis and stochastic stages");
  cmd->add_option("--out", f.out, "Output path");
}

void add_analysis(CLI::App* cmd, Flags& f) {
  cmd->add_option("--mode", f.mode, "Series mode: full | first-arrival");
  cmd->add_option("--alpha", f.alpha, "Significance level");
}

report::RunConfig resolve(const Flags& f) {
  report::RunConfig c;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError(fmt::format("{}: {}", f.config, e.what()));
    }
    c = report::run_config_from_json(j, fs::path(f.config).parent_path());
  }
  if (!f.input.empty()) {
    c.input = report::input_dir(f.input);
    c.synth.reset();
  }
  if (f.synth) {
    c.synth = SynthConfig{};
    c.input.reset();
  }
  if (f.seed) c.seed = *f.seed;
  if (f.mode) c.mode = parse_series_mode(*f.mode);
  if (f.alpha) c.alpha = *f.alpha;
  if (f.n_perm) c.n_perm = *f.n_perm;
  if (f.sims) c.rank.sims = *f.sims;
  if (f.out) c.out = *f.out;
  return c;
}

int finish(std::size_t issues) {
  if (issues == 0) return 0;
  fmt::print(stderr, "{} data issue(s); see issues.csv\n", issues);
  return kExitIssues;
}

void print_table(const report::Table& t) { std::cout << report::to_markdown(t) << '\n'; }

// Issues table beside the other outputs of a subcommand.
std::size_t write_issues(const fs::path& dir, const Dataset& data) {
  std::vector<fs::path> written;
  report::write_table(dir, report::issues_table(data.issues), written);
  return data.issues.size();
}

int cmd_synth(const Flags& f) {
  auto c = resolve(f);
  if (!c.synth) c.synth = SynthConfig{};
  c.input.reset();
  c.validate(false);
  const auto data = report::load_dataset(c);
  const fs::path dir = c.out;
  report::write_file(dir / "patients.csv", patients_to_csv(data));
  report::write_file(dir / "tattoos.csv", tattoos_to_csv(data));
  report::write_file(dir / "treatments.csv", treatments_to_csv(data));
  report::write_file(dir / "synth_manifest.json", synth_manifest(*c.synth, *c.seed, data).dump(2) + "\n");
  fmt::print("{} patients, {} tattoos, {} series -> {}\n", data.patients.size(), data.tattoos.size(),
             data.series.size(), dir.string());
  return 0;
}

int cmd_ingest(const Flags& f) {
  const auto c = resolve(f);
  c.validate(false);
  const auto data = report::load_dataset(c);
  std::size_t events = 0;
  for (const auto& s : data.series) events += s.size();
  fmt::print("patients {}\ntattoos {}\nseries {}\ntreatments {}\nissues {}\n", data.patients.size(),
             data.tattoos.size(), data.series.size(), events, data.issues.size());
  for (const auto& i : data.issues)
    fmt::print(stderr, "{}:{}: {}: {}\n", i.source, i.line, to_string(i.kind), i.message);
  if (f.out) write_issues(c.out, data);
  return finish(data.issues.size());
}

int cmd_featurize(const Flags& f) {
  const auto c = resolve(f);
  c.validate(false);
  const auto data = report::load_dataset(c);
  const auto rows = featurize(data, c.mode);
  const fs::path path = f.out ? c.out : fs::path("features.csv");
  report::write_file(path, features_to_csv(rows));
  fmt::print("{} rows ({}) -> {}\n", rows.size(), to_string(c.mode), path.string());
  return finish(data.issues.size());
}

int cmd_tests(const Flags& f) {
  const auto c = resolve(f);
  c.validate(true);
  const auto data = report::load_dataset(c);
  const auto rows = featurize(data, c.mode);
  const auto full = featurize(data, SeriesMode::full);
  std::vector<fs::path> written;
  for (const auto& t : {report::t4_proportions(data, c.alpha), report::t5_quartiles(data, rows, c.alpha),
                        report::t6_ttests(rows, c.alpha), report::t7_nonparametric(rows, c.alpha, c.n_perm, *c.seed),
                        report::t8_kruskal(data, full, c.alpha), report::t8_anova(data, full, c.alpha),
                        report::t8_tukey(data, full, c.alpha)}) {
    report::write_table(c.out, t, written);
    fmt::print("## {}\n\n", t.name);
    print_table(t);
  }
  return finish(write_issues(c.out, data));
}

int cmd_logit(const Flags& f) {
  const auto c = resolve(f);
  c.validate(false);
  const auto data = report::load_dataset(c);
  const auto rows = featurize(data, c.mode);
  const auto pruned = report::retained_features(rows, c.prune_threshold);
  const auto fit = fit_logit(rows, pruned.retained);
  std::vector<fs::path> written;
  const auto t = report::logit_table(fit, c.alpha);
  report::write_table(c.out, t, written);
  print_table(t);
  fmt::print("n = {}, log-likelihood {:.6f}, {} ({} iterations)\n", fit.n_obs, fit.log_likelihood,
             fit.converged ? "converged" : "not converged: " + fit.message, fit.iterations);
  return finish(data.issues.size() + pruned.issues.size());
}

int cmd_rank(const Flags& f) {
  const auto c = resolve(f);
  c.validate(true);
  const auto data = report::load_dataset(c);
  const auto rows = featurize(data, c.mode);
  const auto pruned = report::retained_features(rows, c.prune_threshold);
  const auto m = gbm::complete_cases(rows, pruned.retained);
  const auto ranking = gbm::bootstrap_rank(m.x, m.y, m.names, c.rank, *c.seed);
  const auto fit = fit_logit(rows, pruned.retained);
  std::vector<fs::path> written;
  report::write_table(c.out, report::rank_histogram_table(ranking), written);
  const auto t = report::t10_models(ranking, fit, c.alpha);
  report::write_table(c.out, t, written);
  print_table(t);
  return finish(data.issues.size() + pruned.issues.size());
}

int cmd_report(const Flags& f) {
  const auto c = resolve(f);
  const auto result = report::run(c);
  fmt::print("{} files -> {}\n", result.files.size(), c.out.string());
  return finish(result.issues);
}

int cmd_plot(const Flags& f, const std::string& tattoo, const std::string& parameter) {
  const auto c = resolve(f);
  c.validate(false);
  const auto p = report::parse_parameter(parameter);
  const auto data = report::load_dataset(c);
  const auto* s = data.find_series(tattoo);
  if (!s) throw ParameterError(fmt::format("no treatment series for tattoo '{}'", tattoo));
  const fs::path path = f.out ? c.out : fs::path(fmt::format("{}_{}.svg", tattoo, report::to_string(p)));
  report::write_file(path, report::plot_series(*s, p));
  fmt::print("{} events -> {}\n", s->size(), path.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Statistical analysis of laser tattoo-removal treatment records"};
  app.set_version_flag("--version", std::string(report::kVersion));
  app.require_subcommand(1);

  Flags f;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic cohort");
  auto* ingest = app.add_subcommand("ingest", "Validate the three input files");
  auto* feat = app.add_subcommand("featurize", "Per-tattoo summary features");
  auto* tests = app.add_subcommand("tests", "Hypothesis-test tables");
  auto* logit = app.add_subcommand("logit", "Logistic regression on the retained features");
  auto* rank = app.add_subcommand("rank", "Bootstrap boosting importance ranks");
  auto* rep = app.add_subcommand("report", "Full reproducible report bundle");
  auto* plot = app.add_subcommand("plot", "Raw and differenced series of one tattoo");

  for (auto* cmd : {synth, ingest, feat, tests, logit, rank, rep, plot}) add_source(cmd, f);
  for (auto* cmd : {feat, tests, logit, rank, rep}) add_analysis(cmd, f);
  for (auto* cmd : {tests, rep}) cmd->add_option("--n-perm", f.n_perm, "Randomization-test permutations");
  for (auto* cmd : {rank, rep}) cmd->add_option("--sims", f.sims, "Bootstrap fits");

  std::string tattoo, parameter = "fluence";
  plot->add_option("--tattoo", tattoo, "Tattoo id")->required();
  plot->add_option("--parameter", parameter, "fluence | spot_size | wavelength | frequency");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (*synth) return cmd_synth(f);
    if (*ingest) return cmd_ingest(f);
    if (*feat) return cmd_featurize(f);
    if (*tests) return cmd_tests(f);
    if (*logit) return cmd_logit(f);
    if (*rank) return cmd_rank(f);
    if (*rep) return cmd_report(f);
    if (*plot) return cmd_plot(f, tattoo, parameter);
  } catch (const Error& e) {
    fmt::print(stderr, "inkstat: {}\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "inkstat: unexpected failure: {}\n", e.what());
    return kExitError;
  }
  return kExitError;
}
