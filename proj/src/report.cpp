#include "inkstat/report.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "inkstat/csv.hpp"
#include "inkstat/descriptive.hpp"
#include "inkstat/hypothesis_tests.hpp"
#include "seeding.hpp"

namespace inkstat::report {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Salts separating the seed streams of the stochastic stages.
constexpr std::uint64_t kT7Stream = 7;
constexpr std::uint64_t kRankStream = 10;

const std::string kNA = "NA";

std::string star(bool significant) { return significant ? "*" : ""; }

std::string proportion(long x, long n) { return n > 0 ? fmt::format("{:.5f}", static_cast<double>(x) / n) : kNA; }

// p-value and star cells of a report, or NA when the data cannot support
// the test.
std::array<std::string, 2> guarded(const std::function<htest::TestReport()>& test) {
  try {
    const auto r = test();
    return {format_p(r.p_value), star(r.significant)};
  } catch (const InsufficientDataError&) {
  } catch (const DegenerateError&) {
  }
  return {kNA, ""};
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string label_of(std::string_view name) {
  const auto f = parse_feature(name);
  return f ? std::string(feature_label(*f)) : std::string(name);
}

struct Split {
  std::vector<double> yes, no;  // complication, none
};

Split by_label(std::span<const FeatureRow> rows, Feature f) {
  Split s;
  for (const auto& r : rows)
    if (r[f]) (r.label ? s.yes : s.no).push_back(*r[f]);
  return s;
}

// Tattoo-age quartile cut points over every tattoo with a recorded age.
QuartileBinning age_quartiles(const Dataset& data) {
  std::vector<double> ages;
  for (const auto& t : data.tattoos)
    if (t.tattoo_age) ages.push_back(*t.tattoo_age);
  const std::vector<int> zeros(ages.size(), 0);
  return quartile_bin(ages, zeros);
}

// Per-quartile values of one full-series feature.
std::vector<std::vector<double>> age_groups(const Dataset& data, std::span<const FeatureRow> rows, Feature f,
                                            const QuartileBinning& q) {
  std::vector<std::vector<double>> groups(4);
  for (const auto& r : rows) {
    const auto* t = data.find_tattoo(r.tattoo_id);
    if (!t || !t->tattoo_age || !r[f]) continue;
    groups[quartile_of(*t->tattoo_age, q.cut_points)].push_back(*r[f]);
  }
  return groups;
}

std::vector<std::vector<double>> nonempty(std::vector<std::vector<double>> groups) {
  std::erase_if(groups, [](const auto& g) { return g.empty(); });
  return groups;
}

}  // namespace

void RunConfig::validate(bool stochastic) const {
  if (synth.has_value() == input.has_value())
    throw ParameterError("exactly one of a synthetic config or input paths is required");
  if ((stochastic || synth) && !seed) throw ParameterError("a seed is required for stochastic stages");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError(fmt::format("alpha must lie in (0,1), got {}", alpha));
  if (n_perm < 1) throw ParameterError("n_perm must be at least 1");
  if (rank.sims < 1) throw ParameterError("sims must be at least 1");
  if (!(prune_threshold > 0.0 && prune_threshold <= 1.0)) throw ParameterError("prune_threshold must lie in (0,1]");
  if (rank.grid.points().empty()) throw ParameterError("boosting grid is empty");
}

InputPaths input_dir(const std::filesystem::path& dir) {
  return {dir / "patients.csv", dir / "tattoos.csv", dir / "treatments.csv"};
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ParameterError("run config must be a JSON object");
  RunConfig c;
  const auto path_of = [&](const json& v) {
    fs::path p = v.get<std::string>();
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "synth") {
        c.synth = synth_config_from_json(value);
      } else if (key == "input") {
        if (value.is_string()) {
          c.input = input_dir(path_of(value));
        } else {
          for (const auto& [k, _] : value.items())
            if (k != "patients" && k != "tattoos" && k != "treatments")
              throw ParameterError(fmt::format("unknown input key '{}'", k));
          c.input = InputPaths{path_of(value.at("patients")), path_of(value.at("tattoos")),
                               path_of(value.at("treatments"))};
        }
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "mode") {
        c.mode = parse_series_mode(value.get<std::string>());
      } else if (key == "alpha") {
        c.alpha = value.get<double>();
      } else if (key == "n_perm") {
        c.n_perm = value.get<long>();
      } else if (key == "sims") {
        c.rank.sims = value.get<int>();
      } else if (key == "prune_threshold") {
        c.prune_threshold = value.get<double>();
      } else if (key == "retune_each") {
        c.rank.retune_each = value.get<bool>();
      } else if (key == "out") {
        c.out = path_of(value);
      } else if (key == "grid") {
        for (const auto& [k, v] : value.items()) {
          if (k == "trees") c.rank.grid.trees = v.get<std::vector<int>>();
          else if (k == "shrinkage") c.rank.grid.shrinkage = v.get<std::vector<double>>();
          else if (k == "max_splits") c.rank.grid.max_splits = v.get<std::vector<int>>();
          else if (k == "min_leaf") c.rank.grid.min_leaf = v.get<int>();
          else throw ParameterError(fmt::format("unknown grid key '{}'", k));
        }
      } else if (key == "cv") {
        for (const auto& [k, v] : value.items()) {
          if (k == "folds") c.rank.cv.folds = v.get<int>();
          else if (k == "repeats") c.rank.cv.repeats = v.get<int>();
          else if (k == "metric") c.rank.cv.metric = gbm::parse_metric(v.get<std::string>());
          else throw ParameterError(fmt::format("unknown cv key '{}'", k));
        }
      } else {
        throw ParameterError(fmt::format("unknown run config key '{}'", key));
      }
    }
  } catch (const json::exception& e) {
    throw ParameterError(fmt::format("run config: {}", e.what()));
  }
  return c;
}

json to_json(const RunConfig& c) {
  json j;
  if (c.synth) j["synth"] = to_json(*c.synth);
  if (c.input)
    j["input"] = {{"patients", c.input->patients.generic_string()},
                  {"tattoos", c.input->tattoos.generic_string()},
                  {"treatments", c.input->treatments.generic_string()}};
  if (c.seed) j["seed"] = *c.seed;
  j["mode"] = std::string(to_string(c.mode));
  j["alpha"] = c.alpha;
  j["n_perm"] = c.n_perm;
  j["sims"] = c.rank.sims;
  j["prune_threshold"] = c.prune_threshold;
  j["retune_each"] = c.rank.retune_each;
  j["grid"] = {{"trees", c.rank.grid.trees},
               {"shrinkage", c.rank.grid.shrinkage},
               {"max_splits", c.rank.grid.max_splits},
               {"min_leaf", c.rank.grid.min_leaf}};
  j["cv"] = {{"folds", c.rank.cv.folds},
             {"repeats", c.rank.cv.repeats},
             {"metric", std::string(gbm::to_string(c.rank.cv.metric))}};
  j["out"] = c.out.generic_string();
  return j;
}

std::string format_p(double p) {
  if (!std::isfinite(p)) return kNA;
  if (p != 0.0 && p < 1e-4) return fmt::format("{:.3e}", p);
  return fmt::format("{:.4g}", p);
}

std::string format_number(double v, int significant) {
  if (!std::isfinite(v)) return kNA;
  return fmt::format("{:.{}g}", v, significant);
}

std::string to_csv(const Table& table) {
  std::ostringstream out;
  csv::write_row(out, table.header);
  for (const auto& r : table.rows) csv::write_row(out, r);
  return out.str();
}

std::string to_markdown(const Table& table) {
  const bool fold = table.header.size() >= 2 && table.header.back() == "sig" &&
                    table.header[table.header.size() - 2] == "p_value";
  const std::size_t cols = fold ? table.header.size() - 1 : table.header.size();
  const auto cell = [](std::string s) {
    std::string out;
    for (const char c : s) out += c == '|' ? std::string("\\|") : std::string(1, c);
    return out;
  };
  std::string md = "|";
  for (std::size_t k = 0; k < cols; ++k) md += " " + cell(table.header[k]) + " |";
  md += "\n|";
  for (std::size_t k = 0; k < cols; ++k) md += " --- |";
  md += "\n";
  for (const auto& r : table.rows) {
    md += "|";
    for (std::size_t k = 0; k < cols; ++k) {
      std::string v = k < r.size() ? r[k] : "";
      if (fold && k + 1 == cols && r.size() == table.header.size()) v += r.back();
      md += " " + cell(v) + " |";
    }
    md += "\n";
  }
  return md;
}

Table t4_proportions(const Dataset& data, double alpha) {
  Table t{"t4_proportions", kT4Header, {}};
  const auto add = [&](std::string label, long x_t, long n_t, long x_f, long n_f) {
    const auto p = guarded([&] {
      if (n_t == 0 || n_f == 0) throw InsufficientDataError("empty group");
      return htest::two_prop_z(x_t, n_t, x_f, n_f, {alpha, false});
    });
    t.rows.push_back({std::move(label), proportion(x_t, n_t), proportion(x_f, n_f), p[0], p[1]});
  };
  // Complication counts by a binary split of records carrying the flag.
  const auto tally = [&](const auto& records, std::string label, auto factor) {
    long x[2] = {0, 0}, n[2] = {0, 0};
    for (const auto& r : records) {
      const std::optional<bool> f = factor(r);
      if (!f || !r.any_complication) continue;
      ++n[*f ? 1 : 0];
      x[*f ? 1 : 0] += *r.any_complication ? 1 : 0;
    }
    add(std::move(label), x[1], n[1], x[0], n[0]);
  };
  const auto above_median = [](auto values) {
    return values.empty() ? 0.0 : stats::median(values);
  };
  std::vector<double> patient_ages, tattoo_ages, fitz;
  for (const auto& p : data.patients) {
    if (p.age) patient_ages.push_back(*p.age);
    if (p.fitzpatrick) fitz.push_back(*p.fitzpatrick);
  }
  for (const auto& tt : data.tattoos)
    if (tt.tattoo_age) tattoo_ages.push_back(*tt.tattoo_age);
  const double age_med = above_median(patient_ages);
  const double tattoo_med = above_median(tattoo_ages);
  const double fitz_med = above_median(fitz);

  tally(data.tattoos, "Tattoo Complication by Colored Tattoo", [](const TattooRecord& r) { return r.colored; });
  tally(data.tattoos, "Tattoo Complication by Professional", [](const TattooRecord& r) { return r.professional; });
  tally(data.patients, "Complication by Sex (Male/Female)", [](const PatientRecord& r) { return r.sex_male; });
  tally(data.patients, "Complication by Patient Median Age", [&](const PatientRecord& r) -> std::optional<bool> {
    if (!r.age) return std::nullopt;
    return *r.age > age_med;
  });
  tally(data.patients, "Complication by Patient Ethnicity", [](const PatientRecord& r) { return r.hispanic; });
  tally(data.tattoos, "Complication by Tattoo Median Age", [&](const TattooRecord& r) -> std::optional<bool> {
    if (!r.tattoo_age) return std::nullopt;
    return *r.tattoo_age > tattoo_med;
  });
  tally(data.patients, "Complication by Patient Fitzpatrick Score", [&](const PatientRecord& r) -> std::optional<bool> {
    if (!r.fitzpatrick) return std::nullopt;
    return *r.fitzpatrick > fitz_med;
  });
  return t;
}

Table t5_quartiles(const Dataset& data, std::span<const FeatureRow> rows, double alpha) {
  Table t{"t5_quartiles", kT5Header, {}};
  const auto add = [&](const std::string& label, const std::vector<double>& values, const std::vector<int>& labels) {
    if (values.size() < 4) {
      for (const char* param : {"quartile", "n_i", "p_hat_i"})
        t.rows.push_back({label, param, kNA, kNA, kNA, kNA, kNA, ""});
      return;
    }
    const auto q = quartile_bin(values, labels);
    std::vector<std::vector<double>> counts(2);
    for (std::size_t b = 0; b < 4; ++b) {
      if (q.counts[b] == 0) continue;  // empty under ties; no information
      counts[0].push_back(static_cast<double>(q.events[b]));
      counts[1].push_back(static_cast<double>(q.counts[b] - q.events[b]));
    }
    const auto p = guarded([&] {
      if (counts[0].size() < 2) throw InsufficientDataError("fewer than two nonempty bins");
      return htest::chisq_independence(counts, alpha);
    });
    t.rows.push_back({label, "quartile", format_number(q.cut_points[0]), format_number(q.cut_points[1]),
                      format_number(q.cut_points[2]), format_number(q.max_value), "", ""});
    std::vector<std::string> n{label, "n_i"}, rate{label, "p_hat_i"};
    for (std::size_t b = 0; b < 4; ++b) {
      n.push_back(std::to_string(q.counts[b]));
      rate.push_back(q.counts[b] ? fmt::format("{:.5f}", q.rates[b]) : kNA);
    }
    n.insert(n.end(), {"", ""});
    rate.insert(rate.end(), {p[0], p[1]});
    t.rows.push_back(std::move(n));
    t.rows.push_back(std::move(rate));
  };
  const auto collect = [](const auto& records, auto value) {
    std::pair<std::vector<double>, std::vector<int>> out;
    for (const auto& r : records) {
      const std::optional<double> v = value(r);
      if (!v || !r.any_complication) continue;
      out.first.push_back(*v);
      out.second.push_back(*r.any_complication ? 1 : 0);
    }
    return out;
  };
  const auto opt = [](const auto& o) -> std::optional<double> {
    if (!o) return std::nullopt;
    return static_cast<double>(*o);
  };

  auto [a, al] = collect(data.tattoos, [&](const TattooRecord& r) { return opt(r.treatment_total); });
  add("Complication Rate by Total # of Treatments Tattoo", a, al);
  auto [b, bl] = collect(data.patients, [&](const PatientRecord& r) { return opt(r.total_tattoos); });
  add("Complication Rate by Total # of Tattoos per Patient", b, bl);
  auto [c, cl] = collect(data.patients, [&](const PatientRecord& r) { return opt(r.treatment_total); });
  add("Complication Rate by Total # of Treatments Patient", c, cl);
  std::vector<double> fl;
  std::vector<int> fll;
  for (const auto& r : rows)
    if (r[Feature::mean_fluence]) {
      fl.push_back(*r[Feature::mean_fluence]);
      fll.push_back(r.label ? 1 : 0);
    }
  add("Complication Rate by Mean Fluence (J/cm^2)", fl, fll);
  auto [d, dl] = collect(data.tattoos, [&](const TattooRecord& r) { return opt(r.tattoo_age); });
  add("Tattoo Complication Rate by Tattoo Age", d, dl);
  auto [e, el] = collect(data.patients, [&](const PatientRecord& r) { return opt(r.age); });
  add("Patient Complication Rate by Patient Age", e, el);
  return t;
}

Table t6_ttests(std::span<const FeatureRow> rows, double alpha) {
  Table t{"t6_ttests", kT6Header, {}};
  for (const Feature f : {Feature::mean_fluence, Feature::mean_diff_fluence, Feature::mean_spot, Feature::mean_diff_spot}) {
    const Split s = by_label(rows, f);
    const auto p = guarded([&] { return htest::welch_t(s.yes, s.no, alpha); });
    t.rows.push_back({std::string(feature_label(f)), s.yes.empty() ? kNA : format_number(stats::mean(s.yes)),
                      s.no.empty() ? kNA : format_number(stats::mean(s.no)), p[0], p[1]});
  }
  return t;
}

std::uint64_t randomization_seed(std::uint64_t seed, std::size_t test_index) {
  return detail::derive_seed(detail::derive_seed(seed, kT7Stream), test_index);
}

Table t7_nonparametric(std::span<const FeatureRow> rows, double alpha, long n_perm, std::uint64_t seed) {
  Table t{"t7_nonparametric", kT7Header, {}};
  const Feature features[] = {Feature::mean_wavelength,      Feature::mean_diff_frequency, Feature::sd_spot,
                              Feature::mean_diff_wavelength, Feature::mean_frequency,      Feature::mean_days_between};
  std::size_t index = 0;
  for (const Feature f : features) {
    const Split s = by_label(rows, f);
    const std::string label(feature_label(f));
    const auto w = guarded([&] { return htest::wilcoxon_rank_sum(s.yes, s.no, alpha); });
    t.rows.push_back({label, "median", s.yes.empty() ? kNA : format_number(stats::median(s.yes)),
                      s.no.empty() ? kNA : format_number(stats::median(s.no)), w[0], w[1]});
    const htest::RandomizationOptions opts{n_perm, randomization_seed(seed, index++), alpha};
    const auto r = guarded([&] { return htest::randomization_test(s.yes, s.no, opts); });
    t.rows.push_back({label, "mean", s.yes.empty() ? kNA : format_number(stats::mean(s.yes)),
                      s.no.empty() ? kNA : format_number(stats::mean(s.no)), r[0], r[1]});
  }
  return t;
}

Table t8_kruskal(const Dataset& data, std::span<const FeatureRow> full_rows, double alpha) {
  Table t{"t8_kruskal", kT8Header, {}};
  const auto q = age_quartiles(data);
  t.rows.push_back({"quartile (tattoo age, yrs)", format_number(q.cut_points[0]), format_number(q.cut_points[1]),
                    format_number(q.cut_points[2]), format_number(q.max_value), "", ""});
  t.rows.push_back({"n_i", std::to_string(q.counts[0]), std::to_string(q.counts[1]), std::to_string(q.counts[2]),
                    std::to_string(q.counts[3]), "", ""});
  for (const Feature f : kT8Features) {
    const auto groups = age_groups(data, full_rows, f, q);
    std::vector<std::string> row{std::string(feature_label(f))};
    for (const auto& g : groups) row.push_back(g.empty() ? kNA : format_number(stats::mean(g)));
    const auto p = guarded([&] { return htest::kruskal_wallis(nonempty(groups), alpha); });
    row.insert(row.end(), {p[0], p[1]});
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table t8_anova(const Dataset& data, std::span<const FeatureRow> full_rows, double alpha) {
  Table t{"t8_anova", kT8AnovaHeader, {}};
  const auto q = age_quartiles(data);
  for (const Feature f : kT8Features) {
    const auto groups = nonempty(age_groups(data, full_rows, f, q));
    std::vector<std::string> row{std::string(feature_label(f)), kNA, kNA, kNA, kNA, ""};
    try {
      const auto r = htest::one_way_anova(groups, alpha);
      row = {row[0],
             format_number(r.statistic),
             format_number(r.extras.at("df_between")),
             format_number(r.extras.at("df_within")),
             format_p(r.p_value),
             star(r.significant)};
    } catch (const InsufficientDataError&) {
    } catch (const DegenerateError&) {
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table t8_tukey(const Dataset& data, std::span<const FeatureRow> full_rows, double alpha) {
  Table t{"t8_tukey", kT8TukeyHeader, {}};
  const auto q = age_quartiles(data);
  for (const Feature f : kT8Features) {
    const auto groups = age_groups(data, full_rows, f, q);
    std::vector<std::size_t> kept;
    for (std::size_t g = 0; g < 4; ++g)
      if (!groups[g].empty()) kept.push_back(g);
    try {
      for (const auto& iv : htest::tukey_kramer(nonempty(groups), alpha))
        t.rows.push_back({std::string(feature_label(f)),
                          fmt::format("q{}-q{}", kept[iv.group_i] + 1, kept[iv.group_j] + 1), format_number(iv.diff),
                          format_number(iv.lower()), format_number(iv.upper()), star(iv.significant())});
    } catch (const InsufficientDataError&) {
    } catch (const DegenerateError&) {
    }
  }
  return t;
}

Table logit_table(const LogitFit& fit, double alpha) {
  Table t{"logit_coefficients", kLogitHeader, {}};
  for (std::size_t j = 0; j < fit.names.size(); ++j)
    t.rows.push_back({label_of(fit.names[j]), format_number(fit.coefficients[j]), format_number(fit.standard_errors[j]),
                      format_number(fit.wald_z[j]), format_p(fit.p_values[j]), star(fit.p_values[j] < alpha)});
  return t;
}

Table t10_models(const gbm::ImportanceRanking& ranking, const LogitFit& fit, double alpha) {
  Table t{"t10_models", kT10Header, {}};
  std::vector<std::size_t> order(ranking.names.size());
  for (std::size_t f = 0; f < order.size(); ++f) order[static_cast<std::size_t>(ranking.total_rank[f]) - 1] = f;
  for (const std::size_t f : order) {
    const std::size_t j = fit.index_of(ranking.names[f]);
    t.rows.push_back({label_of(ranking.names[f]), std::to_string(ranking.total_rank[f]),
                      std::to_string(ranking.rank_mode[f]), std::to_string(ranking.mode_frequency[f]),
                      format_number(fit.coefficients[j]), format_p(fit.p_values[j]), star(fit.p_values[j] < alpha)});
  }
  return t;
}

Table rank_histogram_table(const gbm::ImportanceRanking& ranking) {
  Table t{"rank_histogram", {"feature"}, {}};
  for (std::size_t r = 0; r < ranking.names.size(); ++r) t.header.push_back(fmt::format("rank_{}", r + 1));
  t.header.push_back("total_rank");
  for (std::size_t f = 0; f < ranking.names.size(); ++f) {
    std::vector<std::string> row{ranking.names[f]};
    for (const int c : ranking.histogram[f]) row.push_back(std::to_string(c));
    row.push_back(std::to_string(ranking.total_rank[f]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table issues_table(std::span<const Issue> issues) {
  Table t{"issues", {"kind", "source", "line", "message"}, {}};
  for (const auto& i : issues)
    t.rows.push_back({std::string(to_string(i.kind)), i.source, std::to_string(i.line), i.message});
  return t;
}

Parameter parse_parameter(std::string_view text) {
  if (text == "fluence") return Parameter::fluence;
  if (text == "spot_size" || text == "spot-size" || text == "spot") return Parameter::spot_size;
  if (text == "wavelength") return Parameter::wavelength;
  if (text == "frequency") return Parameter::frequency;
  throw ParameterError(fmt::format("unknown plot parameter '{}' (expected fluence, spot_size, wavelength, frequency)",
                                   text));
}

std::string_view to_string(Parameter p) {
  switch (p) {
    case Parameter::fluence: return "fluence";
    case Parameter::spot_size: return "spot_size";
    case Parameter::wavelength: return "wavelength";
    case Parameter::frequency: return "frequency";
  }
  return "?";
}

namespace {

constexpr double kLeft = 70.0, kWidth = 540.0, kPanelHeight = 170.0, kPanelGap = 60.0, kTopMargin = 40.0;

double value_of(const TreatmentEvent& e, Parameter p) {
  switch (p) {
    case Parameter::fluence: return e.fluence;
    case Parameter::spot_size: return e.spot_size;
    case Parameter::wavelength: return e.wavelength_nm;
    case Parameter::frequency: return e.frequency_hz;
  }
  return 0.0;
}

std::string_view unit_of(Parameter p) {
  switch (p) {
    case Parameter::fluence: return "J/cm^2";
    case Parameter::spot_size: return "mm";
    case Parameter::wavelength: return "nm";
    case Parameter::frequency: return "Hz";
  }
  return "";
}

std::pair<double, double> padded_range(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*hi - *lo <= 0.0) return {*lo - 1.0, *hi + 1.0};
  const double pad = 0.05 * (*hi - *lo);
  return {*lo - pad, *hi + pad};
}

std::string panel(std::string_view series, std::string_view colour, std::string_view title, std::span<const double> x,
                  std::span<const double> y, double xmin, double xmax, double top) {
  const auto [ymin, ymax] = padded_range(y);
  std::string s = fmt::format(
      "  <g class=\"panel\" data-series=\"{}\" data-xmin=\"{}\" data-xmax=\"{}\" data-ymin=\"{}\" data-ymax=\"{}\" "
      "data-left=\"{}\" data-top=\"{}\" data-width=\"{}\" data-height=\"{}\">\n",
      series, xmin, xmax, ymin, ymax, kLeft, top, kWidth, kPanelHeight);
  s += fmt::format("    <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", kLeft, top,
                   kWidth, kPanelHeight);
  s += fmt::format("    <text x=\"{}\" y=\"{}\" font-size=\"13\">{}</text>\n", kLeft, top - 8, xml_escape(title));
  s += fmt::format("    <text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n", kLeft - 4,
                   top + 10, format_number(ymax, 4));
  s += fmt::format("    <text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n", kLeft - 4,
                   top + kPanelHeight, format_number(ymin, 4));
  s += fmt::format("    <text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>\n", kLeft, top + kPanelHeight + 14,
                   format_number(xmin, 6));
  s += fmt::format("    <text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n", kLeft + kWidth,
                   top + kPanelHeight + 14, format_number(xmax, 6));
  std::string points;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double px = kLeft + (x[k] - xmin) / (xmax - xmin) * kWidth;
    const double py = top + kPanelHeight - (y[k] - ymin) / (ymax - ymin) * kPanelHeight;
    points += fmt::format("{}{:.6f},{:.6f}", k ? " " : "", px, py);
  }
  s += fmt::format("    <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", colour, points);
  s += "  </g>\n";
  return s;
}

}  // namespace

std::string plot_series(const TreatmentSeries& series, Parameter parameter) {
  if (series.events.empty()) throw InsufficientDataError("plot_series: empty series");
  std::vector<double> days, values;
  for (const auto& e : series.events) {
    days.push_back(e.day);
    values.push_back(value_of(e, parameter));
  }
  double xmin = days.front(), xmax = days.back();
  if (xmax <= xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  const bool diff = values.size() >= 2;
  const double height = kTopMargin + kPanelHeight + 30.0 + (diff ? kPanelHeight + kPanelGap : 0.0);
  std::string svg = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" height=\"{}\" "
      "data-tattoo=\"{}\" data-parameter=\"{}\">\n",
      height, xml_escape(series.tattoo_id), to_string(parameter));
  svg += fmt::format("  <text x=\"{}\" y=\"20\" font-size=\"14\">Tattoo {}: {} ({}) by treatment day</text>\n", kLeft,
                     xml_escape(series.tattoo_id), to_string(parameter), unit_of(parameter));
  svg += panel("raw", "red", fmt::format("{} ({})", to_string(parameter), unit_of(parameter)), days, values, xmin, xmax,
               kTopMargin);
  if (diff) {
    const auto d = forward_difference(values);
    const std::span<const double> dx(days.data() + 1, days.size() - 1);
    svg += panel("differenced", "blue", fmt::format("forward difference of {}", to_string(parameter)), dx, d, xmin,
                 xmax, kTopMargin + kPanelHeight + kPanelGap);
  }
  svg += "</svg>\n";
  return svg;
}

std::string plot_rank_histogram(const gbm::ImportanceRanking& ranking, std::size_t feature) {
  if (feature >= ranking.names.size()) throw ParameterError("plot_rank_histogram: feature index out of range");
  const auto& counts = ranking.histogram[feature];
  const int top_count = std::max(1, *std::max_element(counts.begin(), counts.end()));
  const double top = kTopMargin, bar = kWidth / static_cast<double>(counts.size());
  const int total = ranking.total_rank[feature];
  std::string svg = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" height=\"{}\" "
      "data-feature=\"{}\" data-total-rank=\"{}\" data-rank-mode=\"{}\" data-ymin=\"0\" data-ymax=\"{}\">\n",
      top + kPanelHeight + 50, xml_escape(ranking.names[feature]), total, ranking.rank_mode[feature], top_count);
  svg +=
      "  <defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
      "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#9ecae1\"/>"
      "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#08519c\" stroke-width=\"3\"/></pattern></defs>\n";
  svg += fmt::format("  <text x=\"{}\" y=\"20\" font-size=\"14\">{}: rank over {} fits (total rank {})</text>\n", kLeft,
                     xml_escape(label_of(ranking.names[feature])), ranking.sims, total);
  svg += fmt::format("  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", kLeft,
                     top, kWidth, kPanelHeight);
  for (std::size_t r = 0; r < counts.size(); ++r) {
    const double h = static_cast<double>(counts[r]) / top_count * kPanelHeight;
    const double x = kLeft + static_cast<double>(r) * bar;
    const bool marked = static_cast<int>(r) + 1 == total;
    svg += fmt::format(
        "  <rect class=\"bar\" data-rank=\"{}\" data-count=\"{}\" x=\"{:.3f}\" y=\"{:.3f}\" width=\"{:.3f}\" "
        "height=\"{:.3f}\" fill=\"{}\" stroke=\"#08519c\"/>\n",
        r + 1, counts[r], x + 2, top + kPanelHeight - h, bar - 4, h, marked ? "url(#hatch)" : "#c6dbef");
    svg += fmt::format("  <text x=\"{:.3f}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
                       x + bar / 2, top + kPanelHeight + 14, r + 1);
  }
  svg += fmt::format("  <text x=\"{}\" y=\"{}\" font-size=\"11\">rank</text>\n", kLeft + kWidth / 2,
                     top + kPanelHeight + 32);
  svg += "</svg>\n";
  return svg;
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

void write_table(const std::filesystem::path& dir, const Table& table, std::vector<std::filesystem::path>& written) {
  const auto csv_path = dir / (table.name + ".csv");
  const auto md_path = dir / (table.name + ".md");
  write_file(csv_path, to_csv(table));
  written.push_back(csv_path);
  write_file(md_path, to_markdown(table));
  written.push_back(md_path);
}

Dataset load_dataset(const RunConfig& config) {
  if (config.synth) {
    if (!config.seed) throw ParameterError("synthetic data needs a seed");
    return synthesize(*config.synth, *config.seed);
  }
  if (!config.input) throw ParameterError("no data source configured");
  return ingest(config.input->patients, config.input->tattoos, config.input->treatments);
}

PruneResult retained_features(std::span<const FeatureRow> rows, double threshold) {
  const auto all = all_features();
  return prune_correlated(rows, all, threshold);
}

RunResult run(const RunConfig& config) {
  config.validate(true);
  const std::uint64_t seed = *config.seed;
  RunResult result;
  std::string stage = "load";
  const fs::path dir = config.out;
  const auto emit = [&](const fs::path& name, std::string_view content) {
    write_file(dir / name, content);
    result.files.push_back(dir / name);
  };
  try {
    const Dataset data = load_dataset(config);
    json manifest;
    if (config.synth) {
      stage = "export";
      emit("data/patients.csv", patients_to_csv(data));
      emit("data/tattoos.csv", tattoos_to_csv(data));
      emit("data/treatments.csv", treatments_to_csv(data));
      manifest["data"] = synth_manifest(*config.synth, seed, data);
    } else {
      manifest["data"] = {{"patients", data.patients.size()},
                          {"tattoos", data.tattoos.size()},
                          {"series", data.series.size()}};
    }

    stage = "featurize";
    const auto rows = featurize(data, config.mode);
    const auto full_rows = config.mode == SeriesMode::full ? rows : featurize(data, SeriesMode::full);
    emit("features.csv", features_to_csv(rows));

    stage = "tests";
    for (const auto& t : {t4_proportions(data, config.alpha), t5_quartiles(data, rows, config.alpha),
                          t6_ttests(rows, config.alpha), t7_nonparametric(rows, config.alpha, config.n_perm, seed),
                          t8_kruskal(data, full_rows, config.alpha), t8_anova(data, full_rows, config.alpha),
                          t8_tukey(data, full_rows, config.alpha)})
      write_table(dir, t, result.files);

    stage = "prune";
    const auto pruned = retained_features(rows, config.prune_threshold);
    std::vector<Issue> issues = data.issues;
    issues.insert(issues.end(), pruned.issues.begin(), pruned.issues.end());

    stage = "logit";
    const auto fit = fit_logit(rows, pruned.retained);
    write_table(dir, logit_table(fit, config.alpha), result.files);

    stage = "rank";
    const auto m = gbm::complete_cases(rows, pruned.retained);
    const std::uint64_t rank_seed = detail::derive_seed(seed, kRankStream);
    const auto ranking = gbm::bootstrap_rank(m.x, m.y, m.names, config.rank, rank_seed);
    write_table(dir, rank_histogram_table(ranking), result.files);
    write_table(dir, t10_models(ranking, fit, config.alpha), result.files);

    stage = "plot";
    for (std::size_t f = 0; f < ranking.names.size(); ++f)
      emit(fmt::format("fig2_rank_{}.svg", ranking.names[f]), plot_rank_histogram(ranking, f));
    // Figure 1 style: the first complicated and first uncomplicated tattoo
    // with at least four treatments.
    for (const bool want : {true, false}) {
      for (const auto& r : rows) {
        const auto* s = data.find_series(r.tattoo_id);
        if (r.label != want || !s || s->size() < 4) continue;
        emit(fmt::format("fig1_{}_fluence.svg", s->tattoo_id), plot_series(*s, Parameter::fluence));
        break;
      }
    }

    stage = "manifest";
    write_table(dir, issues_table(issues), result.files);
    result.issues = issues.size();
    json cfg = to_json(config);
    cfg.erase("out");
    manifest["tool"] = "inkstat";
    manifest["versions"] = {{"inkstat", std::string(kVersion)},
                            {"fmt", FMT_VERSION},
                            {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION,
                                                  EIGEN_MINOR_VERSION)},
                            {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                                          NLOHMANN_JSON_VERSION_MINOR, NLOHMANN_JSON_VERSION_PATCH)}};
    manifest["seed"] = seed;
    manifest["config"] = cfg;
    manifest["config_hash"] = fnv1a_hex(cfg.dump());
    manifest["prune"] = json::object();
    for (const auto& [key, list] : {std::pair{"retained", &pruned.retained}, std::pair{"removed", &pruned.removed}}) {
      json names = json::array();
      for (const Feature f : *list) names.push_back(std::string(feature_name(f)));
      manifest["prune"][key] = names;
    }
    manifest["logit"] = {{"converged", fit.converged}, {"iterations", fit.iterations}, {"message", fit.message},
                         {"n_obs", fit.n_obs}};
    json tuned = json::array();
    for (const auto& p : ranking.tuned)
      tuned.push_back({{"trees", p.trees}, {"shrinkage", p.shrinkage}, {"max_splits", p.max_splits}});
    manifest["rank"] = {{"seed", rank_seed}, {"n_obs", m.y.size()}, {"tuned", tuned}};
    json seeds = json::object();
    for (std::size_t i = 0; i < 6; ++i) seeds[std::to_string(i)] = randomization_seed(seed, i);
    manifest["randomization_seeds"] = seeds;
    manifest["issues"] = issues.size();
    json files = json::object();
    for (const auto& f : result.files) {
      std::ifstream in(f, std::ios::binary);
      const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      files[fs::relative(f, dir).generic_string()] = fnv1a_hex(bytes);
    }
    manifest["files"] = files;
    emit("manifest.json", manifest.dump(2) + "\n");
  } catch (const Error& e) {
    for (const auto& f : result.files) {
      std::error_code ec;
      fs::remove(f, ec);
    }
    throw StageError(stage, e.what());
  }
  return result;
}

}  // namespace inkstat::report
