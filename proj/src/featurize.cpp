#include "inkstat/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <sstream>

#include "inkstat/csv.hpp"
#include "inkstat/descriptive.hpp"
#include "inkstat/error.hpp"

namespace inkstat {
namespace {

struct FeatureInfo {
  std::string_view name;
  std::string_view label;
};

constexpr std::array<FeatureInfo, kFeatureCount> kFeatureInfo = {{
    {"mean_fluence", "Mean Fluence"},
    {"sd_fluence", "SD Fluence"},
    {"mean_spot", "Mean Spot Size"},
    {"sd_spot", "SD Spot Size"},
    {"mean_wavelength", "Mean Wavelength"},
    {"mean_frequency", "Mean Frequency"},
    {"mean_diff_fluence", "Mean Differenced Fluence"},
    {"mean_diff_spot", "Mean Differenced Spot Size"},
    {"mean_diff_wavelength", "Mean Differenced Wavelength"},
    {"mean_diff_frequency", "Mean Differenced Frequency"},
    {"sd_diff_frequency", "SD Differenced Frequency"},
    {"mean_days_between", "Mean Days Between Appts."},
}};

std::optional<double> sample_sd(std::span<const double> x) {
  if (x.size() < 2) return std::nullopt;
  return stats::sd(x);
}

// Mean of the forward differences via the telescoping identity.
std::optional<double> mean_difference(std::span<const double> x) {
  if (x.size() < 2) return std::nullopt;
  return (x.back() - x.front()) / static_cast<double>(x.size() - 1);
}

}  // namespace

std::string_view feature_name(Feature f) { return kFeatureInfo[static_cast<std::size_t>(f)].name; }
std::string_view feature_label(Feature f) { return kFeatureInfo[static_cast<std::size_t>(f)].label; }

std::optional<Feature> parse_feature(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    if (kFeatureInfo[i].name == name) return static_cast<Feature>(i);
  return std::nullopt;
}

std::array<Feature, kFeatureCount> all_features() {
  std::array<Feature, kFeatureCount> out{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = static_cast<Feature>(i);
  return out;
}

bool FeatureRow::complete(std::span<const Feature> features) const {
  return std::all_of(features.begin(), features.end(), [this](Feature f) { return (*this)[f].has_value(); });
}

std::string_view to_string(SeriesMode mode) { return mode == SeriesMode::full ? "full" : "first-arrival"; }

SeriesMode parse_series_mode(std::string_view text) {
  if (text == "full") return SeriesMode::full;
  if (text == "first-arrival" || text == "first_arrival") return SeriesMode::first_arrival;
  throw ParameterError(fmt::format("unknown series mode '{}' (expected full or first-arrival)", text));
}

TreatmentSeries truncate_first_arrival(const TreatmentSeries& series) {
  TreatmentSeries out{series.tattoo_id, {}};
  for (const auto& e : series.events) {
    out.events.push_back(e);
    if (e.complication_observed) break;
  }
  return out;
}

std::vector<double> forward_difference(std::span<const double> values) {
  if (values.size() < 2) throw InsufficientDataError("forward difference needs at least two values");
  std::vector<double> out(values.size() - 1);
  for (std::size_t k = 0; k + 1 < values.size(); ++k) out[k] = values[k + 1] - values[k];
  return out;
}

FeatureRow summarize(const TreatmentSeries& series) {
  if (series.events.empty()) throw InsufficientDataError(fmt::format("tattoo '{}' has no treatments", series.tattoo_id));
  const std::size_t n = series.size();
  std::vector<double> fluence(n), spot(n), wavelength(n), frequency(n);
  bool label = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = series.events[i];
    fluence[i] = e.fluence;
    spot[i] = e.spot_size;
    wavelength[i] = e.wavelength_nm;
    frequency[i] = e.frequency_hz;
    label = label || e.complication_observed;
  }

  FeatureRow row;
  row.tattoo_id = series.tattoo_id;
  row.label = label;
  row[Feature::mean_fluence] = stats::mean(fluence);
  row[Feature::sd_fluence] = sample_sd(fluence);
  row[Feature::mean_spot] = stats::mean(spot);
  row[Feature::sd_spot] = sample_sd(spot);
  row[Feature::mean_wavelength] = stats::mean(wavelength);
  row[Feature::mean_frequency] = stats::mean(frequency);
  row[Feature::mean_diff_fluence] = mean_difference(fluence);
  row[Feature::mean_diff_spot] = mean_difference(spot);
  row[Feature::mean_diff_wavelength] = mean_difference(wavelength);
  row[Feature::mean_diff_frequency] = mean_difference(frequency);
  if (n >= 3) row[Feature::sd_diff_frequency] = stats::sd(forward_difference(frequency));
  if (n >= 2) {
    row[Feature::mean_days_between] =
        static_cast<double>(series.events.back().day - series.events.front().day) / static_cast<double>(n - 1);
  }
  return row;
}

std::vector<FeatureRow> featurize(const Dataset& data, SeriesMode mode) {
  std::vector<FeatureRow> rows;
  rows.reserve(data.series.size());
  for (const auto& s : data.series) {
    rows.push_back(mode == SeriesMode::full ? summarize(s) : summarize(truncate_first_arrival(s)));
  }
  return rows;
}

std::size_t quartile_of(double value, const std::array<double, 3>& cut_points) {
  std::size_t bin = 0;
  while (bin < 3 && value > cut_points[bin]) ++bin;
  return bin;
}

QuartileBinning quartile_bin(std::span<const double> values, std::span<const int> labels) {
  if (values.size() != labels.size()) throw ParameterError("quartile_bin: values and labels differ in length");
  if (values.size() < 4) throw InsufficientDataError("quartile binning needs at least four values");
  QuartileBinning out;
  out.cut_points = {stats::percentile(values, 0.25), stats::percentile(values, 0.5), stats::percentile(values, 0.75)};
  out.max_value = *std::max_element(values.begin(), values.end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t bin = quartile_of(values[i], out.cut_points);
    ++out.counts[bin];
    if (labels[i] != 0) ++out.events[bin];
  }
  for (std::size_t b = 0; b < 4; ++b) {
    out.rates[b] = out.counts[b] == 0 ? 0.0 : static_cast<double>(out.events[b]) / static_cast<double>(out.counts[b]);
  }
  return out;
}

std::vector<std::size_t> prune_correlated_columns(const std::vector<std::vector<double>>& columns, double threshold,
                                                  std::vector<std::size_t>* zero_variance) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("correlation threshold must lie in (0,1)");
  const std::size_t p = columns.size();
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < p; ++j) {
    if (columns[j].size() < 2) throw InsufficientDataError("correlation pruning needs at least two complete rows");
    if (stats::variance(columns[j]) == 0.0) {
      if (zero_variance) zero_variance->push_back(j);
    } else {
      active.push_back(j);
    }
  }
  std::vector<std::vector<double>> r(p, std::vector<double>(p, 0.0));
  for (std::size_t a = 0; a < active.size(); ++a) {
    for (std::size_t b = a + 1; b < active.size(); ++b) {
      const double v = std::abs(stats::pearson(columns[active[a]], columns[active[b]]));
      if (!std::isfinite(v)) throw NumericError("non-finite correlation; check for non-finite feature values");
      r[active[a]][active[b]] = v;
      r[active[b]][active[a]] = v;
    }
  }

  for (;;) {
    std::vector<bool> offending(p, false);
    bool any = false;
    for (const std::size_t a : active) {
      for (const std::size_t b : active) {
        if (a != b && r[a][b] > threshold) {
          offending[a] = true;
          any = true;
        }
      }
    }
    if (!any) break;
    std::size_t worst = p;
    double worst_mean = -1.0;
    for (const std::size_t a : active) {
      if (!offending[a]) continue;
      double total = 0.0;
      for (const std::size_t b : active)
        if (b != a) total += r[a][b];
      const double m = total / static_cast<double>(active.size() - 1);
      if (m >= worst_mean) {
        worst_mean = m;
        worst = a;
      }
    }
    active.erase(std::find(active.begin(), active.end(), worst));
  }
  return active;
}

PruneResult prune_correlated(std::span<const FeatureRow> rows, std::span<const Feature> candidates, double threshold) {
  std::vector<std::vector<double>> columns(candidates.size());
  for (const auto& row : rows) {
    if (!row.complete(candidates)) continue;
    for (std::size_t j = 0; j < candidates.size(); ++j) columns[j].push_back(*row[candidates[j]]);
  }
  std::vector<std::size_t> constant;
  const auto kept = prune_correlated_columns(columns, threshold, &constant);
  PruneResult out;
  for (const std::size_t j : constant) {
    out.issues.push_back({IssueKind::zero_variance, "prune_correlated", 0,
                          fmt::format("feature '{}' has zero variance and was excluded", feature_name(candidates[j]))});
  }
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    if (std::find(kept.begin(), kept.end(), j) != kept.end()) {
      out.retained.push_back(candidates[j]);
    } else {
      out.removed.push_back(candidates[j]);
    }
  }
  return out;
}

std::string features_to_csv(std::span<const FeatureRow> rows) {
  std::ostringstream out;
  std::vector<std::string> header = {"tattoo_id"};
  for (const Feature f : all_features()) header.emplace_back(feature_name(f));
  header.emplace_back("label");
  csv::write_row(out, header);
  for (const auto& row : rows) {
    std::vector<std::string> fields = {row.tattoo_id};
    for (const auto& v : row.values) fields.push_back(v ? fmt::format("{}", *v) : std::string{});
    fields.emplace_back(row.label ? "1" : "0");
    csv::write_row(out, fields);
  }
  return out.str();
}

}  // namespace inkstat
