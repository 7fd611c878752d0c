#pragma once

// Per-tattoo summary features built from the treatment series.
//
// Two series variants exist: the full treatment sequence, and the sequence
// truncated at (and including) the first event with a recorded
// complication. Means and SDs are taken of the raw settings and of their
// first forward differences; the mean of the differences telescopes to
// (x_last - x_first) / (N_t - 1).

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inkstat/data_model.hpp"

namespace inkstat {

enum class Feature : std::size_t {
  mean_fluence,
  sd_fluence,
  mean_spot,
  sd_spot,
  mean_wavelength,
  mean_frequency,
  mean_diff_fluence,
  mean_diff_spot,
  mean_diff_wavelength,
  mean_diff_frequency,
  sd_diff_frequency,
  mean_days_between,
};

inline constexpr std::size_t kFeatureCount = 12;

// snake_case column name, e.g. "mean_diff_fluence".
std::string_view feature_name(Feature f);
// Table label, e.g. "Mean Differenced Fluence".
std::string_view feature_label(Feature f);
std::optional<Feature> parse_feature(std::string_view name);
std::array<Feature, kFeatureCount> all_features();

struct FeatureRow {
  std::string tattoo_id;
  std::array<std::optional<double>, kFeatureCount> values{};
  bool label = false;  // complication observed in the series

  std::optional<double>& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  const std::optional<double>& operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  bool complete(std::span<const Feature> features) const;
};

enum class SeriesMode { full, first_arrival };

std::string_view to_string(SeriesMode mode);
// Accepts "full" and "first-arrival" (or "first_arrival").
SeriesMode parse_series_mode(std::string_view text);

// Events up to and including the earliest complication; the input when
// there is none. Idempotent.
TreatmentSeries truncate_first_arrival(const TreatmentSeries& series);

// out[k] = values[k+1] - values[k]. Throws InsufficientDataError for
// fewer than two values.
std::vector<double> forward_difference(std::span<const double> values);

// Throws InsufficientDataError on an empty series; otherwise missing fields
// mark statistics the series is too short for.
FeatureRow summarize(const TreatmentSeries& series);

// One row per series, in dataset order.
std::vector<FeatureRow> featurize(const Dataset& data, SeriesMode mode);

struct QuartileBinning {
  std::array<double, 3> cut_points{};   // 25th, 50th, 75th percentiles
  double max_value = 0.0;
  std::array<std::size_t, 4> counts{};  // n_i
  std::array<std::size_t, 4> events{};  // label == 1 per bin
  std::array<double, 4> rates{};        // p_hat_i
};

// Bins (-inf, q25], (q25, q50], (q50, q75], (q75, inf); ties at a cut
// point fall in the lower bin. Needs at least four values.
QuartileBinning quartile_bin(std::span<const double> values, std::span<const int> labels);
// 0-based bin of a value given the cut points.
std::size_t quartile_of(double value, const std::array<double, 3>& cut_points);

struct PruneResult {
  std::vector<Feature> retained;
  std::vector<Feature> removed;  // candidate order, zero-variance features included
  std::vector<Issue> issues;
};

// Drops features until no retained pair has |pearson r| above threshold.
// Each round removes, among features in some offending pair, the one with
// the largest mean absolute correlation to the other retained features
// (ties: the later feature). Uses rows complete on all candidates.
PruneResult prune_correlated(std::span<const FeatureRow> rows, std::span<const Feature> candidates, double threshold);

// Same rule on raw columns (one vector per variable, equal lengths);
// returns retained column indices.
std::vector<std::size_t> prune_correlated_columns(const std::vector<std::vector<double>>& columns, double threshold,
                                                  std::vector<std::size_t>* zero_variance = nullptr);

std::string features_to_csv(std::span<const FeatureRow> rows);

}  // namespace inkstat
