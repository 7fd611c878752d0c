#pragma once

// Report assembly: run configuration, the paper-schema tables (CSV and
// Markdown), SVG plots and the bundle manifest.
//
// Table builders are pure functions of their inputs; every cell comes from
// a library call that can be repeated with the manifest's seed.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "inkstat/boost_rank.hpp"
#include "inkstat/data_model.hpp"
#include "inkstat/error.hpp"
#include "inkstat/featurize.hpp"
#include "inkstat/logit.hpp"
#include "inkstat/synth.hpp"

namespace inkstat::report {

inline constexpr std::string_view kVersion = "0.3.0";

struct InputPaths {
  std::filesystem::path patients;
  std::filesystem::path tattoos;
  std::filesystem::path treatments;
};

struct RunConfig {
  // Exactly one data source.
  std::optional<SynthConfig> synth;
  std::optional<InputPaths> input;

  SeriesMode mode = SeriesMode::first_arrival;
  double alpha = 0.1;
  long n_perm = 100000;
  double prune_threshold = 0.6;
  gbm::RankOptions rank;  // sims, grid, cv, retune_each
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "report";

  // Throws ParameterError on an invalid combination.
  void validate(bool stochastic) const;
};

// Keys: synth | input {patients, tattoos, treatments} (relative paths are
// taken from base_dir), seed, mode, alpha, n_perm, sims, prune_threshold,
// grid {trees, shrinkage, max_splits, min_leaf}, cv {folds, repeats,
// metric}, retune_each, out. Unknown keys raise ParameterError.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& config);

// Input files named patients.csv, tattoos.csv and treatments.csv in dir.
InputPaths input_dir(const std::filesystem::path& dir);

// 4 significant figures; scientific below 1e-4.
std::string format_p(double p);
std::string format_number(double v, int significant = 7);

struct Table {
  std::string name;
  std::vector<std::string> header;  // last two columns: p_value, sig
  std::vector<std::vector<std::string>> rows;
};

// RFC-4180 with CRLF line ends.
std::string to_csv(const Table& table);
// Pipe table; the sig column is folded into p_value as a trailing star.
std::string to_markdown(const Table& table);

// Fixed column orders.
inline const std::vector<std::string> kT4Header = {"response_by_factor", "true", "false", "p_value", "sig"};
inline const std::vector<std::string> kT5Header = {"response_by_factor", "parameter", "q1", "q2",
                                                   "q3",                 "q4",        "p_value", "sig"};
inline const std::vector<std::string> kT6Header = {"treatment_parameter", "complication", "no_complication",
                                                   "p_value", "sig"};
inline const std::vector<std::string> kT7Header = {"treatment_parameter", "statistic", "complication",
                                                   "no_complication",     "p_value",   "sig"};
inline const std::vector<std::string> kT8Header = {"treatment_parameter", "q1", "q2", "q3", "q4", "p_value", "sig"};
inline const std::vector<std::string> kT8AnovaHeader = {"treatment_parameter", "f_statistic", "df_between",
                                                        "df_within",           "p_value",     "sig"};
inline const std::vector<std::string> kT8TukeyHeader = {"treatment_parameter", "comparison", "diff", "lower",
                                                        "upper",               "sig"};
inline const std::vector<std::string> kT10Header = {"treatment_parameter", "total_rank", "rank_mode", "mode_frequency",
                                                    "estimate",            "p_value",    "sig"};
inline const std::vector<std::string> kLogitHeader = {"term", "estimate", "std_error", "z", "p_value", "sig"};

// Two-proportion z-tests of complication rates by binary factors.
Table t4_proportions(const Dataset& data, double alpha);
// Chi-square tests of complication rate across quartile bins. `rows` are
// the featurized tattoos in the configured mode.
Table t5_quartiles(const Dataset& data, std::span<const FeatureRow> rows, double alpha);
// Welch t-tests of setting means, complication vs none.
Table t6_ttests(std::span<const FeatureRow> rows, double alpha);
// Wilcoxon (medians) and randomization (means) rows per parameter. Test i
// uses randomization_seed(seed, i).
Table t7_nonparametric(std::span<const FeatureRow> rows, double alpha, long n_perm, std::uint64_t seed);
std::uint64_t randomization_seed(std::uint64_t seed, std::size_t test_index);
// Kruskal-Wallis across tattoo-age quartiles on full-series features.
Table t8_kruskal(const Dataset& data, std::span<const FeatureRow> full_rows, double alpha);
Table t8_anova(const Dataset& data, std::span<const FeatureRow> full_rows, double alpha);
Table t8_tukey(const Dataset& data, std::span<const FeatureRow> full_rows, double alpha);
// Rows in total-rank order; features must match the ranking's order.
Table t10_models(const gbm::ImportanceRanking& ranking, const LogitFit& fit, double alpha);
Table logit_table(const LogitFit& fit, double alpha);
Table rank_histogram_table(const gbm::ImportanceRanking& ranking);
Table issues_table(std::span<const Issue> issues);

// The three treatment-level parameters of t8.
inline constexpr std::array<Feature, 3> kT8Features = {Feature::mean_fluence, Feature::mean_spot,
                                                       Feature::sd_diff_frequency};

enum class Parameter { fluence, spot_size, wavelength, frequency };
// Throws ParameterError naming the bad value.
Parameter parse_parameter(std::string_view text);
std::string_view to_string(Parameter p);

// Raw values (red) over treatment days with the forward-differenced values
// (blue) below; the second panel is omitted for a single event. Each panel
// is a <g class="panel"> carrying data-xmin/xmax/ymin/ymax and its pixel box
// (data-left/top/width/height) so the polyline can be mapped back to data.
std::string plot_series(const TreatmentSeries& series, Parameter parameter);

// Bars of how often the feature took each rank; the total-rank bar is
// hatched.
std::string plot_rank_histogram(const gbm::ImportanceRanking& ranking, std::size_t feature);

struct RunResult {
  std::vector<std::filesystem::path> files;  // written, in order
  std::size_t issues = 0;
};

// Runs every stage and writes the bundle into config.out. On failure the
// files written so far are removed and a StageError names the stage.
RunResult run(const RunConfig& config);

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Writes name.csv and name.md into dir and appends both paths to written.
void write_table(const std::filesystem::path& dir, const Table& table, std::vector<std::filesystem::path>& written);
// Creates parent directories; throws IoError on failure.
void write_file(const std::filesystem::path& path, std::string_view content);

// Dataset from the configured source (synthesized with the run seed).
Dataset load_dataset(const RunConfig& config);

// Features retained after correlation pruning of all candidates.
PruneResult retained_features(std::span<const FeatureRow> rows, double threshold);

}  // namespace inkstat::report
