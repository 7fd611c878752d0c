#pragma once

// Regression trees, logistic-loss gradient boosting, cross-validated
// tuning and bootstrap importance ranking.
//
// Trees split on ranks: each feature is cut into at most kMaxBins ordered
// bins (one per distinct value when there are few enough), so any strictly
// increasing transform of a feature leaves every tree unchanged. Splits are
// grown best-first by variance reduction of the targets.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "inkstat/featurize.hpp"

namespace inkstat::gbm {

inline constexpr int kMaxBins = 256;

// Sum of p_k (1 - p_k). Throws ParameterError unless the proportions are
// nonnegative and sum to 1.
double gini(std::span<const double> proportions);

struct TreeNode {
  int feature = -1;        // -1 marks a leaf
  double threshold = 0.0;  // x <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;     // leaf output
  double impurity = 0.0;  // per-row impurity of the node's rows
  // Count-weighted impurity decrease of this node's split:
  // n*I - n_left*I_left - n_right*I_right.
  double decrease = 0.0;
  std::size_t n = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  int splits() const;
  int depth() const;
};

// Greedy best-first tree with at most max_splits splits and at least
// min_leaf rows per child. Targets that are all 0/1 use Gini impurity,
// anything else variance; both choose the same splits. Leaves hold the
// target mean. Too few rows or no admissible split gives a single leaf.
Tree fit_tree(const Eigen::MatrixXd& x, std::span<const double> targets, int max_splits, int min_leaf = 10);

struct BoostParams {
  int trees = 150;        // B
  double shrinkage = 0.1;  // lambda
  int max_splits = 2;     // d
  int min_leaf = 10;

  bool operator==(const BoostParams&) const = default;
};

struct GbmOptions {
  bool record_deviance = false;
};

struct GbmModel {
  double base_score = 0.0;  // log-odds of the training base rate
  double shrinkage = 0.0;
  std::vector<Tree> trees;
  // Gini decrease on the 0/1 labels over every split, summed per feature
  // and normalized to sum 1 (all zero when no tree split).
  std::vector<double> importance;
  // Mean training deviance before boosting and after each round, when
  // requested.
  std::vector<double> deviance;

  double decision(std::span<const double> x) const;  // log-odds
  double predict_prob(std::span<const double> x) const;
};

// Throws DegenerateError when only one class is present.
GbmModel fit_gbm(const Eigen::MatrixXd& x, std::span<const int> y, const BoostParams& params,
                 const GbmOptions& options = {});

enum class Metric { auc, accuracy, log_loss };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view text);

struct CvOptions {
  int folds = 8;
  int repeats = 2;
  Metric metric = Metric::auc;
};

// Cartesian product, in the order B, lambda, d.
struct BoostGrid {
  std::vector<int> trees = {50, 150, 300};
  std::vector<double> shrinkage = {0.01, 0.1};
  std::vector<int> max_splits = {1, 2, 3};
  int min_leaf = 10;

  std::vector<BoostParams> points() const;
};

struct CvPoint {
  BoostParams params;
  double score = 0.0;  // mean over folds x repeats; higher is better
};

struct CvResult {
  BoostParams best;
  std::vector<CvPoint> scores;  // grid order
};

// Stratified folds, reshuffled per repeat. Ties in the mean score go to the
// smaller B, then the larger lambda, then the smaller d. Throws
// InsufficientDataError when a class has fewer rows than folds.
CvResult tune_cv(const Eigen::MatrixXd& x, std::span<const int> y, std::span<const BoostParams> grid,
                 const CvOptions& cv, std::uint64_t seed);

struct RankOptions {
  int sims = 300;
  BoostGrid grid;
  CvOptions cv;
  // Tune on every bootstrap sample; otherwise tune once on the full data
  // and reuse that point.
  bool retune_each = true;
};

struct ImportanceRanking {
  std::vector<std::string> names;
  int sims = 0;
  // histogram[f][r]: fits in which feature f received rank r + 1.
  std::vector<std::vector<int>> histogram;
  std::vector<int> rank_mode;
  std::vector<int> mode_frequency;
  std::vector<int> total_rank;
  std::vector<double> mean_importance;
  std::vector<BoostParams> tuned;  // per fit
};

// Ranks 1..p by descending importance, ties by feature order.
std::vector<int> importance_ranks(std::span<const double> importance);

// Fills rank_mode, mode_frequency and total_rank from the histogram. The
// mode takes the smaller rank on ties; features are ordered by (mode
// ascending, frequency descending, feature order) and numbered 1..p.
void assign_total_rank(ImportanceRanking& ranking);

ImportanceRanking bootstrap_rank(const Eigen::MatrixXd& x, std::span<const int> y,
                                 std::vector<std::string> names, const RankOptions& options,
                                 std::uint64_t seed);

struct LabeledMatrix {
  Eigen::MatrixXd x;
  std::vector<int> y;
  std::vector<std::string> names;
};

// Rows complete on `features`, in order.
LabeledMatrix complete_cases(std::span<const FeatureRow> rows, std::span<const Feature> features);

}  // namespace inkstat::gbm
