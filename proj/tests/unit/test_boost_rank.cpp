#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "inkstat/boost_rank.hpp"
#include "inkstat/error.hpp"

using namespace inkstat;
using namespace inkstat::gbm;

namespace {

struct Data {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

// Feature 0 drives the log-odds; the rest are independent noise.
Data planted(std::size_t n, std::size_t p, double effect, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  Data d{Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p)), std::vector<int>(n)};
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) d.x(i, j) = z(rng);
    d.y[static_cast<std::size_t>(i)] = u(rng) < 1.0 / (1.0 + std::exp(-effect * d.x(i, 0))) ? 1 : 0;
  }
  return d;
}

// Label is the sign agreement of features 0 and 1, flipped with prob 0.1.
Data xor_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> flip;
  Data d{Eigen::MatrixXd(static_cast<Eigen::Index>(n), 3), std::vector<int>(n)};
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) d.x(i, j) = u(rng);
    const bool same = (d.x(i, 0) > 0) == (d.x(i, 1) > 0);
    d.y[static_cast<std::size_t>(i)] = (same != (flip(rng) < 0.1)) ? 1 : 0;
  }
  return d;
}

struct BruteSplit {
  double best = -1.0;
  double second = -1.0;  // best gain over a different partition
  int feature = -1;
  double threshold = 0.0;
};

// Every (feature, midpoint) cut with both sides >= min_leaf.
BruteSplit brute_root(const Eigen::MatrixXd& x, const std::vector<double>& t, int min_leaf) {
  BruteSplit out;
  const auto n = static_cast<std::size_t>(x.rows());
  double total = 0.0;
  for (const double v : t) total += v;
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    std::vector<double> vals(x.col(f).data(), x.col(f).data() + n);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      const double thr = 0.5 * (vals[k] + vals[k + 1]);
      double sl = 0.0;
      int nl = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (x(static_cast<Eigen::Index>(i), f) <= thr) {
          sl += t[i];
          ++nl;
        }
      const int nr = static_cast<int>(n) - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double gain = sl * sl / nl + (total - sl) * (total - sl) / nr - total * total / static_cast<double>(n);
      if (gain > out.best) {
        out.second = out.best;
        out.best = gain;
        out.feature = static_cast<int>(f);
        out.threshold = thr;
      } else if (gain > out.second) {
        out.second = gain;
      }
    }
  }
  return out;
}

double root_gain(const Tree& tree, const std::vector<double>& t) {
  // Variance decrease of the root split, recomputed from the children.
  const auto& r = tree.nodes[0];
  const auto& l = tree.nodes[static_cast<std::size_t>(r.left)];
  const auto& rr = tree.nodes[static_cast<std::size_t>(r.right)];
  double total = 0.0;
  for (const double v : t) total += v;
  const double sl = l.value * static_cast<double>(l.n);
  const double sr = rr.value * static_cast<double>(rr.n);
  return sl * sl / static_cast<double>(l.n) + sr * sr / static_cast<double>(rr.n) -
         total * total / static_cast<double>(r.n);
}

ImportanceRanking from_modes(const std::vector<int>& modes, const std::vector<int>& freqs, int sims, int p) {
  ImportanceRanking r;
  r.sims = sims;
  for (std::size_t f = 0; f < modes.size(); ++f) {
    std::vector<int> row(static_cast<std::size_t>(p), 0);
    row[static_cast<std::size_t>(modes[f]) - 1] = freqs[f];
    int rest = sims - freqs[f];
    for (int k = 0; rest > 0; k = (k + 1) % p) {
      if (k == modes[f] - 1) continue;
      ++row[static_cast<std::size_t>(k)];
      --rest;
    }
    r.histogram.push_back(row);
  }
  return r;
}

}  // namespace

TEST_CASE("gini examples and concavity") {
  CHECK(gini(std::vector<double>{1.0, 0.0}) == 0.0);
  CHECK(gini(std::vector<double>{0.5, 0.5}) == 0.5);
  CHECK(gini(std::vector<double>{0.9, 0.1}) == doctest::Approx(0.18).epsilon(1e-14));
  CHECK_THROWS_AS((void)gini(std::vector<double>{0.5, 0.6}), ParameterError);
  CHECK_THROWS_AS((void)gini(std::vector<double>{1.5, -0.5}), ParameterError);

  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 4);
    std::vector<double> p(k);
    double s = 0.0;
    for (double& v : p) s += (v = e(rng));
    for (double& v : p) v /= s;
    const double uniform = 1.0 - 1.0 / static_cast<double>(k);
    CHECK(gini(p) <= uniform + 1e-15);
    CHECK(gini(p) >= 0.0);
  }
}

TEST_CASE("fit_tree trivial cases") {
  Eigen::MatrixXd x(40, 2);
  std::vector<double> t(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = i % 3;
    x(i, 1) = i % 2;
    t[static_cast<std::size_t>(i)] = i % 2;
  }
  const Tree sep = fit_tree(x, t, 3, 5);
  CHECK(sep.splits() == 1);
  CHECK(sep.nodes[0].feature == 1);
  CHECK(sep.nodes[0].threshold == 0.5);
  CHECK(sep.nodes[0].impurity == doctest::Approx(0.5));
  CHECK(sep.nodes[0].decrease == doctest::Approx(20.0));
  CHECK(sep.nodes[1].impurity == 0.0);
  CHECK(sep.nodes[2].impurity == 0.0);
  CHECK(sep.predict(std::vector<double>{0.0, 1.0}) == 1.0);

  const Tree stump = fit_tree(x, t, 0, 5);
  REQUIRE(stump.nodes.size() == 1);
  CHECK(stump.nodes[0].value == doctest::Approx(0.5));

  // Constant features: nothing to split on.
  const Tree flat = fit_tree(Eigen::MatrixXd::Ones(40, 2), t, 3, 5);
  CHECK(flat.splits() == 0);
  // Fewer than 2 * min_leaf rows.
  CHECK(fit_tree(x, t, 3, 21).splits() == 0);
  CHECK_THROWS_AS((void)fit_tree(x, std::vector<double>(39), 1), ParameterError);
}

TEST_CASE("root split matches exhaustive search") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> rows(6, 50), cols(1, 3), level(0, 7), leaf(1, 5);
  std::normal_distribution<double> z;
  int compared = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const int n = trial == 0 ? 30 : rows(rng);
    const int p = trial == 0 ? 2 : cols(rng);
    const int min_leaf = leaf(rng);
    Eigen::MatrixXd x(n, p);
    std::vector<double> t(static_cast<std::size_t>(n));
    const bool binary = trial % 2 == 0;
    for (int i = 0; i < n; ++i) {
      // Coarse levels give ties; odd features continuous.
      for (int j = 0; j < p; ++j) x(i, j) = j % 2 == 0 ? level(rng) : z(rng);
      t[static_cast<std::size_t>(i)] = binary ? (z(rng) + 0.4 * x(i, 0) > 1.0 ? 1.0 : 0.0) : z(rng) + 0.3 * x(i, 0);
    }
    const BruteSplit brute = brute_root(x, t, min_leaf);
    const Tree tree = fit_tree(x, t, 1, min_leaf);
    if (brute.best <= 1e-9) continue;
    REQUIRE(tree.splits() == 1);
    CHECK(root_gain(tree, t) == doctest::Approx(brute.best).epsilon(1e-9));
    if (brute.best - brute.second > 1e-9 * brute.best) {
      CHECK(tree.nodes[0].feature == brute.feature);
      CHECK(tree.nodes[0].threshold == doctest::Approx(brute.threshold).epsilon(1e-12));
      ++compared;
    }
  }
  CHECK(compared > 200);
}

TEST_CASE("trees and importance are invariant to monotone transforms") {
  const Data d = planted(300, 3, 1.5, 5);
  Eigen::MatrixXd w = d.x;
  w.col(0) = d.x.col(0).array().exp();
  w.col(1) = d.x.col(1).array().cube() * 4.0 - 7.0;
  const BoostParams params{40, 0.1, 3, 10};
  const GbmModel a = fit_gbm(d.x, d.y, params);
  const GbmModel b = fit_gbm(w, d.y, params);
  for (std::size_t f = 0; f < 3; ++f) CHECK(a.importance[f] == doctest::Approx(b.importance[f]).epsilon(1e-12));
  CHECK(importance_ranks(a.importance) == importance_ranks(b.importance));
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    std::vector<double> ra(3), rb(3);
    for (Eigen::Index j = 0; j < 3; ++j) {
      ra[static_cast<std::size_t>(j)] = d.x(i, j);
      rb[static_cast<std::size_t>(j)] = w(i, j);
    }
    CHECK(a.decision(ra) == doctest::Approx(b.decision(rb)).epsilon(1e-12));
  }
}

TEST_CASE("fit_gbm base rate, descent and planted importance") {
  const Data d = planted(1000, 10, 1.0, 21);
  const GbmModel base = fit_gbm(d.x, d.y, {1, 1.0, 0, 10});
  double pos = 0.0;
  for (const int v : d.y) pos += v;
  const double logodds = std::log(pos / (1000.0 - pos));
  for (Eigen::Index i = 0; i < 20; ++i) {
    const std::vector<double> row(d.x.row(i).begin(), d.x.row(i).end());
    CHECK(base.decision(row) == doctest::Approx(logodds).epsilon(1e-12));
  }
  CHECK(std::all_of(base.importance.begin(), base.importance.end(), [](double v) { return v == 0.0; }));

  for (const double lambda : {0.01, 0.1})
    for (const int depth : {1, 2, 3}) {
      const GbmModel m = fit_gbm(d.x, d.y, {120, lambda, depth, 10}, {.record_deviance = true});
      REQUIRE(m.deviance.size() == 121);
      for (std::size_t k = 1; k < m.deviance.size(); ++k) CHECK(m.deviance[k] <= m.deviance[k - 1]);
    }

  const GbmModel m = fit_gbm(d.x, d.y, {150, 0.1, 2, 10});
  CHECK(m.importance[0] > 0.5);
  double sum = 0.0;
  for (const double v : m.importance) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  CHECK_THROWS_AS((void)fit_gbm(d.x, std::vector<int>(1000, 1), {10, 0.1, 1, 10}), DegenerateError);
  CHECK_THROWS_AS((void)fit_gbm(d.x, d.y, {0, 0.1, 1, 10}), ParameterError);
  CHECK_THROWS_AS((void)fit_gbm(d.x, d.y, {10, 1.5, 1, 10}), ParameterError);
}

TEST_CASE("tune_cv grid handling") {
  const Data d = planted(160, 2, 1.0, 8);
  const std::vector<BoostParams> one = {{30, 0.1, 2, 10}};
  CHECK(tune_cv(d.x, d.y, one, {}, 1).best == one[0]);

  // Children of the root are too small to split again, so d only matters
  // up to 1; constant trees (d = 0) tie on AUC for every B and lambda.
  const std::vector<BoostParams> depth = {{20, 0.1, 3, 60}, {20, 0.1, 1, 60}};
  CHECK(tune_cv(d.x, d.y, depth, {}, 2).best.max_splits == 1);
  const std::vector<BoostParams> trees = {{30, 0.1, 0, 10}, {10, 0.1, 0, 10}, {20, 0.5, 0, 10}};
  const auto r = tune_cv(d.x, d.y, trees, {}, 3);
  CHECK(r.best == BoostParams{10, 0.1, 0, 10});
  const std::vector<BoostParams> shrink = {{10, 0.1, 0, 10}, {10, 0.5, 0, 10}};
  CHECK(tune_cv(d.x, d.y, shrink, {}, 3).best.shrinkage == 0.5);
  const std::vector<BoostParams> twice = {{25, 0.1, 2, 10}, {25, 0.1, 2, 10}};
  CHECK(tune_cv(d.x, d.y, twice, {}, 4).best == twice[0]);

  CHECK_THROWS_AS((void)tune_cv(d.x, d.y, std::vector<BoostParams>{}, {}, 1), ParameterError);
  std::vector<int> rare(160, 0);
  for (int i = 0; i < 7; ++i) rare[static_cast<std::size_t>(i) * 20] = 1;
  CHECK_THROWS_AS((void)tune_cv(d.x, rare, one, {}, 1), InsufficientDataError);
  rare[5] = 1;
  CHECK_NOTHROW((void)tune_cv(d.x, rare, one, {}, 1));
}

TEST_CASE("tune_cv picks deeper trees for an interaction") {
  const std::vector<BoostParams> grid = {{50, 0.1, 1, 10}, {50, 0.1, 3, 10}};
  int deep = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Data d = xor_data(400, 100 + seed);
    deep += tune_cv(d.x, d.y, grid, {}, seed).best.max_splits == 3 ? 1 : 0;
  }
  CHECK(deep >= 9);
}

TEST_CASE("rank aggregation") {
  CHECK(importance_ranks(std::vector<double>{0.2, 0.5, 0.2, 0.1}) == std::vector<int>{2, 1, 3, 4});
  CHECK(importance_ranks(std::vector<double>{0.0, 0.0, 0.0}) == std::vector<int>{1, 2, 3});

  // Modes and frequencies of the reference ranking table, in its row order.
  const std::vector<int> modes = {1, 1, 1, 4, 5, 5, 6, 7, 9, 10};
  const std::vector<int> freqs = {108, 84, 80, 117, 93, 76, 64, 75, 106, 197};
  auto full = from_modes(modes, freqs, 300, 10);
  assign_total_rank(full);
  CHECK(full.rank_mode == modes);
  CHECK(full.mode_frequency == freqs);
  CHECK(full.total_rank == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});

  // The first three rows alone, presented out of order.
  auto three = from_modes({1, 1, 1}, {80, 108, 84}, 300, 10);
  assign_total_rank(three);
  CHECK(three.rank_mode == std::vector<int>{1, 1, 1});
  CHECK(three.total_rank == std::vector<int>{3, 1, 2});

  // Equal counts at two ranks: the smaller rank is the mode.
  ImportanceRanking tie;
  tie.histogram = {{5, 5}, {5, 5}};
  assign_total_rank(tie);
  CHECK(tie.rank_mode == std::vector<int>{1, 1});
  CHECK(tie.total_rank == std::vector<int>{1, 2});
}

TEST_CASE("bootstrap_rank") {
  const Data d = planted(200, 4, 2.0, 13);
  RankOptions opt;
  opt.sims = 1;
  opt.grid = {{20}, {0.1}, {1, 2}, 10};
  opt.cv = {4, 1, Metric::auc};
  const auto single = bootstrap_rank(d.x, d.y, {"a", "b", "c", "d"}, opt, 5);
  CHECK(single.total_rank == importance_ranks(single.mean_importance));
  for (const auto& row : single.histogram) CHECK(std::accumulate(row.begin(), row.end(), 0) == 1);

  opt.sims = 6;
  const auto a = bootstrap_rank(d.x, d.y, {}, opt, 9);
  const auto b = bootstrap_rank(d.x, d.y, {}, opt, 9);
  CHECK(a.histogram == b.histogram);
  CHECK(a.total_rank == b.total_rank);
  CHECK(a.names[2] == "x3");
  CHECK(a.total_rank[0] == 1);
  std::vector<int> sorted = a.total_rank;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{1, 2, 3, 4});
  for (std::size_t f = 0; f < 4; ++f) {
    CHECK(std::accumulate(a.histogram[f].begin(), a.histogram[f].end(), 0) == 6);
    int col = 0;
    for (std::size_t g = 0; g < 4; ++g) col += a.histogram[g][f];
    CHECK(col == 6);
  }
  CHECK(a.tuned.size() == 6);

  opt.retune_each = false;
  const auto fixed = bootstrap_rank(d.x, d.y, {}, opt, 9);
  CHECK(std::all_of(fixed.tuned.begin(), fixed.tuned.end(), [&](const BoostParams& p) { return p == fixed.tuned[0]; }));

  opt.sims = 0;
  CHECK_THROWS_AS((void)bootstrap_rank(d.x, d.y, {}, opt, 1), ParameterError);
}

TEST_CASE("complete_cases keeps rows with every feature present") {
  std::vector<FeatureRow> rows(3);
  rows[0][Feature::mean_fluence] = 1.0;
  rows[0][Feature::sd_spot] = 2.0;
  rows[0].label = true;
  rows[1][Feature::mean_fluence] = 3.0;
  rows[2][Feature::mean_fluence] = 5.0;
  rows[2][Feature::sd_spot] = 6.0;
  const std::array<Feature, 2> f = {Feature::mean_fluence, Feature::sd_spot};
  const auto m = complete_cases(rows, f);
  REQUIRE(m.x.rows() == 2);
  CHECK(m.x(1, 1) == 6.0);
  CHECK(m.y == std::vector<int>{1, 0});
  CHECK(m.names == std::vector<std::string>{"mean_fluence", "sd_spot"});
}
