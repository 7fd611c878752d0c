#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "inkstat/descriptive.hpp"
#include "inkstat/error.hpp"
#include "inkstat/featurize.hpp"

using namespace inkstat;

namespace {

TreatmentSeries make_series(std::vector<double> fluence, std::vector<int> complication = {}) {
  TreatmentSeries s{"T", {}};
  for (std::size_t i = 0; i < fluence.size(); ++i) {
    TreatmentEvent e;
    e.tattoo_id = "T";
    e.day = static_cast<int>(30 * i);
    e.fluence = fluence[i];
    e.spot_size = 4.0;
    e.complication_observed = i < complication.size() && complication[i] != 0;
    s.events.push_back(e);
  }
  return s;
}

double max_abs_offdiag(const std::vector<std::vector<double>>& r, const std::vector<std::size_t>& keep) {
  double m = 0.0;
  for (auto a : keep)
    for (auto b : keep)
      if (a != b) m = std::max(m, std::abs(r[a][b]));
  return m;
}

// Three columns with a prescribed correlation matrix, via Cholesky of R.
std::vector<std::vector<double>> correlated_columns(double rab, double rac, double rbc, std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> raw(3, std::vector<double>(n));
  for (auto& col : raw)
    for (auto& v : col) v = z(rng);
  // Whiten the raw draws so the sample correlation is exact.
  for (auto& col : raw) {
    const double m = stats::mean(col);
    for (auto& v : col) v -= m;
  }
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0, nn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += raw[j][i] * raw[k][i];
        nn += raw[k][i] * raw[k][i];
      }
      for (std::size_t i = 0; i < n; ++i) raw[j][i] -= dot / nn * raw[k][i];
    }
    const double s = stats::sd(raw[j]);
    for (auto& v : raw[j]) v /= s;
  }
  const double l11 = 1.0, l21 = rab, l31 = rac;
  const double l22 = std::sqrt(1 - rab * rab);
  const double l32 = (rbc - rac * rab) / l22;
  const double l33 = std::sqrt(1 - l31 * l31 - l32 * l32);
  std::vector<std::vector<double>> out(3, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    out[0][i] = l11 * raw[0][i];
    out[1][i] = l21 * raw[0][i] + l22 * raw[1][i];
    out[2][i] = l31 * raw[0][i] + l32 * raw[1][i] + l33 * raw[2][i];
  }
  return out;
}

}  // namespace

TEST_CASE("forward difference examples") {
  CHECK(forward_difference(std::vector<double>{3, 3, 3, 3}) == std::vector<double>{0, 0, 0});
  const auto d = forward_difference(std::vector<double>{1, 2, 4});
  CHECK(d == std::vector<double>{1, 2});
  CHECK(stats::mean(d) == 1.5);
  CHECK_THROWS_AS((void)forward_difference(std::vector<double>{1}), InsufficientDataError);
}

TEST_CASE("telescoping identity holds on random series") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 6.0);
  std::uniform_int_distribution<int> len(2, 30);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> x(trial == 0 ? 20 : len(rng));
    for (auto& v : x) v = u(rng);
    const auto row = summarize(make_series(x));
    const double direct = stats::mean(forward_difference(x));
    CHECK(std::abs(*row[Feature::mean_diff_fluence] - direct) <= 1e-12);
    CHECK(std::abs(direct - (x.back() - x.front()) / static_cast<double>(x.size() - 1)) <= 1e-12);
  }
}

TEST_CASE("first-arrival truncation") {
  const auto none = make_series({1, 2, 3});
  CHECK(truncate_first_arrival(none) == none);

  const auto s = make_series({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {0, 0, 0, 1, 0, 0, 1, 0, 0, 0});
  const auto t = truncate_first_arrival(s);
  REQUIRE(t.size() == 4);
  CHECK(t.events.back().fluence == 4);
  CHECK(truncate_first_arrival(t) == t);

  const auto first = truncate_first_arrival(make_series({2, 3}, {1, 0}));
  REQUIRE(first.size() == 1);
  const auto row = summarize(first);
  CHECK(row.label);
  CHECK_FALSE(row[Feature::mean_diff_fluence]);
  CHECK_FALSE(row[Feature::sd_fluence]);
  CHECK_FALSE(row[Feature::mean_days_between]);
}

TEST_CASE("summarize hand examples") {
  const auto single = summarize(make_series({2.0}));
  CHECK(*single[Feature::mean_fluence] == 2.0);
  CHECK_FALSE(single[Feature::sd_fluence]);
  CHECK_FALSE(single[Feature::sd_diff_frequency]);

  const auto three = summarize(make_series({1, 2, 3}));
  CHECK(*three[Feature::mean_fluence] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(*three[Feature::sd_fluence] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*three[Feature::mean_days_between] == 30.0);
  CHECK(*three[Feature::sd_diff_frequency] == 0.0);

  auto mixed = make_series({1, 1, 1});
  mixed.events[1].wavelength_nm = 532;
  mixed.events[0].frequency_hz = 5;
  const auto row = summarize(mixed);
  CHECK(*row[Feature::mean_wavelength] == doctest::Approx(2660.0 / 3.0));
  // Frequencies (5, 10, 10): differences (5, 0), sample SD 5/sqrt(2).
  CHECK(*row[Feature::sd_diff_frequency] == doctest::Approx(5.0 / std::sqrt(2.0)));
  CHECK(*row[Feature::mean_diff_frequency] == 2.5);
  CHECK_THROWS_AS((void)summarize(TreatmentSeries{"T", {}}), InsufficientDataError);
}

TEST_CASE("series mode parsing") {
  CHECK(parse_series_mode("full") == SeriesMode::full);
  CHECK(parse_series_mode("first-arrival") == SeriesMode::first_arrival);
  CHECK_THROWS_AS((void)parse_series_mode("partial"), ParameterError);
  CHECK(parse_feature("sd_spot") == Feature::sd_spot);
  CHECK(feature_label(Feature::mean_days_between) == "Mean Days Between Appts.");
}

TEST_CASE("quartile binning examples") {
  const std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8};
  const auto zero = quartile_bin(v, std::vector<int>(8, 0));
  CHECK(zero.rates == std::array<double, 4>{0, 0, 0, 0});
  CHECK(zero.counts == std::array<std::size_t, 4>{2, 2, 2, 2});

  std::vector<int> above6, above5;
  for (double x : v) {
    above6.push_back(x > 6 ? 1 : 0);
    above5.push_back(x > 5 ? 1 : 0);
  }
  CHECK(quartile_bin(v, above6).rates == std::array<double, 4>{0, 0, 0, 1});
  CHECK(quartile_bin(v, above5).rates == std::array<double, 4>{0, 0, 0.5, 1});
  CHECK_THROWS_AS((void)quartile_bin(std::vector<double>{1, 2, 3}, std::vector<int>{0, 0, 0}), InsufficientDataError);
}

TEST_CASE("quartile binning matches a brute-force oracle with ties") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> small(0, 6);
  std::uniform_int_distribution<int> len(4, 40);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> x(len(rng));
    std::vector<int> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = small(rng);
      y[i] = small(rng) % 2;
    }
    const auto b = quartile_bin(x, y);
    std::array<std::size_t, 4> counts{};
    for (const double xi : x) {
      // Oracle: bin index = number of cut points strictly below the value.
      std::size_t k = 0;
      for (const double c : b.cut_points) k += xi > c ? 1 : 0;
      ++counts[k];
    }
    CHECK(counts == b.counts);
    CHECK(std::accumulate(b.counts.begin(), b.counts.end(), std::size_t{0}) == x.size());
  }
  // Distinct values: bins within one element of equal size.
  for (std::size_t n = 4; n < 50; ++n) {
    std::vector<double> x(n);
    std::iota(x.begin(), x.end(), 0.0);
    std::shuffle(x.begin(), x.end(), rng);
    const auto b = quartile_bin(x, std::vector<int>(n, 0));
    const auto [lo, hi] = std::minmax_element(b.counts.begin(), b.counts.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("correlation pruning examples") {
  std::vector<std::vector<double>> dup = {{1, 2, 3, 4, 5}, {2, 4, 6, 8, 10}};
  CHECK(prune_correlated_columns(dup, 0.6).size() == 1);

  const auto weak = correlated_columns(0.3, 0.2, -0.1, 200, 1);
  CHECK(prune_correlated_columns(weak, 0.6).size() == 3);

  std::vector<std::vector<double>> with_constant = {{1, 2, 3}, {5, 5, 5}};
  std::vector<std::size_t> constant;
  CHECK(prune_correlated_columns(with_constant, 0.6, &constant) == std::vector<std::size_t>{0});
  CHECK(constant == std::vector<std::size_t>{1});
  CHECK_THROWS_AS((void)prune_correlated_columns(dup, 1.2), ParameterError);
}

TEST_CASE("pruning A/B/C example agrees with the removal-order oracle") {
  // r(B,C) = 0.1 with the other two entries is not a valid correlation
  // matrix (negative determinant); 0.35 is the nearest comfortable one.
  const auto cols = correlated_columns(0.9, 0.7, 0.35, 400, 3);
  CHECK(stats::pearson(cols[0], cols[1]) == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(stats::pearson(cols[1], cols[2]) == doctest::Approx(0.35).epsilon(1e-9));
  const auto kept = prune_correlated_columns(cols, 0.6);
  CHECK(kept == std::vector<std::size_t>{1, 2});

  // Oracle: among all removal sets giving a compliant survivor set, the
  // largest survivor set is unique here and equals {B, C}.
  std::vector<std::vector<double>> r(3, std::vector<double>(3, 1.0));
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      if (a != b) r[a][b] = stats::pearson(cols[a], cols[b]);
  std::vector<std::vector<std::size_t>> best;
  std::size_t best_size = 0;
  for (unsigned mask = 1; mask < 8; ++mask) {
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < 3; ++j)
      if (mask & (1u << j)) keep.push_back(j);
    if (max_abs_offdiag(r, keep) > 0.6) continue;
    if (keep.size() > best_size) {
      best_size = keep.size();
      best.clear();
    }
    if (keep.size() == best_size) best.push_back(keep);
  }
  REQUIRE(best.size() == 1);
  CHECK(best[0] == kept);
}

TEST_CASE("pruned sets never contain a pair above threshold") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t p = 2 + trial % 9, n = 80;
    std::vector<std::vector<double>> cols(p, std::vector<double>(n));
    std::vector<double> shared(n);
    for (auto& v : shared) v = z(rng);
    for (std::size_t j = 0; j < p; ++j) {
      const double w = 0.3 * static_cast<double>(j % 4);
      for (std::size_t i = 0; i < n; ++i) cols[j][i] = w * shared[i] + z(rng);
    }
    const auto kept = prune_correlated_columns(cols, 0.6);
    CHECK_FALSE(kept.empty());
    for (std::size_t a = 0; a < kept.size(); ++a)
      for (std::size_t b = a + 1; b < kept.size(); ++b)
        CHECK(std::abs(stats::pearson(cols[kept[a]], cols[kept[b]])) <= 0.6);
  }
}

TEST_CASE("prune_correlated on feature rows uses complete rows and reports constants") {
  std::vector<FeatureRow> rows(6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i][Feature::mean_fluence] = static_cast<double>(i);
    rows[i][Feature::sd_fluence] = 2.0 * static_cast<double>(i) + 1.0;
    rows[i][Feature::mean_spot] = 4.0;
    rows[i][Feature::sd_spot] = static_cast<double>((i * 7) % 5);
  }
  rows[5][Feature::sd_spot].reset();
  const std::array<Feature, 4> cand = {Feature::mean_fluence, Feature::sd_fluence, Feature::mean_spot, Feature::sd_spot};
  const auto res = prune_correlated(rows, cand, 0.6);
  CHECK(res.issues.size() == 1);
  CHECK(res.issues[0].kind == IssueKind::zero_variance);
  CHECK(std::find(res.removed.begin(), res.removed.end(), Feature::mean_spot) != res.removed.end());
  CHECK(res.retained.size() + res.removed.size() == 4);
}
