#include "inkstat/boost_rank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <tuple>

#include <fmt/format.h>

#include "inkstat/error.hpp"
#include "seeding.hpp"

namespace inkstat::gbm {
namespace {

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double log1p_exp(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

// Rank-based binning of every column.
struct Binned {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::uint8_t> codes;  // codes[f * n + i]
  std::vector<int> nbins;
  std::vector<std::size_t> offset;  // start of feature f in a histogram
  std::size_t total_bins = 0;
  std::vector<std::vector<double>> lo, hi;  // value range of each bin

  std::uint8_t code(std::size_t f, std::size_t row) const { return codes[f * n + row]; }
  double threshold(std::size_t f, int bin) const {
    return 0.5 * (hi[f][static_cast<std::size_t>(bin)] + lo[f][static_cast<std::size_t>(bin) + 1]);
  }
};

Binned bin_matrix(const Eigen::MatrixXd& x) {
  if (!x.allFinite()) throw ParameterError("boosting: non-finite feature value");
  Binned b;
  b.n = static_cast<std::size_t>(x.rows());
  b.p = static_cast<std::size_t>(x.cols());
  b.codes.resize(b.n * b.p);
  b.nbins.resize(b.p);
  b.offset.resize(b.p);
  b.lo.resize(b.p);
  b.hi.resize(b.p);
  std::vector<std::size_t> order(b.n);
  for (std::size_t f = 0; f < b.p; ++f) {
    const auto col = x.col(static_cast<Eigen::Index>(f));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
      return col[static_cast<Eigen::Index>(i)] < col[static_cast<Eigen::Index>(j)];
    });
    std::size_t distinct = 0;
    for (std::size_t k = 0; k < b.n; ++k)
      if (k == 0 || col[static_cast<Eigen::Index>(order[k])] != col[static_cast<Eigen::Index>(order[k - 1])])
        ++distinct;
    const bool exact = distinct <= static_cast<std::size_t>(kMaxBins);
    int bin = 0;
    std::size_t k = 0;
    while (k < b.n) {
      // One group of equal values at a time; a group never straddles bins.
      const double v = col[static_cast<Eigen::Index>(order[k])];
      std::size_t end = k;
      while (end < b.n && col[static_cast<Eigen::Index>(order[end])] == v) ++end;
      if (b.lo[f].size() == static_cast<std::size_t>(bin)) {
        b.lo[f].push_back(v);
        b.hi[f].push_back(v);
      }
      b.hi[f].back() = v;
      for (std::size_t m = k; m < end; ++m) b.codes[f * b.n + order[m]] = static_cast<std::uint8_t>(bin);
      // Close the bin once it reaches its share of the rows.
      if (exact || end * static_cast<std::size_t>(kMaxBins) >= (static_cast<std::size_t>(bin) + 1) * b.n) ++bin;
      k = end;
    }
    b.nbins[f] = static_cast<int>(b.lo[f].size());
    b.offset[f] = b.total_bins;
    b.total_bins += b.lo[f].size();
  }
  return b;
}

struct RawNode {
  int feature = -1;
  int bin = -1;  // codes <= bin go left
  int left = -1;
  int right = -1;
  std::size_t begin = 0;
  std::size_t end = 0;
  double gain = 0.0;
};

struct Split {
  int feature = -1;
  int bin = -1;
  double gain = 0.0;
};

struct Histogram {
  std::vector<double> sum;
  std::vector<int> count;
};

// Grows one tree on rows idx[0..m) (reordered in place so every node owns a
// contiguous range) against per-row targets t indexed by row id.
class Grower {
 public:
  Grower(const Binned& b, int max_splits, int min_leaf)
      : b_(b), max_splits_(max_splits), min_leaf_(min_leaf), inv_(b.n + 1, 0.0) {
    for (std::size_t k = 1; k <= b.n; ++k) inv_[k] = 1.0 / static_cast<double>(k);
  }

  std::vector<RawNode> grow(std::vector<std::size_t>& idx, const std::vector<double>& t) {
    std::vector<RawNode> nodes(1);
    nodes[0].end = idx.size();
    if (max_splits_ == 0 || idx.size() < 2 * static_cast<std::size_t>(min_leaf_)) return nodes;

    double total = 0.0;
    for (const std::size_t r : idx) total += t[r];
    const double mean = total / static_cast<double>(idx.size());
    double ss = 0.0;
    for (const std::size_t r : idx) ss += (t[r] - mean) * (t[r] - mean);
    min_gain_ = 1e-10 * ss;
    if (!(ss > 0.0)) return nodes;

    struct Candidate {
      int node;
      std::size_t hist;
      Split split;
      double sum;
    };
    ensure_pool(static_cast<std::size_t>(max_splits_) + 1);
    build(idx, 0, idx.size(), t, pool_[0]);
    std::vector<Candidate> open = {{0, 0, best_split(pool_[0], idx.size(), total), total}};
    std::size_t next_hist = 1;

    for (int s = 0; s < max_splits_; ++s) {
      std::size_t pick = open.size();
      for (std::size_t c = 0; c < open.size(); ++c)
        if (open[c].split.feature >= 0 && open[c].split.gain > min_gain_ &&
            (pick == open.size() || open[c].split.gain > open[pick].split.gain))
          pick = c;
      if (pick == open.size()) break;
      const Candidate parent = open[pick];
      open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));

      RawNode& node = nodes[static_cast<std::size_t>(parent.node)];
      node.feature = parent.split.feature;
      node.bin = parent.split.bin;
      node.gain = parent.split.gain;
      const std::size_t f = static_cast<std::size_t>(node.feature);
      const auto mid_it = std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(node.begin),
                                                idx.begin() + static_cast<std::ptrdiff_t>(node.end),
                                                [&](std::size_t r) { return b_.code(f, r) <= node.bin; });
      const std::size_t mid = static_cast<std::size_t>(mid_it - idx.begin());
      RawNode l, r;
      l.begin = node.begin;
      l.end = mid;
      r.begin = mid;
      r.end = node.end;
      node.left = static_cast<int>(nodes.size());
      node.right = node.left + 1;
      const int left_id = node.left;
      nodes.push_back(l);
      nodes.push_back(r);
      if (s + 1 == max_splits_) break;

      // Scan the smaller child; the larger is parent minus smaller.
      const RawNode& ln = nodes[static_cast<std::size_t>(left_id)];
      const RawNode& rn = nodes[static_cast<std::size_t>(left_id) + 1];
      const bool left_small = ln.end - ln.begin <= rn.end - rn.begin;
      const RawNode& small = left_small ? ln : rn;
      Histogram& hs = pool_[next_hist];
      Histogram& hp = pool_[parent.hist];
      build(idx, small.begin, small.end, t, hs);
      double small_sum = 0.0;
      for (std::size_t k = small.begin; k < small.end; ++k) small_sum += t[idx[k]];
      for (std::size_t k = 0; k < b_.total_bins; ++k) {
        hp.sum[k] -= hs.sum[k];
        hp.count[k] -= hs.count[k];
      }
      const double large_sum = parent.sum - small_sum;
      const std::size_t small_hist = next_hist++;
      const std::size_t lh = left_small ? small_hist : parent.hist;
      const std::size_t rh = left_small ? parent.hist : small_hist;
      const double lsum = left_small ? small_sum : large_sum;
      const double rsum = left_small ? large_sum : small_sum;
      open.push_back({left_id, lh, best_split(pool_[lh], ln.end - ln.begin, lsum), lsum});
      open.push_back({left_id + 1, rh, best_split(pool_[rh], rn.end - rn.begin, rsum), rsum});
    }
    return nodes;
  }

 private:
  void ensure_pool(std::size_t k) {
    if (pool_.size() < k) pool_.resize(k);
    for (auto& h : pool_) {
      h.sum.resize(b_.total_bins);
      h.count.resize(b_.total_bins);
    }
  }

  void build(const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end, const std::vector<double>& t,
             Histogram& h) const {
    std::fill(h.sum.begin(), h.sum.end(), 0.0);
    std::fill(h.count.begin(), h.count.end(), 0);
    for (std::size_t f = 0; f < b_.p; ++f) {
      const std::uint8_t* col = b_.codes.data() + f * b_.n;
      double* sum = h.sum.data() + b_.offset[f];
      int* count = h.count.data() + b_.offset[f];
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t r = idx[k];
        sum[col[r]] += t[r];
        ++count[col[r]];
      }
    }
  }

  Split best_split(const Histogram& h, std::size_t n, double total) const {
    Split best;
    if (n < 2 * static_cast<std::size_t>(min_leaf_)) return best;
    const double base = total * total / static_cast<double>(n);
    for (std::size_t f = 0; f < b_.p; ++f) {
      const double* sum = h.sum.data() + b_.offset[f];
      const int* count = h.count.data() + b_.offset[f];
      double sl = 0.0;
      int nl = 0;
      for (int bin = 0; bin + 1 < b_.nbins[f]; ++bin) {
        sl += sum[bin];
        nl += count[bin];
        const int nr = static_cast<int>(n) - nl;
        if (nl < min_leaf_) continue;
        if (nr < min_leaf_) break;
        if (count[bin] == 0) continue;  // same partition as an earlier cut
        const double sr = total - sl;
        const double gain = sl * sl * inv_[static_cast<std::size_t>(nl)] + sr * sr * inv_[static_cast<std::size_t>(nr)] - base;
        if (gain > best.gain) best = {static_cast<int>(f), bin, gain};
      }
    }
    return best;
  }

  const Binned& b_;
  int max_splits_;
  int min_leaf_;
  double min_gain_ = 0.0;
  std::vector<double> inv_;  // inv_[k] = 1/k
  std::vector<Histogram> pool_;
};

int leaf_of(const std::vector<RawNode>& nodes, const Binned& b, std::size_t row) {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
    const RawNode& nd = nodes[static_cast<std::size_t>(k)];
    k = b.code(static_cast<std::size_t>(nd.feature), row) <= nd.bin ? nd.left : nd.right;
  }
  return k;
}

// Count-weighted Gini, n * 2 p (1 - p), of 0/1 labels over idx[begin, end).
double weighted_gini(const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                     const std::vector<double>& y) {
  if (end == begin) return 0.0;
  double s = 0.0;
  for (std::size_t k = begin; k < end; ++k) s += y[idx[k]];
  const double n = static_cast<double>(end - begin);
  return 2.0 * s * (n - s) / n;
}

Tree to_tree(const std::vector<RawNode>& raw, const Binned& b) {
  Tree tree;
  tree.nodes.resize(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    TreeNode& t = tree.nodes[k];
    t.n = raw[k].end - raw[k].begin;
    if (raw[k].feature >= 0) {
      t.feature = raw[k].feature;
      t.threshold = b.threshold(static_cast<std::size_t>(raw[k].feature), raw[k].bin);
      t.left = raw[k].left;
      t.right = raw[k].right;
    }
  }
  return tree;
}

void check_params(const BoostParams& p) {
  if (p.trees < 1 || !(p.shrinkage > 0.0 && p.shrinkage <= 1.0) || p.max_splits < 0 || p.min_leaf < 1)
    throw ParameterError(fmt::format("boosting: invalid parameters (B={}, lambda={}, d={}, min_leaf={})", p.trees,
                                     p.shrinkage, p.max_splits, p.min_leaf));
}

std::vector<double> labels_as_double(std::span<const int> y, std::size_t n) {
  if (y.size() != n) throw ParameterError("boosting: X and y differ in rows");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0 && y[i] != 1) throw ParameterError("boosting: labels must be 0 or 1");
    out[i] = y[i];
  }
  return out;
}

// One boosting round on the rows in idx: fits the tree to the gradients,
// sets Newton leaf values and advances the scores f (by row id). Returns
// the raw tree and its leaf values.
struct Round {
  std::vector<RawNode> nodes;
  std::vector<double> values;  // by node id, leaves only
};

Round boost_round(Grower& grower, std::vector<std::size_t>& idx, const std::vector<double>& y, std::vector<double>& f,
                  std::vector<double>& g, std::vector<double>& h, double shrinkage) {
  for (const std::size_t r : idx) {
    const double pr = sigmoid(f[r]);
    g[r] = y[r] - pr;
    h[r] = pr * (1.0 - pr);
  }
  Round out;
  out.nodes = grower.grow(idx, g);
  out.values.assign(out.nodes.size(), 0.0);
  for (std::size_t k = 0; k < out.nodes.size(); ++k) {
    const RawNode& nd = out.nodes[k];
    if (nd.feature >= 0) continue;
    double sg = 0.0, sh = 0.0;
    for (std::size_t m = nd.begin; m < nd.end; ++m) {
      sg += g[idx[m]];
      sh += h[idx[m]];
    }
    const double v = sh > 1e-12 ? sg / sh : 0.0;
    out.values[k] = v;
    for (std::size_t m = nd.begin; m < nd.end; ++m) f[idx[m]] += shrinkage * v;
  }
  return out;
}

double auc(std::span<const double> score, std::span<const int> y) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return score[i] < score[j]; });
  double rank_sum = 0.0;
  double pos = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    std::size_t end = k;
    while (end < order.size() && score[order[end]] == score[order[k]]) ++end;
    const double mid = 0.5 * static_cast<double>(k + 1 + end);
    for (std::size_t m = k; m < end; ++m)
      if (y[order[m]] == 1) {
        rank_sum += mid;
        pos += 1.0;
      }
    k = end;
  }
  const double neg = static_cast<double>(score.size()) - pos;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double evaluate(Metric metric, std::span<const double> score, std::span<const int> y) {
  switch (metric) {
    case Metric::auc:
      return auc(score, y);
    case Metric::accuracy: {
      double hit = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) hit += ((score[i] > 0.0) == (y[i] == 1)) ? 1.0 : 0.0;
      return hit / static_cast<double>(y.size());
    }
    case Metric::log_loss: {
      double loss = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) loss += log1p_exp(score[i]) - y[i] * score[i];
      return -loss / static_cast<double>(y.size());
    }
  }
  throw ParameterError("unknown metric");
}

// Scores a (lambda, d, min_leaf) family at each B in `stages` (ascending)
// from a single run of max(stages) rounds.
std::vector<double> staged_scores(const Binned& b, const std::vector<double>& y, std::span<const int> yi,
                                  const std::vector<std::size_t>& train, const std::vector<std::size_t>& valid,
                                  const BoostParams& family, std::span<const int> stages, Metric metric) {
  std::vector<std::size_t> idx = train;
  double pos = 0.0;
  for (const std::size_t r : train) pos += y[r];
  const double base = std::log(pos / (static_cast<double>(train.size()) - pos));
  std::vector<double> f(b.n, base), g(b.n), h(b.n);
  std::vector<double> fv(valid.size(), base);
  std::vector<int> yv(valid.size());
  for (std::size_t k = 0; k < valid.size(); ++k) yv[k] = yi[valid[k]];

  Grower grower(b, family.max_splits, family.min_leaf);
  std::vector<double> out;
  std::size_t stage = 0;
  for (int round = 1; stage < stages.size(); ++round) {
    const Round rd = boost_round(grower, idx, y, f, g, h, family.shrinkage);
    if (rd.nodes.size() > 1)
      for (std::size_t k = 0; k < valid.size(); ++k)
        fv[k] += family.shrinkage * rd.values[static_cast<std::size_t>(leaf_of(rd.nodes, b, valid[k]))];
    else
      for (double& v : fv) v += family.shrinkage * rd.values[0];
    while (stage < stages.size() && stages[stage] == round) {
      out.push_back(evaluate(metric, fv, yv));
      ++stage;
    }
  }
  return out;
}

// Negated so that std::tuple ordering puts the preferred point first.
auto preference(const BoostParams& p) { return std::make_tuple(p.trees, -p.shrinkage, p.max_splits, p.min_leaf); }

}  // namespace

double gini(std::span<const double> proportions) {
  double total = 0.0, g = 0.0;
  for (const double p : proportions) {
    if (!(p >= 0.0)) throw ParameterError("gini: proportions must be nonnegative");
    total += p;
    g += p * (1.0 - p);
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("gini: proportions must sum to 1");
  return g;
}

double Tree::predict(std::span<const double> x) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0)
    k = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[k].feature)] <= nodes[k].threshold ? nodes[k].left
                                                                                                       : nodes[k].right);
  return nodes[k].value;
}

int Tree::splits() const {
  int s = 0;
  for (const auto& nd : nodes) s += nd.feature >= 0 ? 1 : 0;
  return s;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].feature < 0) continue;
    for (const int c : {nodes[k].left, nodes[k].right}) {
      d[static_cast<std::size_t>(c)] = d[k] + 1;
      best = std::max(best, d[k] + 1);
    }
  }
  return best;
}

Tree fit_tree(const Eigen::MatrixXd& x, std::span<const double> targets, int max_splits, int min_leaf) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (targets.size() != n) throw ParameterError("fit_tree: X and targets differ in rows");
  if (n == 0) throw InsufficientDataError("fit_tree: no rows");
  if (max_splits < 0 || min_leaf < 1) throw ParameterError("fit_tree: invalid max_splits or min_leaf");
  std::vector<double> t(targets.begin(), targets.end());
  bool binary = true;
  for (const double v : t) {
    if (!std::isfinite(v)) throw ParameterError("fit_tree: non-finite target");
    binary = binary && (v == 0.0 || v == 1.0);
  }
  const Binned b = bin_matrix(x);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Grower grower(b, max_splits, min_leaf);
  const auto raw = grower.grow(idx, t);
  Tree tree = to_tree(raw, b);

  // Per-row impurity: Gini 2p(1-p) for 0/1 targets, variance otherwise.
  std::vector<double> weighted(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const std::size_t bg = raw[k].begin, en = raw[k].end;
    double s = 0.0;
    for (std::size_t m = bg; m < en; ++m) s += t[idx[m]];
    const double cnt = static_cast<double>(en - bg);
    const double mean = s / cnt;
    double ss = 0.0;
    for (std::size_t m = bg; m < en; ++m) ss += (t[idx[m]] - mean) * (t[idx[m]] - mean);
    weighted[k] = binary ? 2.0 * s * (cnt - s) / cnt : ss;
    tree.nodes[k].impurity = weighted[k] / cnt;
    tree.nodes[k].value = mean;
  }
  for (std::size_t k = 0; k < raw.size(); ++k)
    if (raw[k].feature >= 0)
      tree.nodes[k].decrease = weighted[k] - weighted[static_cast<std::size_t>(raw[k].left)] -
                               weighted[static_cast<std::size_t>(raw[k].right)];
  return tree;
}

double GbmModel::decision(std::span<const double> x) const {
  double eta = base_score;
  for (const auto& t : trees) eta += shrinkage * t.predict(x);
  return eta;
}

double GbmModel::predict_prob(std::span<const double> x) const { return sigmoid(decision(x)); }

GbmModel fit_gbm(const Eigen::MatrixXd& x, std::span<const int> y, const BoostParams& params,
                 const GbmOptions& options) {
  check_params(params);
  const auto n = static_cast<std::size_t>(x.rows());
  const std::vector<double> yd = labels_as_double(y, n);
  const double pos = std::accumulate(yd.begin(), yd.end(), 0.0);
  if (pos == 0.0 || pos == static_cast<double>(n)) throw DegenerateError("fit_gbm: only one class present");

  const Binned b = bin_matrix(x);
  GbmModel model;
  model.base_score = std::log(pos / (static_cast<double>(n) - pos));
  model.shrinkage = params.shrinkage;
  model.importance.assign(b.p, 0.0);
  std::vector<double> f(n, model.base_score), g(n), h(n);
  const auto deviance = [&] {
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += log1p_exp(f[i]) - yd[i] * f[i];
    return 2.0 * d / static_cast<double>(n);
  };
  if (options.record_deviance) model.deviance.push_back(deviance());

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Grower grower(b, params.max_splits, params.min_leaf);
  model.trees.reserve(static_cast<std::size_t>(params.trees));
  for (int round = 0; round < params.trees; ++round) {
    const Round rd = boost_round(grower, idx, yd, f, g, h, params.shrinkage);
    Tree tree = to_tree(rd.nodes, b);
    for (std::size_t k = 0; k < rd.nodes.size(); ++k) {
      const RawNode& nd = rd.nodes[k];
      if (nd.feature < 0) {
        tree.nodes[k].value = rd.values[k];
        continue;
      }
      const RawNode& l = rd.nodes[static_cast<std::size_t>(nd.left)];
      const RawNode& r = rd.nodes[static_cast<std::size_t>(nd.right)];
      const double dec = weighted_gini(idx, nd.begin, nd.end, yd) - weighted_gini(idx, l.begin, l.end, yd) -
                         weighted_gini(idx, r.begin, r.end, yd);
      tree.nodes[k].decrease = dec;
      tree.nodes[k].impurity = weighted_gini(idx, nd.begin, nd.end, yd) / static_cast<double>(nd.end - nd.begin);
      model.importance[static_cast<std::size_t>(nd.feature)] += dec;
    }
    model.trees.push_back(std::move(tree));
    if (options.record_deviance) model.deviance.push_back(deviance());
  }
  const double total = std::accumulate(model.importance.begin(), model.importance.end(), 0.0);
  if (total > 0.0)
    for (double& v : model.importance) v /= total;
  return model;
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::auc:
      return "auc";
    case Metric::accuracy:
      return "accuracy";
    case Metric::log_loss:
      return "log_loss";
  }
  return "?";
}

Metric parse_metric(std::string_view text) {
  if (text == "auc") return Metric::auc;
  if (text == "accuracy") return Metric::accuracy;
  if (text == "log_loss" || text == "log-loss") return Metric::log_loss;
  throw ParameterError(fmt::format("unknown metric '{}'", text));
}

std::vector<BoostParams> BoostGrid::points() const {
  std::vector<BoostParams> out;
  for (const int b : trees)
    for (const double l : shrinkage)
      for (const int d : max_splits) out.push_back({b, l, d, min_leaf});
  return out;
}

CvResult tune_cv(const Eigen::MatrixXd& x, std::span<const int> y, std::span<const BoostParams> grid,
                 const CvOptions& cv, std::uint64_t seed) {
  if (grid.empty()) throw ParameterError("tune_cv: empty grid");
  if (cv.folds < 2 || cv.repeats < 1) throw ParameterError("tune_cv: need folds >= 2 and repeats >= 1");
  for (const auto& p : grid) check_params(p);
  const auto n = static_cast<std::size_t>(x.rows());
  const std::vector<double> yd = labels_as_double(y, n);
  std::vector<std::size_t> cls[2];
  for (std::size_t i = 0; i < n; ++i) cls[y[i]].push_back(i);
  const auto folds = static_cast<std::size_t>(cv.folds);
  if (cls[0].size() < folds || cls[1].size() < folds)
    throw InsufficientDataError(fmt::format("tune_cv: {} folds need at least {} rows of each class (have {} and {})",
                                            cv.folds, cv.folds, cls[0].size(), cls[1].size()));

  const Binned b = bin_matrix(x);
  // Families share (lambda, d, min_leaf); B is read off one staged run.
  std::map<std::tuple<double, int, int>, std::vector<int>> families;
  for (const auto& p : grid) families[{p.shrinkage, p.max_splits, p.min_leaf}].push_back(p.trees);
  std::map<std::tuple<double, int, int, int>, double> score;
  for (auto& [key, stages] : families) {
    std::sort(stages.begin(), stages.end());
    stages.erase(std::unique(stages.begin(), stages.end()), stages.end());
  }

  for (int rep = 0; rep < cv.repeats; ++rep) {
    std::mt19937_64 rng(detail::derive_seed(seed, static_cast<std::uint64_t>(rep)));
    std::vector<std::size_t> fold_of(n);
    std::size_t deal = 0;
    for (auto& members : cls) {
      std::vector<std::size_t> shuffled = members;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (const std::size_t i : shuffled) fold_of[i] = deal++ % folds;
    }
    for (std::size_t k = 0; k < folds; ++k) {
      std::vector<std::size_t> train, valid;
      for (std::size_t i = 0; i < n; ++i) (fold_of[i] == k ? valid : train).push_back(i);
      for (const auto& [key, stages] : families) {
        const auto& [lambda, d, min_leaf] = key;
        const auto s = staged_scores(b, yd, y, train, valid, {stages.back(), lambda, d, min_leaf}, stages, cv.metric);
        for (std::size_t j = 0; j < stages.size(); ++j) score[{lambda, d, min_leaf, stages[j]}] += s[j];
      }
    }
  }

  CvResult result;
  const double runs = static_cast<double>(cv.folds * cv.repeats);
  bool have = false;
  double best = 0.0;
  for (const auto& p : grid) {
    const double s = score[{p.shrinkage, p.max_splits, p.min_leaf, p.trees}] / runs;
    result.scores.push_back({p, s});
    if (!have || s > best || (s == best && preference(p) < preference(result.best))) {
      result.best = p;
      best = s;
      have = true;
    }
  }
  return result;
}

std::vector<int> importance_ranks(std::span<const double> importance) {
  std::vector<std::size_t> order(importance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return importance[i] > importance[j]; });
  std::vector<int> rank(importance.size());
  for (std::size_t k = 0; k < order.size(); ++k) rank[order[k]] = static_cast<int>(k) + 1;
  return rank;
}

void assign_total_rank(ImportanceRanking& ranking) {
  const std::size_t p = ranking.histogram.size();
  ranking.rank_mode.assign(p, 0);
  ranking.mode_frequency.assign(p, 0);
  for (std::size_t f = 0; f < p; ++f) {
    const auto& row = ranking.histogram[f];
    if (row.empty()) throw ParameterError("assign_total_rank: empty histogram row");
    const auto it = std::max_element(row.begin(), row.end());  // first maximum: smaller rank
    ranking.rank_mode[f] = static_cast<int>(it - row.begin()) + 1;
    ranking.mode_frequency[f] = *it;
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (ranking.rank_mode[a] != ranking.rank_mode[b]) return ranking.rank_mode[a] < ranking.rank_mode[b];
    return ranking.mode_frequency[a] > ranking.mode_frequency[b];
  });
  ranking.total_rank.assign(p, 0);
  for (std::size_t k = 0; k < p; ++k) ranking.total_rank[order[k]] = static_cast<int>(k) + 1;
}

ImportanceRanking bootstrap_rank(const Eigen::MatrixXd& x, std::span<const int> y, std::vector<std::string> names,
                                 const RankOptions& options, std::uint64_t seed) {
  if (options.sims < 1) throw ParameterError("bootstrap_rank: sims must be at least 1");
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  if (names.empty())
    for (std::size_t f = 0; f < p; ++f) names.push_back(fmt::format("x{}", f + 1));
  if (names.size() != p) throw ParameterError("bootstrap_rank: names and columns differ");
  (void)labels_as_double(y, n);
  const auto grid = options.grid.points();
  if (grid.empty()) throw ParameterError("bootstrap_rank: empty grid");

  ImportanceRanking out;
  out.names = std::move(names);
  out.sims = options.sims;
  out.histogram.assign(p, std::vector<int>(p, 0));
  out.mean_importance.assign(p, 0.0);

  BoostParams fixed;
  if (!options.retune_each) fixed = tune_cv(x, y, grid, options.cv, detail::derive_seed(seed, 0)).best;

  const auto need = static_cast<std::size_t>(options.cv.folds);
  Eigen::MatrixXd xb(x.rows(), x.cols());
  std::vector<int> yb(n);
  for (int s = 0; s < options.sims; ++s) {
    std::mt19937_64 rng(detail::derive_seed(seed, static_cast<std::uint64_t>(s) + 1));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    // Redraw a resample too unbalanced to stratify.
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = pick(rng);
        xb.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(r));
        yb[i] = y[r];
        pos += static_cast<std::size_t>(y[r]);
      }
      ok = pos >= need && n - pos >= need;
    }
    if (!ok) throw InsufficientDataError("bootstrap_rank: resamples keep missing a class; too few minority rows");
    const BoostParams params =
        options.retune_each ? tune_cv(xb, yb, grid, options.cv, rng()).best : fixed;
    const GbmModel model = fit_gbm(xb, yb, params);
    const auto ranks = importance_ranks(model.importance);
    for (std::size_t f = 0; f < p; ++f) {
      ++out.histogram[f][static_cast<std::size_t>(ranks[f]) - 1];
      out.mean_importance[f] += model.importance[f] / options.sims;
    }
    out.tuned.push_back(params);
  }
  assign_total_rank(out);
  return out;
}

LabeledMatrix complete_cases(std::span<const FeatureRow> rows, std::span<const Feature> features) {
  std::vector<const FeatureRow*> keep;
  for (const auto& r : rows)
    if (r.complete(features)) keep.push_back(&r);
  LabeledMatrix out;
  out.x.resize(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(features.size()));
  out.y.resize(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    for (std::size_t j = 0; j < features.size(); ++j)
      out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *(*keep[i])[features[j]];
    out.y[i] = keep[i]->label ? 1 : 0;
  }
  for (const Feature f : features) out.names.emplace_back(feature_name(f));
  return out;
}

}  // namespace inkstat::gbm
