#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "automr/error.hpp"
#include "automr/rng.hpp"

namespace automr::tune {

struct ForestOptions {
  std::size_t trees = 16;
  std::size_t max_depth = 8;
  std::size_t min_split = 2;
  std::size_t min_leaf = 1;
  double feature_fraction = 5.0 / 6.0;
  bool random_threshold = true;
  // Add within-leaf variance to the spread of tree means (law of total
  // variance). Off: variance is the spread of tree predictions only.
  bool leaf_variance = false;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

// Regression forest over encoded configurations. Each tree is grown on a
// bootstrap sample; leaves keep the mean and variance of their targets.
class RandomForest {
 public:
  explicit RandomForest(ForestOptions opt = {}) : opt_(opt) {}

  void fit(const std::vector<std::vector<double>>& X, const std::vector<double>& y, std::uint64_t seed) {
    if (X.size() != y.size() || X.empty()) throw ShapeError("forest: need matching, nonempty X and y");
    width_ = X.front().size();
    trees_.assign(opt_.trees, {});
    for (std::size_t t = 0; t < opt_.trees; ++t) {
      Rng rng(hash_key({seed, 0xf0u, t}));
      std::vector<std::size_t> rows(X.size());
      for (auto& r : rows) r = static_cast<std::size_t>(rng.below(X.size()));
      grow(trees_[t], X, y, rows, 0, rng);
    }
  }

  bool fitted() const noexcept { return !trees_.empty(); }

  // Mean over trees; variance is the spread of tree predictions, plus the
  // mean leaf variance when leaf_variance is set.
  Prediction predict(const std::vector<double>& x) const {
    if (!fitted()) throw InternalError("forest: predict before fit");
    double m = 0.0, second = 0.0;
    for (const auto& tree : trees_) {
      const Node* n = &tree[0];
      while (n->feature >= 0) n = &tree[x[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right];
      m += n->mean;
      second += (opt_.leaf_variance ? n->var : 0.0) + n->mean * n->mean;
    }
    const double k = static_cast<double>(trees_.size());
    m /= k;
    return {m, std::max(0.0, second / k - m * m)};
  }

 private:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    std::size_t left = 0, right = 0;
    double mean = 0.0, var = 0.0;
  };

  std::size_t grow(std::vector<Node>& tree, const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                   std::vector<std::size_t> rows, std::size_t depth, Rng& rng) {
    const std::size_t id = tree.size();
    tree.emplace_back();
    double mean = 0.0;
    for (auto r : rows) mean += y[r];
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (auto r : rows) var += (y[r] - mean) * (y[r] - mean);
    var /= static_cast<double>(rows.size());
    tree[id].mean = mean;
    tree[id].var = var;
    if (depth >= opt_.max_depth || rows.size() < opt_.min_split || var <= 0.0) return id;

    std::vector<std::size_t> features(width_);
    std::iota(features.begin(), features.end(), std::size_t{0});
    rng.shuffle(features.begin(), features.end());
    features.resize(std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(opt_.feature_fraction * width_))));

    double best_sse = var * static_cast<double>(rows.size());
    int best_f = -1;
    double best_lo = 0.0, best_hi = 0.0;
    std::vector<std::pair<double, double>> pts(rows.size());
    for (auto f : features) {
      for (std::size_t i = 0; i < rows.size(); ++i) pts[i] = {X[rows[i]][f], y[rows[i]]};
      std::sort(pts.begin(), pts.end());
      double total = 0.0, total_sq = 0.0;
      for (const auto& p : pts) total += p.second, total_sq += p.second * p.second;
      double ls = 0.0, lsq = 0.0;
      for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        ls += pts[i].second;
        lsq += pts[i].second * pts[i].second;
        if (pts[i].first == pts[i + 1].first) continue;
        if (i + 1 < opt_.min_leaf || pts.size() - i - 1 < opt_.min_leaf) continue;
        const double nl = static_cast<double>(i + 1), nr = static_cast<double>(pts.size() - i - 1);
        const double rs = total - ls, rsq = total_sq - lsq;
        const double sse = (lsq - ls * ls / nl) + (rsq - rs * rs / nr);
        if (sse < best_sse - 1e-12) {
          best_sse = sse;
          best_f = static_cast<int>(f);
          best_lo = pts[i].first;
          best_hi = pts[i + 1].first;
        }
      }
    }
    if (best_f < 0) return id;
    // Threshold drawn between the two neighbouring values rather than at the
    // midpoint, so the ensemble average interpolates across gaps.
    const double best_t = opt_.random_threshold ? rng.uniform(best_lo, best_hi) : 0.5 * (best_lo + best_hi);
    std::vector<std::size_t> l, r;
    for (auto row : rows) (X[row][static_cast<std::size_t>(best_f)] <= best_t ? l : r).push_back(row);
    tree[id].feature = best_f;
    tree[id].threshold = best_t;
    const auto li = grow(tree, X, y, std::move(l), depth + 1, rng);
    const auto ri = grow(tree, X, y, std::move(r), depth + 1, rng);
    tree[id].left = li;
    tree[id].right = ri;
    return id;
  }

  ForestOptions opt_;
  std::size_t width_ = 0;
  std::vector<std::vector<Node>> trees_;
};

// Expected improvement of a maximization candidate over `incumbent`.
inline double expected_improvement(const Prediction& p, double incumbent, double xi = 0.01) {
  const double improve = p.mean - incumbent - xi;
  const double sd = std::sqrt(std::max(0.0, p.variance));
  if (sd <= 0.0) return std::max(0.0, improve);
  const double z = improve / sd;
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  return std::max(0.0, improve * cdf + sd * pdf);
}

}  // namespace automr::tune
