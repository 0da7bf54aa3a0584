#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "drycurve/linalg.hpp"
#include "drycurve/parallel.hpp"
#include "drycurve/rng.hpp"

namespace drycurve {

// ---------------------------------------------------------------------------
// Partial least squares (PLS1, NIPALS). Features and target are centered and
// scaled to unit variance before extraction; deflation after each component.

struct PlsModel {
  int n_components = 0;  // achieved count, may be lower than requested
  std::vector<double> x_mean, x_scale;
  double y_mean = 0.0, y_scale = 1.0;
  std::vector<std::vector<double>> weights;   // w per component
  std::vector<std::vector<double>> loadings;  // p per component
  std::vector<double> y_loadings;             // q per component
  std::vector<double> coef;                   // regression vector in scaled space
};

inline PlsModel pls_fit(const Matrix& x, std::span<const double> y, int n_components) {
  const std::size_t n = x.rows, p = x.cols;
  if (n == 0 || p == 0) throw std::invalid_argument("pls_fit: empty input");
  if (y.size() != n) throw std::invalid_argument("pls_fit: target length mismatch");
  if (n_components < 0) throw std::invalid_argument("pls_fit: negative component count");

  PlsModel m;
  m.x_mean.assign(p, 0.0);
  m.x_scale.assign(p, 1.0);
  for (std::size_t j = 0; j < p; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += x(i, j);
    m.x_mean[j] = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x(i, j) - m.x_mean[j];
      sq += d * d;
    }
    const double sd = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
    m.x_scale[j] = sd > 0.0 ? sd : 1.0;
  }
  bool any_varying = false;
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 1; i < n; ++i)
      if (x(i, j) != x(0, j)) {
        any_varying = true;
        break;
      }
    if (any_varying) break;
  }
  if (!any_varying) throw std::invalid_argument("pls_fit: all feature columns are constant");

  m.y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double y_sq = 0.0;
  for (double v : y) {
    const double d = v - m.y_mean;
    y_sq += d * d;
  }
  const double y_sd = n > 1 ? std::sqrt(y_sq / static_cast<double>(n - 1)) : 0.0;
  m.y_scale = y_sd > 0.0 ? y_sd : 1.0;

  Matrix xc(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) xc(i, j) = (x(i, j) - m.x_mean[j]) / m.x_scale[j];
  std::vector<double> yc(n);
  for (std::size_t i = 0; i < n; ++i) yc[i] = (y[i] - m.y_mean) / m.y_scale;

  const int cap = static_cast<int>(std::min(p, n));
  const int requested = std::min(n_components, cap);
  constexpr double kTinyNorm = 1e-12;

  for (int a = 0; a < requested; ++a) {
    std::vector<double> w(p, 0.0);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t i = 0; i < n; ++i) w[j] += xc(i, j) * yc[i];
    double w_norm = 0.0;
    for (double v : w) w_norm += v * v;
    w_norm = std::sqrt(w_norm);
    if (w_norm < kTinyNorm) break;  // no covariance left, stop at achieved rank
    for (double& v : w) v /= w_norm;

    std::vector<double> t(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) t[i] += xc(i, j) * w[j];
    double tt = 0.0;
    for (double v : t) tt += v * v;
    if (tt < kTinyNorm) break;

    std::vector<double> pl(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t i = 0; i < n; ++i) pl[j] += xc(i, j) * t[i];
      pl[j] /= tt;
    }
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) q += yc[i] * t[i];
    q /= tt;

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) xc(i, j) -= t[i] * pl[j];
      yc[i] -= q * t[i];
    }
    m.weights.push_back(std::move(w));
    m.loadings.push_back(std::move(pl));
    m.y_loadings.push_back(q);
    ++m.n_components;
  }

  // coef = W (P'W)^-1 q, mapping scaled inputs straight to the scaled target.
  m.coef.assign(p, 0.0);
  const int a = m.n_components;
  if (a > 0) {
    Matrix pw(static_cast<std::size_t>(a), static_cast<std::size_t>(a));
    for (int r = 0; r < a; ++r)
      for (int c = 0; c < a; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < p; ++j) s += m.loadings[r][j] * m.weights[c][j];
        pw(r, c) = s;
      }
    std::vector<double> rhs = m.y_loadings;
    if (!solve_inplace(pw, rhs))
      throw std::runtime_error("pls_fit: singular loading system");
    for (std::size_t j = 0; j < p; ++j)
      for (int c = 0; c < a; ++c) m.coef[j] += m.weights[c][j] * rhs[c];
  }
  return m;
}

inline std::vector<double> pls_predict(const PlsModel& m, const Matrix& x) {
  if (x.cols != m.x_mean.size()) throw std::invalid_argument("pls_predict: feature width mismatch");
  std::vector<double> out(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j)
      z += (x(i, j) - m.x_mean[j]) / m.x_scale[j] * m.coef[j];
    out[i] = m.y_mean + m.y_scale * z;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random forest regression: bootstrap per tree, greedy variance-reduction
// CART splits over an mtry-sized feature sample per node.

struct RfrParams {
  int n_trees = 200;
  int max_depth = 12;
  int min_samples_leaf = 2;
  int mtry = 3;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  double value = 0.0;  // leaf mean
  int left = -1, right = -1;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // node 0 is the root
};

struct ForestModel {
  RfrParams params;
  std::vector<RegressionTree> trees;
  std::vector<std::uint64_t> bootstrap_seeds;
};

namespace detail {

// Grows one subtree; returns the node index. Splits need strict SSE
// reduction, both children at least min_samples_leaf, and a threshold that
// strictly separates two observed values.
inline int grow_tree(const Matrix& x, std::span<const double> y, std::vector<std::size_t>& idx,
                     std::size_t lo, std::size_t hi, int depth, const RfrParams& params, Rng& rng,
                     RegressionTree& tree) {
  const std::size_t count = hi - lo;
  double sum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) sum += y[idx[i]];
  const double mean = sum / static_cast<double>(count);
  double sse = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double d = y[idx[i]] - mean;
    sse += d * d;
  }

  const int node = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({-1, 0.0, mean, -1, -1});
  const std::size_t min_leaf = static_cast<std::size_t>(params.min_samples_leaf);
  if (depth >= params.max_depth || count < 2 * min_leaf || sse <= 1e-12) return node;

  // Feature sample without replacement, in draw order.
  const std::size_t p = x.cols;
  std::vector<std::size_t> features(p);
  std::iota(features.begin(), features.end(), std::size_t{0});
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(params.mtry), p);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(p - 1)));
    std::swap(features[i], features[j]);
  }

  double best_sse = sse - 1e-12;
  int best_feature = -1;
  double best_threshold = 0.0;
  std::vector<std::pair<double, double>> vals(count);  // (feature value, target)
  for (std::size_t fi = 0; fi < take; ++fi) {
    const std::size_t f = features[fi];
    for (std::size_t i = 0; i < count; ++i)
      vals[i] = {x(idx[lo + i], f), y[idx[lo + i]]};
    std::sort(vals.begin(), vals.end());

    double left_sum = 0.0, left_sq = 0.0;
    const double total_sum = sum;
    double total_sq = 0.0;
    for (const auto& [_, t] : vals) total_sq += t * t;
    for (std::size_t i = 0; i + 1 < count; ++i) {
      left_sum += vals[i].second;
      left_sq += vals[i].second * vals[i].second;
      if (vals[i].first == vals[i + 1].first) continue;
      const std::size_t nl = i + 1, nr = count - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double mid = vals[i].first + (vals[i + 1].first - vals[i].first) / 2.0;
      if (!(mid > vals[i].first && mid < vals[i + 1].first)) continue;
      const double right_sum = total_sum - left_sum;
      const double right_sq = total_sq - left_sq;
      const double split_sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                               (right_sq - right_sum * right_sum / static_cast<double>(nr));
      if (split_sse < best_sse) {
        best_sse = split_sse;
        best_feature = static_cast<int>(f);
        best_threshold = mid;
      }
    }
  }
  if (best_feature < 0) return node;

  const auto mid_it = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                     idx.begin() + static_cast<std::ptrdiff_t>(hi),
                                     [&](std::size_t i) {
                                       return x(i, static_cast<std::size_t>(best_feature)) <
                                              best_threshold;
                                     });
  const std::size_t mid_pos = static_cast<std::size_t>(mid_it - idx.begin());
  tree.nodes[static_cast<std::size_t>(node)].feature = best_feature;
  tree.nodes[static_cast<std::size_t>(node)].threshold = best_threshold;
  const int left = grow_tree(x, y, idx, lo, mid_pos, depth + 1, params, rng, tree);
  tree.nodes[static_cast<std::size_t>(node)].left = left;
  const int right = grow_tree(x, y, idx, mid_pos, hi, depth + 1, params, rng, tree);
  tree.nodes[static_cast<std::size_t>(node)].right = right;
  return node;
}

}  // namespace detail

inline ForestModel rfr_fit(const Matrix& x, std::span<const double> y, const RfrParams& params,
                           std::uint64_t seed, int workers = 1) {
  const std::size_t n = x.rows;
  if (n == 0) throw std::invalid_argument("rfr_fit: empty input");
  if (y.size() != n) throw std::invalid_argument("rfr_fit: target length mismatch");
  if (params.n_trees < 1) throw std::invalid_argument("rfr_fit: need at least one tree");
  if (params.max_depth < 0) throw std::invalid_argument("rfr_fit: negative max_depth");
  if (params.min_samples_leaf < 1) throw std::invalid_argument("rfr_fit: min_samples_leaf < 1");
  if (params.mtry < 1) throw std::invalid_argument("rfr_fit: mtry < 1");

  ForestModel forest;
  forest.params = params;
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));
  forest.bootstrap_seeds.resize(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t)
    forest.bootstrap_seeds[static_cast<std::size_t>(t)] =
        derive_seed(seed, static_cast<std::uint64_t>(t));

  parallel_for(static_cast<std::size_t>(params.n_trees), workers, [&](std::size_t t) {
    Rng rng(forest.bootstrap_seeds[t]);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
      idx[i] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::uint64_t>(n - 1)));
    RegressionTree tree;
    detail::grow_tree(x, y, idx, 0, n, 0, params, rng, tree);
    forest.trees[t] = std::move(tree);
  });
  return forest;
}

inline double tree_predict_row(const RegressionTree& tree, const Matrix& x, std::size_t row) {
  int node = 0;
  while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
    node = x(row, static_cast<std::size_t>(nd.feature)) < nd.threshold ? nd.left : nd.right;
  }
  return tree.nodes[static_cast<std::size_t>(node)].value;
}

inline std::vector<double> rfr_predict(const ForestModel& m, const Matrix& x) {
  std::vector<double> out(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double sum = 0.0;
    for (const auto& tree : m.trees) sum += tree_predict_row(tree, x, i);
    out[i] = sum / static_cast<double>(m.trees.size());
  }
  return out;
}

}  // namespace drycurve
