#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "drycurve/baselines.hpp"
#include "drycurve/linalg.hpp"
#include "drycurve/rng.hpp"

using namespace drycurve;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

// Ordinary least squares with intercept via the normal equations.
std::vector<double> ols_predict(const Matrix& x, const std::vector<double>& y,
                                const Matrix& query) {
  const std::size_t n = x.rows, p = x.cols;
  Matrix a(n, p + 1, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) a(i, j + 1) = x(i, j);
  Matrix ata(p + 1, p + 1);
  std::vector<double> aty(p + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= p; ++j) {
      aty[j] += a(i, j) * y[i];
      for (std::size_t k = 0; k <= p; ++k) ata(j, k) += a(i, j) * a(i, k);
    }
  REQUIRE(solve_inplace(ata, aty));
  std::vector<double> out(query.rows);
  for (std::size_t i = 0; i < query.rows; ++i) {
    double z = aty[0];
    for (std::size_t j = 0; j < p; ++j) z += aty[j + 1] * query(i, j);
    out[i] = z;
  }
  return out;
}

}  // namespace

TEST_CASE("zero components reduce pls to the target mean") {
  Rng rng(1);
  const Matrix x = random_matrix(12, 3, rng);
  std::vector<double> y;
  for (int i = 0; i < 12; ++i) y.push_back(rng.uniform(0.0, 10.0));
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= 12.0;

  const PlsModel m = pls_fit(x, y, 0);
  CHECK(m.n_components == 0);
  const Matrix q = random_matrix(5, 3, rng);
  for (double p : pls_predict(m, q)) CHECK(p == Catch::Approx(mean).margin(1e-12));
}

TEST_CASE("one component captures a one-dimensional linear law") {
  Rng rng(2);
  Matrix x(15, 1);
  std::vector<double> y;
  for (std::size_t i = 0; i < 15; ++i) {
    x(i, 0) = rng.uniform(-3.0, 3.0);
    y.push_back(3.0 * x(i, 0) + 2.0);
  }
  const PlsModel m = pls_fit(x, y, 1);
  const auto pred = pls_predict(m, x);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(pred[i] - y[i]) < 1e-10);
}

TEST_CASE("full-rank pls with all components matches least squares") {
  Rng rng(3);
  const Matrix x = random_matrix(25, 4, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 25; ++i)
    y.push_back(1.5 * x(i, 0) - 0.5 * x(i, 1) + 0.25 * x(i, 3) + rng.normal(0.0, 0.3));

  const PlsModel m = pls_fit(x, y, 4);
  CHECK(m.n_components == 4);
  const Matrix q = random_matrix(10, 4, rng);
  const auto pls = pls_predict(m, q);
  const auto ols = ols_predict(x, y, q);
  for (std::size_t i = 0; i < pls.size(); ++i) CHECK(std::abs(pls[i] - ols[i]) < 1e-8);
}

TEST_CASE("successive pls score vectors are orthogonal") {
  Rng rng(4);
  const Matrix x = random_matrix(30, 5, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 30; ++i)
    y.push_back(x(i, 0) + 2.0 * x(i, 2) + rng.normal(0.0, 0.2));
  const PlsModel m = pls_fit(x, y, 3);
  REQUIRE(m.n_components == 3);

  // Rebuild the deflation sequence to recover the score vectors.
  Matrix xs(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j)
      xs(i, j) = (x(i, j) - m.x_mean[j]) / m.x_scale[j];
  std::vector<std::vector<double>> scores;
  for (int c = 0; c < m.n_components; ++c) {
    std::vector<double> t(x.rows, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) t[i] += xs(i, j) * m.weights[c][j];
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) xs(i, j) -= t[i] * m.loadings[c][j];
    scores.push_back(std::move(t));
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) dot += scores[a][i] * scores[b][i];
      CHECK(std::abs(dot) < 1e-8);
    }
}

TEST_CASE("pls stops extracting once the feature space is exhausted") {
  Rng rng(5);
  Matrix x(10, 3);
  for (std::size_t i = 0; i < 10; ++i) {
    x(i, 0) = rng.uniform(-1.0, 1.0);
    x(i, 1) = rng.uniform(-1.0, 1.0);
    x(i, 2) = 2.0 * x(i, 0);  // collinear: effective rank 2
  }
  std::vector<double> y;
  for (std::size_t i = 0; i < 10; ++i) y.push_back(x(i, 0) - x(i, 1));

  const PlsModel m = pls_fit(x, y, 3);
  CHECK(m.n_components < 3);
  for (double p : pls_predict(m, x)) CHECK(std::isfinite(p));
}

TEST_CASE("pls maps the training mean input to the training mean output") {
  Rng rng(6);
  const Matrix x = random_matrix(18, 4, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 18; ++i) y.push_back(rng.uniform(10.0, 90.0));
  const PlsModel m = pls_fit(x, y, 2);

  Matrix mean_row(1, 4);
  for (std::size_t j = 0; j < 4; ++j) mean_row(0, j) = m.x_mean[j];
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= 18.0;
  CHECK(pls_predict(m, mean_row)[0] == Catch::Approx(y_mean).margin(1e-10));
}

TEST_CASE("pls prediction is affine in its input") {
  Rng rng(7);
  const Matrix x = random_matrix(20, 3, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 20; ++i) y.push_back(rng.uniform(0.0, 5.0));
  const PlsModel m = pls_fit(x, y, 3);

  Matrix pts = random_matrix(2, 3, rng);
  const double alpha = 0.3;
  Matrix mix(1, 3);
  for (std::size_t j = 0; j < 3; ++j)
    mix(0, j) = alpha * pts(0, j) + (1.0 - alpha) * pts(1, j);
  const auto p = pls_predict(m, pts);
  const auto pm = pls_predict(m, mix);
  CHECK(pm[0] == Catch::Approx(alpha * p[0] + (1.0 - alpha) * p[1]).margin(1e-10));
}

TEST_CASE("pls rejects degenerate inputs") {
  Rng rng(8);
  const Matrix x = random_matrix(5, 2, rng);
  const std::vector<double> y = {1, 2, 3, 4, 5};
  const std::vector<double> bad_y = {1, 2};
  CHECK_THROWS_AS(pls_fit(Matrix(), y, 1), std::invalid_argument);
  CHECK_THROWS_AS(pls_fit(x, bad_y, 1), std::invalid_argument);
  CHECK_THROWS_AS(pls_fit(x, y, -1), std::invalid_argument);

  Matrix flat(5, 2, 1.0);
  CHECK_THROWS_AS(pls_fit(flat, y, 1), std::invalid_argument);
}

TEST_CASE("depth-zero forests predict bootstrap means") {
  Rng rng(9);
  const Matrix x = random_matrix(30, 2, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 30; ++i) y.push_back(rng.uniform(0.0, 10.0));

  RfrParams params;
  params.n_trees = 10;
  params.max_depth = 0;
  params.mtry = 2;
  const ForestModel m = rfr_fit(x, y, params, 17);
  for (const auto& tree : m.trees) {
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].feature == -1);
  }
  // A stump forest is constant in its input.
  const auto p1 = rfr_predict(m, random_matrix(4, 2, rng));
  for (double v : p1) CHECK(v == Catch::Approx(p1[0]));
}

TEST_CASE("a shallow forest nails a one-dimensional step") {
  Matrix x(20, 1);
  std::vector<double> y;
  for (std::size_t i = 0; i < 20; ++i) {
    x(i, 0) = i < 10 ? -2.0 + 0.1 * static_cast<double>(i)
                     : 1.0 + 0.1 * static_cast<double>(i - 10);
    y.push_back(x(i, 0) > 0.0 ? 1.0 : 0.0);
  }
  RfrParams params;
  params.n_trees = 25;
  params.max_depth = 3;
  params.min_samples_leaf = 1;
  params.mtry = 1;
  const ForestModel m = rfr_fit(x, y, params, 23);
  const auto pred = rfr_predict(m, x);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(pred[i] == Catch::Approx(y[i]).margin(1e-12));
}

TEST_CASE("forest fitting is deterministic in the seed") {
  Rng rng(10);
  const Matrix x = random_matrix(40, 3, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 40; ++i) y.push_back(x(i, 0) * x(i, 1) + rng.normal(0.0, 0.1));

  RfrParams params;
  params.n_trees = 8;
  const ForestModel a = rfr_fit(x, y, params, 99);
  const ForestModel b = rfr_fit(x, y, params, 99);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
    for (std::size_t i = 0; i < a.trees[t].nodes.size(); ++i) {
      CHECK(a.trees[t].nodes[i].feature == b.trees[t].nodes[i].feature);
      CHECK(a.trees[t].nodes[i].threshold == b.trees[t].nodes[i].threshold);
      CHECK(a.trees[t].nodes[i].value == b.trees[t].nodes[i].value);
    }
  }

  const ForestModel c = rfr_fit(x, y, params, 100);
  CHECK(rfr_predict(a, x) != rfr_predict(c, x));
}

TEST_CASE("forest worker count does not change the fit") {
  Rng rng(11);
  const Matrix x = random_matrix(25, 3, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 25; ++i) y.push_back(rng.uniform(0.0, 1.0));
  RfrParams params;
  params.n_trees = 6;
  const ForestModel serial = rfr_fit(x, y, params, 7, 1);
  const ForestModel parallel = rfr_fit(x, y, params, 7, 4);
  CHECK(rfr_predict(serial, x) == rfr_predict(parallel, x));
}

TEST_CASE("forest estimates never leave the training target range") {
  Rng rng(12);
  const Matrix x = random_matrix(50, 2, rng);
  std::vector<double> y;
  double lo = 1e300, hi = -1e300;
  for (std::size_t i = 0; i < 50; ++i) {
    y.push_back(rng.uniform(20.0, 80.0));
    lo = std::min(lo, y.back());
    hi = std::max(hi, y.back());
  }
  const ForestModel m = rfr_fit(x, y, RfrParams{}, 31);
  const Matrix far = random_matrix(20, 2, rng, -100.0, 100.0);
  for (double p : rfr_predict(m, far)) {
    CHECK(p >= lo - 1e-12);
    CHECK(p <= hi + 1e-12);
  }
}

TEST_CASE("duplicating every tree leaves predictions unchanged") {
  Rng rng(13);
  const Matrix x = random_matrix(20, 2, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 20; ++i) y.push_back(rng.uniform(0.0, 1.0));
  RfrParams params;
  params.n_trees = 5;
  ForestModel m = rfr_fit(x, y, params, 3);
  const auto base = rfr_predict(m, x);

  ForestModel doubled = m;
  for (const auto& t : m.trees) doubled.trees.push_back(t);
  const auto twice = rfr_predict(doubled, x);
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(twice[i] == Catch::Approx(base[i]).margin(1e-12));
}

TEST_CASE("split thresholds separate observed feature values") {
  Rng rng(14);
  const Matrix x = random_matrix(30, 3, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 30; ++i) y.push_back(x(i, 0) + rng.normal(0.0, 0.05));
  RfrParams params;
  params.n_trees = 4;
  params.mtry = 3;
  const ForestModel m = rfr_fit(x, y, params, 5);
  for (const auto& tree : m.trees) {
    for (const auto& node : tree.nodes) {
      if (node.feature < 0) continue;
      int below = 0, above = 0;
      for (std::size_t i = 0; i < x.rows; ++i) {
        const double v = x(i, static_cast<std::size_t>(node.feature));
        if (v < node.threshold) ++below;
        if (v > node.threshold) ++above;
      }
      CHECK(below >= 1);
      CHECK(above >= 1);
    }
  }
}

TEST_CASE("constant targets collapse every tree to one leaf") {
  Rng rng(15);
  const Matrix x = random_matrix(15, 2, rng);
  const std::vector<double> y(15, 4.5);
  RfrParams params;
  params.n_trees = 6;
  const ForestModel m = rfr_fit(x, y, params, 8);
  for (const auto& tree : m.trees) {
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].value == Catch::Approx(4.5));
  }
}

TEST_CASE("a leaf floor of the full sample size forbids splitting") {
  Rng rng(16);
  const Matrix x = random_matrix(12, 2, rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 12; ++i) y.push_back(rng.uniform(0.0, 1.0));
  RfrParams params;
  params.n_trees = 3;
  params.min_samples_leaf = 12;
  const ForestModel m = rfr_fit(x, y, params, 2);
  for (const auto& tree : m.trees) CHECK(tree.nodes.size() == 1);
}

TEST_CASE("training error does not increase with depth on a fixed sample") {
  Rng data_rng(17);
  const Matrix x = random_matrix(40, 3, data_rng);
  std::vector<double> y;
  for (std::size_t i = 0; i < 40; ++i)
    y.push_back(std::sin(x(i, 0)) + 0.5 * x(i, 1) + data_rng.normal(0.0, 0.05));

  // Grow directly on the full sample: a deeper cutoff refines the partition,
  // and leaf means minimize SSE per cell. Full-width mtry keeps the greedy
  // scan independent of the feature draw order.
  double prev = 1e300;
  for (int depth = 0; depth <= 6; ++depth) {
    RfrParams params;
    params.max_depth = depth;
    params.min_samples_leaf = 1;
    params.mtry = 3;
    std::vector<std::size_t> idx(x.rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    RegressionTree tree;
    Rng rng(77);
    detail::grow_tree(x, y, idx, 0, x.rows, 0, params, rng, tree);

    double sse = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double r = tree_predict_row(tree, x, i) - y[i];
      sse += r * r;
    }
    CHECK(sse <= prev + 1e-9);
    prev = sse;
  }
}

TEST_CASE("forest fitting validates its arguments") {
  Rng rng(18);
  const Matrix x = random_matrix(5, 2, rng);
  const std::vector<double> y = {1, 2, 3, 4, 5};
  const std::vector<double> bad = {1, 2};
  RfrParams params;
  CHECK_THROWS_AS(rfr_fit(Matrix(), y, params, 1), std::invalid_argument);
  CHECK_THROWS_AS(rfr_fit(x, bad, params, 1), std::invalid_argument);
  params.n_trees = 0;
  CHECK_THROWS_AS(rfr_fit(x, y, params, 1), std::invalid_argument);
}
