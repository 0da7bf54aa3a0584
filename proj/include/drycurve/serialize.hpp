#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "drycurve/baselines.hpp"
#include "drycurve/crossval.hpp"
#include "drycurve/dataset.hpp"
#include "drycurve/hpo.hpp"
#include "drycurve/metrics.hpp"
#include "drycurve/mlp.hpp"
#include "drycurve/thinlayer.hpp"
#include "drycurve/version.hpp"

static_assert(std::endian::native == std::endian::little,
              "parameter blobs are little-endian float64");

namespace drycurve {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Normalizer

inline json normalizer_to_json(const NormalizationSpec& n) {
  json features = json::object();
  for (std::size_t j = 0; j < kFeatureCount; ++j)
    features[kFeatureNames[j]] = json{{"min", n.feature_min[j]}, {"max", n.feature_max[j]}};
  return json{{"features", std::move(features)},
              {"mc", json{{"min", n.mc_min}, {"max", n.mc_max}}}};
}

inline NormalizationSpec normalizer_from_json(const json& j) {
  NormalizationSpec n;
  const json& features = j.at("features");
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    const json& f = features.at(kFeatureNames[k]);
    n.feature_min[k] = f.at("min").get<double>();
    n.feature_max[k] = f.at("max").get<double>();
  }
  n.mc_min = j.at("mc").at("min").get<double>();
  n.mc_max = j.at("mc").at("max").get<double>();
  return n;
}

// ---------------------------------------------------------------------------
// Thin-layer fits

inline json fit_result_to_json(const FitResult& f) {
  json j;
  j["family"] = family_name(f.family);
  json params = json::object();
  const auto names = param_names(f.family);
  for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = f.params[i];
  j["params"] = params;
  j["sse"] = f.sse;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["condition_flag"] = f.condition_flag;
  return j;
}

inline FitResult fit_result_from_json(const json& j) {
  FitResult f;
  f.family = family_from_name(j.at("family").get<std::string>());
  const auto names = param_names(f.family);
  f.params.resize(names.size());
  for (std::size_t i = 0; i < names.size(); ++i)
    f.params[i] = j.at("params").at(names[i]).get<double>();
  f.sse = j.at("sse").get<double>();
  f.iterations = j.at("iterations").get<int>();
  f.converged = j.at("converged").get<bool>();
  f.condition_flag = j.at("condition_flag").get<bool>();
  return f;
}

// ---------------------------------------------------------------------------
// PLS

inline json pls_to_json(const PlsModel& m) {
  json j;
  j["n_components"] = m.n_components;
  j["x_mean"] = m.x_mean;
  j["x_scale"] = m.x_scale;
  j["y_mean"] = m.y_mean;
  j["y_scale"] = m.y_scale;
  j["weights"] = m.weights;
  j["loadings"] = m.loadings;
  j["y_loadings"] = m.y_loadings;
  j["coef"] = m.coef;
  return j;
}

inline PlsModel pls_from_json(const json& j) {
  PlsModel m;
  m.n_components = j.at("n_components").get<int>();
  m.x_mean = j.at("x_mean").get<std::vector<double>>();
  m.x_scale = j.at("x_scale").get<std::vector<double>>();
  m.y_mean = j.at("y_mean").get<double>();
  m.y_scale = j.at("y_scale").get<double>();
  m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  m.loadings = j.at("loadings").get<std::vector<std::vector<double>>>();
  m.y_loadings = j.at("y_loadings").get<std::vector<double>>();
  m.coef = j.at("coef").get<std::vector<double>>();
  return m;
}

// ---------------------------------------------------------------------------
// Random forest (nested node form)

namespace detail {

inline json tree_node_to_json(const RegressionTree& tree, int index) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(index)];
  if (n.feature < 0) return json{{"value", n.value}};
  return json{{"feature", n.feature},
              {"threshold", n.threshold},
              {"left", tree_node_to_json(tree, n.left)},
              {"right", tree_node_to_json(tree, n.right)}};
}

inline int tree_node_from_json(const json& j, RegressionTree& tree) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("feature")) {
    tree.nodes[static_cast<std::size_t>(index)].feature = j.at("feature").get<int>();
    tree.nodes[static_cast<std::size_t>(index)].threshold = j.at("threshold").get<double>();
    const int left = tree_node_from_json(j.at("left"), tree);
    const int right = tree_node_from_json(j.at("right"), tree);
    tree.nodes[static_cast<std::size_t>(index)].left = left;
    tree.nodes[static_cast<std::size_t>(index)].right = right;
  } else {
    tree.nodes[static_cast<std::size_t>(index)].value = j.at("value").get<double>();
  }
  return index;
}

}  // namespace detail

inline json forest_to_json(const ForestModel& m) {
  json j;
  j["n_trees"] = m.params.n_trees;
  j["max_depth"] = m.params.max_depth;
  j["min_samples_leaf"] = m.params.min_samples_leaf;
  j["mtry"] = m.params.mtry;
  j["bootstrap_seeds"] = m.bootstrap_seeds;
  json trees = json::array();
  for (const auto& t : m.trees) trees.push_back(detail::tree_node_to_json(t, 0));
  j["trees"] = std::move(trees);
  return j;
}

inline ForestModel forest_from_json(const json& j) {
  ForestModel m;
  m.params.n_trees = j.at("n_trees").get<int>();
  m.params.max_depth = j.at("max_depth").get<int>();
  m.params.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  m.params.mtry = j.at("mtry").get<int>();
  m.bootstrap_seeds = j.at("bootstrap_seeds").get<std::vector<std::uint64_t>>();
  for (const auto& t : j.at("trees")) {
    RegressionTree tree;
    detail::tree_node_from_json(t, tree);
    m.trees.push_back(std::move(tree));
  }
  return m;
}

// ---------------------------------------------------------------------------
// MLP config and state

inline json mlp_config_to_json(const MlpConfig& c) {
  json j;
  j["hidden"] = c.hidden;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["dropout_rate"] = c.dropout_rate;
  j["bn_momentum"] = c.bn_momentum;
  j["bn_eps"] = c.bn_eps;
  j["input_dim"] = c.input_dim;
  j["seed"] = c.seed;
  return j;
}

inline MlpConfig mlp_config_from_json(const json& j) {
  MlpConfig c;
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
  if (j.contains("patience")) c.patience = j.at("patience").get<int>();
  if (j.contains("dropout_rate")) c.dropout_rate = j.at("dropout_rate").get<double>();
  if (j.contains("bn_momentum")) c.bn_momentum = j.at("bn_momentum").get<double>();
  if (j.contains("bn_eps")) c.bn_eps = j.at("bn_eps").get<double>();
  if (j.contains("input_dim")) c.input_dim = j.at("input_dim").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace detail {

inline void blob_append(std::vector<char>& blob, const double* v, std::size_t n) {
  const std::size_t at = blob.size();
  blob.resize(at + n * sizeof(double));
  std::memcpy(blob.data() + at, v, n * sizeof(double));
}

inline void blob_read(const std::vector<char>& blob, std::size_t& cursor, double* v,
                      std::size_t n) {
  if (cursor + n * sizeof(double) > blob.size())
    throw std::invalid_argument("mlp blob: truncated");
  std::memcpy(v, blob.data() + cursor, n * sizeof(double));
  cursor += n * sizeof(double);
}

}  // namespace detail

// Manifest carries shapes and config; the blob is the concatenation of
// (weights row-major, bias) per layer then (gamma, beta, running mean,
// running var) per hidden layer, as raw little-endian doubles.
inline std::pair<json, std::vector<char>> mlp_state_to_blob(const MlpState& s) {
  json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = mlp_config_to_json(s.config);
  json shapes = json::array();
  std::vector<char> blob;
  for (std::size_t l = 0; l < s.weights.size(); ++l) {
    shapes.push_back(json{{"rows", s.weights[l].rows}, {"cols", s.weights[l].cols}});
    detail::blob_append(blob, s.weights[l].data.data(), s.weights[l].data.size());
    detail::blob_append(blob, s.biases[l].data(), s.biases[l].size());
  }
  manifest["layer_shapes"] = std::move(shapes);
  json widths = json::array();
  for (const auto& bn : s.bn) {
    widths.push_back(bn.gamma.size());
    detail::blob_append(blob, bn.gamma.data(), bn.gamma.size());
    detail::blob_append(blob, bn.beta.data(), bn.beta.size());
    detail::blob_append(blob, bn.running_mean.data(), bn.running_mean.size());
    detail::blob_append(blob, bn.running_var.data(), bn.running_var.size());
  }
  manifest["bn_widths"] = std::move(widths);
  manifest["blob_bytes"] = blob.size();
  return {std::move(manifest), std::move(blob)};
}

inline MlpState mlp_state_from_blob(const json& manifest, const std::vector<char>& blob) {
  MlpState s;
  s.config = mlp_config_from_json(manifest.at("config"));
  std::size_t cursor = 0;
  for (const auto& shape : manifest.at("layer_shapes")) {
    const std::size_t rows = shape.at("rows").get<std::size_t>();
    const std::size_t cols = shape.at("cols").get<std::size_t>();
    Matrix w(rows, cols);
    detail::blob_read(blob, cursor, w.data.data(), w.data.size());
    s.weights.push_back(std::move(w));
    std::vector<double> b(cols, 0.0);
    detail::blob_read(blob, cursor, b.data(), b.size());
    s.biases.push_back(std::move(b));
  }
  for (const auto& width_j : manifest.at("bn_widths")) {
    const std::size_t width = width_j.get<std::size_t>();
    BatchNormLayer bn;
    bn.gamma.resize(width);
    bn.beta.resize(width);
    bn.running_mean.resize(width);
    bn.running_var.resize(width);
    detail::blob_read(blob, cursor, bn.gamma.data(), width);
    detail::blob_read(blob, cursor, bn.beta.data(), width);
    detail::blob_read(blob, cursor, bn.running_mean.data(), width);
    detail::blob_read(blob, cursor, bn.running_var.data(), width);
    s.bn.push_back(std::move(bn));
  }
  if (cursor != blob.size()) throw std::invalid_argument("mlp blob: trailing bytes");
  return s;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline void append_metric_pair(std::string& out, const MetricsAgg& agg) {
  const auto mean = metric_values(agg.mean);
  const auto sd = metric_values(agg.sd);
  for (std::size_t i = 0; i < 4; ++i) {
    out.push_back(',');
    append_double(out, mean[i]);
    out.push_back(',');
    append_double(out, sd[i]);
  }
}

}  // namespace detail

// One row per (model, regime); the two metric blocks are the full range and
// the ECD-only range, each as mean/sd pairs.
inline std::string benchmark_csv(const std::vector<CvReport>& reports) {
  std::string out =
      "model,regime,mae,mae_sd,mse,mse_sd,std_abs_resid,std_abs_resid_sd,r2,r2_sd,"
      "ecd_mae,ecd_mae_sd,ecd_mse,ecd_mse_sd,ecd_std_abs_resid,ecd_std_abs_resid_sd,"
      "ecd_r2,ecd_r2_sd,unconverged_cells\n";
  for (const auto& r : reports) {
    out += r.model;
    out.push_back(',');
    out += regime_name(r.regime);
    detail::append_metric_pair(out, r.overall_agg);
    detail::append_metric_pair(out, r.ecd_agg);
    out.push_back(',');
    out += std::to_string(r.unconverged_cells);
    out.push_back('\n');
  }
  return out;
}

inline json metrics_to_json(const Metrics& m) {
  return json{{"mae", m.mae}, {"mse", m.mse}, {"std_abs_resid", m.std_abs_resid}, {"r2", m.r2}};
}

inline json cv_report_to_json(const CvReport& r) {
  json j;
  j["model"] = r.model;
  j["regime"] = regime_name(r.regime);
  j["k"] = r.config.k;
  j["repeats"] = r.config.repeats;
  j["seed"] = r.config.seed;
  j["unconverged_cells"] = r.unconverged_cells;
  j["aggregate"] = {
      {"overall", {{"mean", metrics_to_json(r.overall_agg.mean)},
                   {"sd", metrics_to_json(r.overall_agg.sd)}}},
      {"ecd", {{"mean", metrics_to_json(r.ecd_agg.mean)}, {"sd", metrics_to_json(r.ecd_agg.sd)}}}};
  json cells = json::array();
  for (const auto& c : r.cells) {
    json cj;
    cj["repeat"] = c.repeat;
    cj["fold"] = c.fold;
    cj["heldout"] = c.heldout;
    cj["estimates"] = c.estimates;
    cj["measured"] = c.measured;
    cj["converged"] = c.converged;
    cj["overall"] = metrics_to_json(c.overall);
    cj["ecd"] = metrics_to_json(c.ecd);
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  return j;
}

inline std::string rolling_csv(const RollingCurve& curve) {
  std::string out = "center,mean_abs_resid,dispersion,count\n";
  for (const auto& p : curve.points) {
    detail::append_double(out, p.center);
    out.push_back(',');
    detail::append_double(out, p.mean_abs_resid);
    out.push_back(',');
    detail::append_double(out, p.dispersion);
    out.push_back(',');
    out += std::to_string(p.count);
    out.push_back('\n');
  }
  return out;
}

// JSON-lines transcript: every fold score plus each scheduling decision, in
// the order the scheduler applied them.
inline std::string asha_events_jsonl(const AshaOutcome& outcome) {
  std::string out;
  for (const auto& e : outcome.events) {
    json j;
    switch (e.kind) {
      case AshaEvent::Kind::FoldScore: j["event"] = "fold_score"; break;
      case AshaEvent::Kind::Promote: j["event"] = "promote"; break;
      case AshaEvent::Kind::Stop: j["event"] = "stop"; break;
      case AshaEvent::Kind::Complete: j["event"] = "complete"; break;
    }
    j["trial"] = e.trial;
    j["rung"] = e.rung;
    j["resource"] = e.resource;
    j["score"] = e.score;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// File helpers

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline void write_file(const std::string& path, const std::vector<char>& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return content;
}

inline std::vector<char> read_binary_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<char> content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return content;
}

}  // namespace drycurve
