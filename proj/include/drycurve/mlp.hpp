#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "drycurve/dataset.hpp"
#include "drycurve/linalg.hpp"
#include "drycurve/rng.hpp"

namespace drycurve {

struct MlpConfig {
  std::vector<int> hidden = {231, 421, 392};
  double learning_rate = 0.029924;
  int batch_size = 16;
  int max_epochs = 5000;
  int patience = 200;
  double dropout_rate = 0.5;
  double bn_momentum = 0.1;
  double bn_eps = 1e-8;
  int input_dim = static_cast<int>(kFeatureCount);
  std::uint64_t seed = 0;
};

// Batch norm over a hidden block's input. Running stats start at zero and
// track batch moments with momentum; variance is the biased (1/B) estimate.
struct BatchNormLayer {
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
};

// Hidden block l: BN(input) -> affine -> ReLU -> inverted dropout.
// Output block: plain affine to one unit. weights[l] is (fan_in x fan_out).
struct MlpState {
  MlpConfig config;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  std::vector<BatchNormLayer> bn;

  std::size_t layer_count() const { return weights.size(); }
};

namespace detail {

inline void check_mlp_config(const MlpConfig& c) {
  if (c.hidden.empty()) throw std::invalid_argument("mlp: at least one hidden layer required");
  for (int h : c.hidden)
    if (h < 1) throw std::invalid_argument("mlp: hidden layer width must be >= 1");
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("mlp: learning rate must be positive");
  if (c.batch_size == 1) throw std::invalid_argument("mlp: batch size 1 is invalid in train mode");
  if (c.batch_size < 2) throw std::invalid_argument("mlp: batch size must be >= 2");
  if (c.max_epochs < 1) throw std::invalid_argument("mlp: max_epochs must be >= 1");
  if (c.patience < 1) throw std::invalid_argument("mlp: patience must be >= 1");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0))
    throw std::invalid_argument("mlp: dropout rate must be in [0, 1)");
  if (c.input_dim < 1) throw std::invalid_argument("mlp: input_dim must be >= 1");
  if (!(c.bn_eps > 0.0)) throw std::invalid_argument("mlp: bn_eps must be positive");
  if (!(c.bn_momentum > 0.0 && c.bn_momentum <= 1.0))
    throw std::invalid_argument("mlp: bn_momentum must be in (0, 1]");
}

}  // namespace detail

// He-uniform fan-in for hidden weights, Xavier-uniform for the output layer,
// zero biases, gamma 1 / beta 0, running stats zero.
inline MlpState mlp_init(const MlpConfig& config) {
  detail::check_mlp_config(config);
  MlpState s;
  s.config = config;
  Rng rng(derive_seed(config.seed, 0x696E6974ull));

  std::vector<int> dims;
  dims.push_back(config.input_dim);
  for (int h : config.hidden) dims.push_back(h);
  dims.push_back(1);

  const std::size_t layers = dims.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    const bool output = l + 1 == layers;
    const double limit = output ? std::sqrt(6.0 / (fan_in + fan_out)) : std::sqrt(6.0 / fan_in);
    Matrix w(static_cast<std::size_t>(fan_in), static_cast<std::size_t>(fan_out));
    for (double& v : w.data) v = rng.uniform(-limit, limit);
    s.weights.push_back(std::move(w));
    s.biases.emplace_back(static_cast<std::size_t>(fan_out), 0.0);
    if (!output) {
      BatchNormLayer b;
      b.gamma.assign(static_cast<std::size_t>(fan_in), 1.0);
      b.beta.assign(static_cast<std::size_t>(fan_in), 0.0);
      b.running_mean.assign(static_cast<std::size_t>(fan_in), 0.0);
      b.running_var.assign(static_cast<std::size_t>(fan_in), 0.0);
      s.bn.push_back(std::move(b));
    }
  }
  return s;
}

// Everything the backward pass needs from one train-mode forward: block
// inputs, batch moments, normalized inputs, pre-activations, and the batch
// predictions. batch_mean/var feed the running-stat update in the train loop.
struct MlpForwardCache {
  std::vector<Matrix> block_input;         // per hidden layer, pre-BN
  std::vector<Matrix> normalized;          // per hidden layer, xhat
  std::vector<std::vector<double>> batch_mean, batch_var;
  std::vector<Matrix> pre_activation;      // per hidden layer, affine output
  std::vector<Matrix> activation;          // per hidden layer, post ReLU+dropout
  std::vector<double> predictions;
};

// Train-mode forward pass; pure in the state (running stats are not touched
// here). dropout_masks, when given, holds one (B x width) matrix per hidden
// layer with entries 0 or 1/keep; null means dropout disabled. Returns the
// batch MSE against y.
inline double mlp_forward_train(const MlpState& s, const Matrix& x, std::span<const double> y,
                                const std::vector<Matrix>* dropout_masks,
                                MlpForwardCache* cache) {
  const std::size_t batch = x.rows;
  if (batch < 2) throw std::invalid_argument("mlp: train-mode batch must have >= 2 rows");
  if (x.cols != static_cast<std::size_t>(s.config.input_dim))
    throw std::invalid_argument("mlp: input width mismatch");
  if (y.size() != batch) throw std::invalid_argument("mlp: target length mismatch");

  const std::size_t n_hidden = s.bn.size();
  if (cache) {
    cache->block_input.clear();
    cache->normalized.clear();
    cache->batch_mean.clear();
    cache->batch_var.clear();
    cache->pre_activation.clear();
    cache->activation.clear();
  }

  Matrix h = x;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    const auto& bn = s.bn[l];
    const std::size_t width = h.cols;
    std::vector<double> mean(width, 0.0), var(width, 0.0);
    for (std::size_t j = 0; j < width; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < batch; ++i) sum += h(i, j);
      mean[j] = sum / static_cast<double>(batch);
      double sq = 0.0;
      for (std::size_t i = 0; i < batch; ++i) {
        const double d = h(i, j) - mean[j];
        sq += d * d;
      }
      var[j] = sq / static_cast<double>(batch);
    }
    Matrix xhat(batch, width);
    Matrix scaled(batch, width);
    for (std::size_t j = 0; j < width; ++j) {
      const double inv_sd = 1.0 / std::sqrt(var[j] + s.config.bn_eps);
      for (std::size_t i = 0; i < batch; ++i) {
        xhat(i, j) = (h(i, j) - mean[j]) * inv_sd;
        scaled(i, j) = bn.gamma[j] * xhat(i, j) + bn.beta[j];
      }
    }
    if (cache) {
      cache->block_input.push_back(h);
      cache->normalized.push_back(xhat);
      cache->batch_mean.push_back(mean);
      cache->batch_var.push_back(var);
    }

    Matrix z = matmul(scaled, s.weights[l]);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < z.cols; ++j) z(i, j) += s.biases[l][j];
    if (cache) cache->pre_activation.push_back(z);

    Matrix a(batch, z.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = std::max(0.0, z.data[i]);
    if (dropout_masks) {
      const Matrix& mask = (*dropout_masks)[l];
      if (mask.rows != a.rows || mask.cols != a.cols)
        throw std::invalid_argument("mlp: dropout mask shape mismatch");
      for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] *= mask.data[i];
    }
    if (cache) cache->activation.push_back(a);
    h = std::move(a);
  }

  const Matrix& w_out = s.weights.back();
  std::vector<double> pred(batch, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    double z = s.biases.back()[0];
    for (std::size_t j = 0; j < h.cols; ++j) z += h(i, j) * w_out(j, 0);
    pred[i] = z;
  }
  if (cache) cache->predictions = pred;

  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double r = pred[i] - y[i];
    loss += r * r;
  }
  return loss / static_cast<double>(batch);
}

struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  std::vector<std::vector<double>> gamma, beta;
};

// Full backward through the batch statistics (mean and variance both depend
// on every row, so dx picks up the dvar and dmean terms).
inline MlpGradients mlp_backward(const MlpState& s, const Matrix& x, std::span<const double> y,
                                 const std::vector<Matrix>* dropout_masks,
                                 const MlpForwardCache& cache) {
  const std::size_t batch = x.rows;
  const std::size_t n_hidden = s.bn.size();
  const double inv_b = 1.0 / static_cast<double>(batch);

  MlpGradients g;
  g.weights.reserve(s.weights.size());
  for (const auto& w : s.weights) g.weights.emplace_back(w.rows, w.cols);
  for (const auto& b : s.biases) g.biases.emplace_back(b.size(), 0.0);
  for (const auto& bn : s.bn) {
    g.gamma.emplace_back(bn.gamma.size(), 0.0);
    g.beta.emplace_back(bn.beta.size(), 0.0);
  }

  // d(loss)/d(pred), loss = mean squared error over the batch.
  std::vector<double> dpred(batch);
  for (std::size_t i = 0; i < batch; ++i)
    dpred[i] = 2.0 * (cache.predictions[i] - y[i]) * inv_b;

  const Matrix& last_act = n_hidden > 0 ? cache.activation.back() : x;
  const Matrix& w_out = s.weights.back();
  Matrix& dw_out = g.weights.back();
  double db_out = 0.0;
  Matrix dh(batch, last_act.cols);
  for (std::size_t i = 0; i < batch; ++i) {
    db_out += dpred[i];
    for (std::size_t j = 0; j < last_act.cols; ++j) {
      dw_out(j, 0) += last_act(i, j) * dpred[i];
      dh(i, j) = dpred[i] * w_out(j, 0);
    }
  }
  g.biases.back()[0] = db_out;

  for (std::size_t l = n_hidden; l-- > 0;) {
    const std::size_t width_out = cache.pre_activation[l].cols;
    const std::size_t width_in = cache.block_input[l].cols;

    // Dropout then ReLU, in reverse.
    Matrix dz(batch, width_out);
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < width_out; ++j) {
        double d = dh(i, j);
        if (dropout_masks) d *= (*dropout_masks)[l](i, j);
        dz(i, j) = cache.pre_activation[l](i, j) > 0.0 ? d : 0.0;
      }
    }

    // Affine: z = scaled * W + b, scaled = gamma*xhat + beta.
    const auto& bn = s.bn[l];
    Matrix scaled(batch, width_in);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < width_in; ++j)
        scaled(i, j) = bn.gamma[j] * cache.normalized[l](i, j) + bn.beta[j];

    Matrix& dw = g.weights[l];
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t k = 0; k < width_in; ++k) {
        const double sv = scaled(i, k);
        if (sv == 0.0) continue;
        for (std::size_t j = 0; j < width_out; ++j) dw(k, j) += sv * dz(i, j);
      }
    for (std::size_t j = 0; j < width_out; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < batch; ++i) sum += dz(i, j);
      g.biases[l][j] = sum;
    }

    Matrix dscaled(batch, width_in);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t k = 0; k < width_in; ++k) {
        double sum = 0.0;
        for (std::size_t j = 0; j < width_out; ++j) sum += dz(i, j) * s.weights[l](k, j);
        dscaled(i, k) = sum;
      }

    Matrix dprev(batch, width_in);
    for (std::size_t j = 0; j < width_in; ++j) {
      const double inv_sd = 1.0 / std::sqrt(cache.batch_var[l][j] + s.config.bn_eps);
      double dgamma = 0.0, dbeta = 0.0, dxhat_sum = 0.0, dxhat_dot = 0.0;
      for (std::size_t i = 0; i < batch; ++i) {
        const double xh = cache.normalized[l](i, j);
        const double ds = dscaled(i, j);
        dgamma += ds * xh;
        dbeta += ds;
        const double dxh = ds * bn.gamma[j];
        dxhat_sum += dxh;
        dxhat_dot += dxh * xh;
      }
      g.gamma[l][j] = dgamma;
      g.beta[l][j] = dbeta;
      for (std::size_t i = 0; i < batch; ++i) {
        const double xh = cache.normalized[l](i, j);
        const double dxh = dscaled(i, j) * bn.gamma[j];
        dprev(i, j) = inv_sd * (dxh - inv_b * dxhat_sum - inv_b * xh * dxhat_dot);
      }
    }
    dh = std::move(dprev);
  }
  return g;
}

// Eval-mode forward: BN from running stats, dropout off.
inline std::vector<double> mlp_forward_eval(const MlpState& s, const Matrix& x) {
  if (x.cols != static_cast<std::size_t>(s.config.input_dim))
    throw std::invalid_argument("mlp: input width mismatch");
  const std::size_t batch = x.rows;
  const std::size_t n_hidden = s.bn.size();

  Matrix h = x;
  for (std::size_t l = 0; l < n_hidden; ++l) {
    const auto& bn = s.bn[l];
    Matrix scaled(batch, h.cols);
    for (std::size_t j = 0; j < h.cols; ++j) {
      const double inv_sd = 1.0 / std::sqrt(bn.running_var[j] + s.config.bn_eps);
      for (std::size_t i = 0; i < batch; ++i)
        scaled(i, j) = bn.gamma[j] * (h(i, j) - bn.running_mean[j]) * inv_sd + bn.beta[j];
    }
    Matrix z = matmul(scaled, s.weights[l]);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < z.cols; ++j)
        z(i, j) = std::max(0.0, z(i, j) + s.biases[l][j]);
    h = std::move(z);
  }

  const Matrix& w_out = s.weights.back();
  std::vector<double> pred(batch, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    double z = s.biases.back()[0];
    for (std::size_t j = 0; j < h.cols; ++j) z += h(i, j) * w_out(j, 0);
    pred[i] = z;
  }
  return pred;
}

// Adam with bias correction; one shared step counter across all parameters.
struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<std::vector<double>> m_b, v_b, m_g, v_g, m_beta, v_beta;
  std::int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

inline AdamState adam_init(const MlpState& s) {
  AdamState a;
  for (const auto& w : s.weights) {
    a.m_w.emplace_back(w.rows, w.cols);
    a.v_w.emplace_back(w.rows, w.cols);
  }
  for (const auto& b : s.biases) {
    a.m_b.emplace_back(b.size(), 0.0);
    a.v_b.emplace_back(b.size(), 0.0);
  }
  for (const auto& bn : s.bn) {
    a.m_g.emplace_back(bn.gamma.size(), 0.0);
    a.v_g.emplace_back(bn.gamma.size(), 0.0);
    a.m_beta.emplace_back(bn.beta.size(), 0.0);
    a.v_beta.emplace_back(bn.beta.size(), 0.0);
  }
  return a;
}

namespace detail {

inline void adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                        const AdamState& a, double lr) {
  const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(a.step));
  const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(a.step));
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * g[i];
    v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + a.eps);
  }
}

}  // namespace detail

inline void adam_step(MlpState& s, const MlpGradients& g, AdamState& a) {
  ++a.step;
  const double lr = s.config.learning_rate;
  for (std::size_t l = 0; l < s.weights.size(); ++l) {
    detail::adam_update(s.weights[l].data.data(), g.weights[l].data.data(), a.m_w[l].data.data(),
                        a.v_w[l].data.data(), s.weights[l].data.size(), a, lr);
    detail::adam_update(s.biases[l].data(), g.biases[l].data(), a.m_b[l].data(), a.v_b[l].data(),
                        s.biases[l].size(), a, lr);
  }
  for (std::size_t l = 0; l < s.bn.size(); ++l) {
    detail::adam_update(s.bn[l].gamma.data(), g.gamma[l].data(), a.m_g[l].data(),
                        a.v_g[l].data(), s.bn[l].gamma.size(), a, lr);
    detail::adam_update(s.bn[l].beta.data(), g.beta[l].data(), a.m_beta[l].data(),
                        a.v_beta[l].data(), s.bn[l].beta.size(), a, lr);
  }
}

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_mse = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
  std::vector<double> train_loss;  // per epoch, mean of batch losses
  std::vector<double> val_loss;    // per epoch, eval-mode MSE
};

// Mini-batch loop with per-epoch shuffling, a trailing batch folded into its
// predecessor, running-stat momentum updates, and patience-based early
// stopping on validation MSE. Returns the state snapshotted at the best
// validation epoch. Epoch e draws every random decision (shuffle order,
// dropout masks) from a stream derived from (seed, e).
inline std::pair<MlpState, TrainReport> mlp_train(const MlpConfig& config, const Dataset& train,
                                                  const Dataset& val) {
  detail::check_mlp_config(config);
  if (train.empty()) throw std::invalid_argument("mlp: empty training set");
  if (val.empty()) throw std::invalid_argument("mlp: empty validation set");
  if (!train.normalized || !val.normalized)
    throw std::invalid_argument("mlp: training expects normalized data");

  const Matrix x_all = feature_matrix(train);
  const std::vector<double> y_all = targets(train);
  const Matrix x_val = feature_matrix(val);
  const std::vector<double> y_val = targets(val);
  const std::size_t n = train.size();
  if (n < 2) throw std::invalid_argument("mlp: training set must have >= 2 samples");

  MlpState s = mlp_init(config);
  AdamState adam = adam_init(s);
  const double keep = 1.0 - config.dropout_rate;

  MlpState best = s;
  TrainReport report;
  int since_best = 0;

  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    // Batch boundaries: full batches of batch_size, last short batch merged
    // into the previous one.
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < n; start += bs)
      batches.emplace_back(start, std::min(start + bs, n));
    if (batches.size() > 1 && batches.back().second - batches.back().first < bs) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    double epoch_loss = 0.0;
    for (const auto& [lo, hi] : batches) {
      const std::size_t b = hi - lo;
      Matrix xb(b, x_all.cols);
      std::vector<double> yb(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t src = order[lo + i];
        for (std::size_t j = 0; j < x_all.cols; ++j) xb(i, j) = x_all(src, j);
        yb[i] = y_all[src];
      }

      std::vector<Matrix> masks;
      std::vector<Matrix>* mask_ptr = nullptr;
      if (config.dropout_rate > 0.0) {
        for (int h : config.hidden) {
          Matrix mask(b, static_cast<std::size_t>(h));
          for (double& v : mask.data) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
          masks.push_back(std::move(mask));
        }
        mask_ptr = &masks;
      }

      MlpForwardCache cache;
      epoch_loss += mlp_forward_train(s, xb, yb, mask_ptr, &cache) * static_cast<double>(b);
      const MlpGradients grads = mlp_backward(s, xb, yb, mask_ptr, cache);

      for (std::size_t l = 0; l < s.bn.size(); ++l) {
        auto& bn = s.bn[l];
        for (std::size_t j = 0; j < bn.running_mean.size(); ++j) {
          bn.running_mean[j] = (1.0 - config.bn_momentum) * bn.running_mean[j] +
                               config.bn_momentum * cache.batch_mean[l][j];
          bn.running_var[j] = (1.0 - config.bn_momentum) * bn.running_var[j] +
                              config.bn_momentum * cache.batch_var[l][j];
        }
      }
      adam_step(s, grads, adam);
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(n));

    const std::vector<double> val_pred = mlp_forward_eval(s, x_val);
    double val_mse = 0.0;
    for (std::size_t i = 0; i < val_pred.size(); ++i) {
      const double r = val_pred[i] - y_val[i];
      val_mse += r * r;
    }
    val_mse /= static_cast<double>(val_pred.size());
    report.val_loss.push_back(val_mse);
    report.epochs_run = epoch + 1;

    if (val_mse < report.best_val_mse) {
      report.best_val_mse = val_mse;
      report.best_epoch = epoch;
      best = s;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      report.stopped_early = true;
      break;
    }
  }
  return {std::move(best), report};
}

inline std::vector<double> mlp_predict(const MlpState& s, const Dataset& d) {
  return mlp_forward_eval(s, feature_matrix(d));
}

}  // namespace drycurve
