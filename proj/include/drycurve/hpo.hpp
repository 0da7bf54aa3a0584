#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drycurve/crossval.hpp"
#include "drycurve/dataset.hpp"
#include "drycurve/metrics.hpp"
#include "drycurve/mlp.hpp"
#include "drycurve/parallel.hpp"
#include "drycurve/rng.hpp"

namespace drycurve {

struct SearchSpace {
  int neurons_min = 1, neurons_max = 500;
  int depth_min = 1, depth_max = 7;
  double lr_min = 1e-4, lr_max = 1e-1;
  std::vector<int> batch_choices = {2, 4, 8, 16, 32, 64};
};

inline MlpConfig sample_config(const SearchSpace& space, int depth, Rng& rng) {
  if (depth < space.depth_min || depth > space.depth_max)
    throw std::invalid_argument("sample_config: depth out of range");
  MlpConfig cfg;
  cfg.hidden.clear();
  for (int l = 0; l < depth; ++l)
    cfg.hidden.push_back(static_cast<int>(
        rng.uniform_int(static_cast<std::uint64_t>(space.neurons_min),
                        static_cast<std::uint64_t>(space.neurons_max))));
  cfg.learning_rate = rng.log_uniform(space.lr_min, space.lr_max);
  cfg.batch_size = space.batch_choices[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::uint64_t>(space.batch_choices.size() - 1)))];
  return cfg;
}

// Resource unit: inner-CV folds completed. grace_period folds are the
// minimum any trial receives; rung r costs grace_period * eta^r folds,
// capped at max_resource.
struct AshaConfig {
  int grace_period = 3;
  int reduction_factor = 3;
  int brackets = 1;
  int trials_per_depth = 500;
  int max_resource = 10;
  int cv_repeats = 1;  // training repetitions averaged into each fold score
};

enum class TrialStatus { Running, Stopped, Completed };

struct TrialResult {
  MlpConfig config;
  std::vector<double> fold_scores;
  int resource_consumed = 0;
  double running_score = std::numeric_limits<double>::infinity();
  TrialStatus status = TrialStatus::Running;
  int rung = 0;
};

// Scores folds [resource_consumed, up_to) of a fixed assignment: train on the
// other folds with an 80/20 train/val carve, MSE (normalized scale) on the
// held-out fold. Already-scored folds are never recomputed, so a trial can be
// resumed rung by rung.
inline TrialResult evaluate_trial(const MlpConfig& config, const Dataset& d,
                                  const std::vector<std::vector<std::size_t>>& folds, int up_to,
                                  const TrialResult* prev = nullptr, int cv_repeats = 1) {
  if (d.normalized) throw std::invalid_argument("evaluate_trial: expects raw data");
  if (up_to < 0 || static_cast<std::size_t>(up_to) > folds.size())
    throw std::invalid_argument("evaluate_trial: up_to out of range");
  if (cv_repeats < 1) throw std::invalid_argument("evaluate_trial: cv_repeats must be >= 1");

  TrialResult result;
  result.config = config;
  if (prev) {
    result.fold_scores = prev->fold_scores;
    result.rung = prev->rung;
    result.status = prev->status;
  }

  for (int f = static_cast<int>(result.fold_scores.size()); f < up_to; ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (static_cast<int>(j) == f) continue;
      train_idx.insert(train_idx.end(), folds[j].begin(), folds[j].end());
    }
    const Dataset train_raw = detail::subset(d, train_idx);
    const Dataset held_raw = detail::subset(d, folds[static_cast<std::size_t>(f)]);
    const NormalizationSpec norm = fit_normalizer(train_raw);
    const Dataset train_all = apply_normalizer(norm, train_raw, detail::no_warn);
    const Dataset held = apply_normalizer(norm, held_raw, detail::no_warn);

    double score_sum = 0.0;
    for (int rep = 0; rep < cv_repeats; ++rep) {
      const std::uint64_t fold_seed =
          derive_seed(config.seed, 0xCF01Dull, static_cast<std::uint64_t>(f),
                      static_cast<std::uint64_t>(rep));
      std::vector<std::size_t> order(train_all.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng carve(derive_seed(fold_seed, 0x7641ull));
      carve.shuffle(order);
      std::size_t n_val = static_cast<std::size_t>(
          std::llround(0.2 * static_cast<double>(train_all.size())));
      n_val = std::clamp<std::size_t>(n_val, 1, train_all.size() - 1);
      const std::vector<std::size_t> val_idx(order.begin(),
                                             order.begin() + static_cast<std::ptrdiff_t>(n_val));
      const std::vector<std::size_t> tr_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                                            order.end());
      MlpConfig run_cfg = config;
      run_cfg.seed = derive_seed(fold_seed, 0x5EEDull);
      auto trained = mlp_train(run_cfg, detail::subset(train_all, tr_idx),
                               detail::subset(train_all, val_idx));
      const std::vector<double> est = mlp_predict(trained.first, held);
      score_sum += compute_metrics(est, targets(held)).mse;
    }
    result.fold_scores.push_back(score_sum / static_cast<double>(cv_repeats));
  }

  result.resource_consumed = static_cast<int>(result.fold_scores.size());
  if (!result.fold_scores.empty())
    result.running_score =
        std::accumulate(result.fold_scores.begin(), result.fold_scores.end(), 0.0) /
        static_cast<double>(result.fold_scores.size());
  return result;
}

struct AshaEvent {
  enum class Kind { FoldScore, Promote, Stop, Complete };
  Kind kind;
  std::size_t trial = 0;
  int rung = 0;
  int resource = 0;
  double score = 0.0;
};

struct AshaOutcome {
  MlpConfig best_config;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t best_trial = 0;
  std::vector<TrialResult> trials;
  std::vector<AshaEvent> events;
  long long total_resource = 0;            // fold-trainings consumed
  std::vector<int> rung_resources;         // cumulative resource per rung
  std::vector<std::size_t> rung_counts;    // trials entering each rung
};

// Advances one trial to `up_to` folds. `prev` carries scored folds forward.
using TrialFn =
    std::function<TrialResult(std::size_t trial, const MlpConfig& config, const TrialResult& prev,
                              int up_to)>;

namespace detail {

inline void check_asha_config(const AshaConfig& cfg) {
  if (cfg.reduction_factor < 2)
    throw std::invalid_argument("asha: reduction factor must be >= 2");
  if (cfg.grace_period < 1) throw std::invalid_argument("asha: grace period must be >= 1");
  if (cfg.brackets != 1) throw std::invalid_argument("asha: only one bracket is supported");
  if (cfg.max_resource < 1) throw std::invalid_argument("asha: max_resource must be >= 1");
  if (cfg.trials_per_depth < 1) throw std::invalid_argument("asha: trial budget is zero");
  if (cfg.cv_repeats < 1) throw std::invalid_argument("asha: cv_repeats must be >= 1");
}

}  // namespace detail

// Successive halving over rungs: every trial in a rung is evaluated to that
// rung's resource, then the top ceil(m/eta) by (score, trial index) move up
// and the rest stop. With one worker this is exactly synchronous successive
// halving; with more, rung membership and all scores are identical because
// trials are independent and reduced in index order.
inline AshaOutcome asha_search_with(const AshaConfig& cfg, std::vector<MlpConfig> pool,
                                    const TrialFn& eval, int workers = 1) {
  detail::check_asha_config(cfg);
  if (pool.empty()) throw std::invalid_argument("asha: trial budget is zero");

  std::vector<int> rung_resources;
  long long res = cfg.grace_period;
  while (true) {
    const int capped = static_cast<int>(std::min<long long>(res, cfg.max_resource));
    rung_resources.push_back(capped);
    if (capped >= cfg.max_resource) break;
    res *= cfg.reduction_factor;
  }

  AshaOutcome out;
  out.rung_resources = rung_resources;
  out.trials.resize(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) out.trials[i].config = pool[i];

  std::vector<std::size_t> active(pool.size());
  std::iota(active.begin(), active.end(), std::size_t{0});

  // Per rung, cost <= pool*grace (count shrinks eta-fold while resource
  // grows eta-fold) plus the telescoped cap slack, so this bound is provable.
  const long long ceiling =
      static_cast<long long>(rung_resources.size()) * static_cast<long long>(pool.size()) *
          cfg.grace_period +
      cfg.max_resource;

  for (std::size_t r = 0; r < rung_resources.size(); ++r) {
    out.rung_counts.push_back(active.size());
    const int target = rung_resources[r];

    std::vector<TrialResult> advanced(active.size());
    parallel_for(active.size(), workers, [&](std::size_t slot) {
      const std::size_t t = active[slot];
      advanced[slot] = eval(t, out.trials[t].config, out.trials[t], target);
    });
    for (std::size_t slot = 0; slot < active.size(); ++slot) {
      const std::size_t t = active[slot];
      const int before = out.trials[t].resource_consumed;
      out.trials[t] = std::move(advanced[slot]);
      out.trials[t].rung = static_cast<int>(r);
      out.total_resource += out.trials[t].resource_consumed - before;
      for (int f = before; f < out.trials[t].resource_consumed; ++f)
        out.events.push_back({AshaEvent::Kind::FoldScore, t, static_cast<int>(r), f + 1,
                              out.trials[t].fold_scores[static_cast<std::size_t>(f)]});
    }
    if (out.total_resource > ceiling)
      throw std::logic_error("asha: resource budget ceiling exceeded");

    if (r + 1 == rung_resources.size()) {
      for (std::size_t t : active) {
        out.trials[t].status = TrialStatus::Completed;
        out.events.push_back({AshaEvent::Kind::Complete, t, static_cast<int>(r), target,
                              out.trials[t].running_score});
      }
      break;
    }

    std::vector<std::size_t> ranked = active;
    std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      const double sa = out.trials[a].running_score, sb = out.trials[b].running_score;
      return sa != sb ? sa < sb : a < b;
    });
    const std::size_t keep =
        (ranked.size() + static_cast<std::size_t>(cfg.reduction_factor) - 1) /
        static_cast<std::size_t>(cfg.reduction_factor);
    std::vector<std::size_t> promoted(ranked.begin(),
                                      ranked.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(promoted.begin(), promoted.end());
    for (std::size_t t : active) {
      if (std::binary_search(promoted.begin(), promoted.end(), t)) {
        out.events.push_back({AshaEvent::Kind::Promote, t, static_cast<int>(r + 1), target,
                              out.trials[t].running_score});
      } else {
        out.trials[t].status = TrialStatus::Stopped;
        out.events.push_back({AshaEvent::Kind::Stop, t, static_cast<int>(r), target,
                              out.trials[t].running_score});
      }
    }
    active = std::move(promoted);
  }

  bool found = false;
  for (std::size_t t = 0; t < out.trials.size(); ++t) {
    if (out.trials[t].status != TrialStatus::Completed) continue;
    if (!found || out.trials[t].running_score < out.best_score) {
      found = true;
      out.best_score = out.trials[t].running_score;
      out.best_trial = t;
      out.best_config = out.trials[t].config;
    }
  }
  if (!found) throw std::logic_error("asha: no trial completed");
  return out;
}

inline AshaOutcome asha_search(const SearchSpace& space, int depth, const Dataset& d,
                               const AshaConfig& cfg, std::uint64_t seed, int workers = 1) {
  detail::check_asha_config(cfg);
  if (static_cast<std::size_t>(cfg.max_resource) > d.size())
    throw std::invalid_argument("asha: max_resource exceeds dataset size");

  Rng sampler(derive_seed(seed, 0x5A3Cull));
  std::vector<MlpConfig> pool;
  pool.reserve(static_cast<std::size_t>(cfg.trials_per_depth));
  for (int t = 0; t < cfg.trials_per_depth; ++t) {
    MlpConfig c = sample_config(space, depth, sampler);
    c.seed = derive_seed(seed, 0x72141ull, static_cast<std::uint64_t>(t));
    pool.push_back(std::move(c));
  }

  Rng fold_rng(derive_seed(seed, 0xF01D5ull));
  const auto folds = kfold_split(d.size(), cfg.max_resource, fold_rng);

  const TrialFn eval = [&](std::size_t, const MlpConfig& config, const TrialResult& prev,
                           int up_to) {
    return evaluate_trial(config, d, folds, up_to, &prev, cfg.cv_repeats);
  };
  return asha_search_with(cfg, std::move(pool), eval, workers);
}

struct DepthSweepRow {
  int depth = 0;
  double best_score = 0.0;
  MlpConfig best_config;
};

inline std::vector<DepthSweepRow> depth_sweep(const SearchSpace& space, const Dataset& d,
                                              const AshaConfig& cfg, std::uint64_t seed,
                                              int workers = 1) {
  std::vector<DepthSweepRow> rows;
  for (int depth = space.depth_min; depth <= space.depth_max; ++depth) {
    AshaOutcome outcome = asha_search(space, depth, d, cfg,
                                      derive_seed(seed, 0xD3B7ull,
                                                  static_cast<std::uint64_t>(depth)),
                                      workers);
    rows.push_back({depth, outcome.best_score, std::move(outcome.best_config)});
  }
  return rows;
}

}  // namespace drycurve
