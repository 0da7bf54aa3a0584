#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drycurve/dataset.hpp"
#include "drycurve/metrics.hpp"
#include "drycurve/parallel.hpp"
#include "drycurve/rng.hpp"

namespace drycurve {

enum class Regime { WIC, NIC };

inline const char* regime_name(Regime r) { return r == Regime::WIC ? "wic" : "nic"; }

inline Regime regime_from_name(const std::string& name) {
  if (name == "wic") return Regime::WIC;
  if (name == "nic") return Regime::NIC;
  throw std::invalid_argument("unknown regime: " + name);
}

struct CvConfig {
  int k = 10;
  int repeats = 5;
  std::uint64_t seed = 0;
  Regime regime = Regime::WIC;
};

// Random partition of [0, n) into k folds whose sizes differ by at most one;
// the first n % k folds take the extra sample.
inline std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, int k, Rng& rng) {
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw std::invalid_argument("kfold_split: need 1 <= k <= n");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

// A fitted model only needs to score normalized datasets; `converged` lets
// curve fits carry their status into the report instead of aborting the run.
struct FittedModel {
  std::function<std::vector<double>(const Dataset&)> predict;
  bool converged = true;
};

// `fit` receives the normalized training portion, a validation split when
// the model requested one, the normalizer that produced both (so axis-based
// models can recover raw units), and a cell-specific seed.
struct ModelSpec {
  std::string name;
  bool needs_validation_split = false;
  std::function<FittedModel(const Dataset& train, const Dataset* val,
                            const NormalizationSpec& norm, std::uint64_t seed)>
      fit;
};

class CvError : public std::runtime_error {
 public:
  CvError(int repeat, int fold, const std::string& what)
      : std::runtime_error("repeat " + std::to_string(repeat) + ", fold " + std::to_string(fold) +
                           ": " + what),
        repeat_(repeat),
        fold_(fold) {}
  int repeat() const { return repeat_; }
  int fold() const { return fold_; }

 private:
  int repeat_, fold_;
};

struct CvCell {
  int repeat = 0, fold = 0;
  std::vector<std::size_t> heldout;  // original dataset indices
  std::vector<double> estimates;     // normalized scale, aligned with heldout
  std::vector<double> measured;      // normalized MC
  std::vector<double> drying_time;   // normalized axis for rolling curves
  std::vector<SampleClass> classes;
  Metrics overall, ecd;
  bool converged = true;
};

struct MetricsAgg {
  Metrics mean, sd;
};

struct CvReport {
  std::string model;
  Regime regime = Regime::WIC;
  CvConfig config;
  std::vector<CvCell> cells;  // repeat-major, fold-minor
  MetricsAgg overall_agg, ecd_agg;
  int unconverged_cells = 0;
};

namespace detail {

inline std::array<double, 4> metric_values(const Metrics& m) {
  return {m.mae, m.mse, m.std_abs_resid, m.r2};
}

inline Metrics metrics_from_values(const std::array<double, 4>& v) {
  return {v[0], v[1], v[2], v[3]};
}

// Mean of per-repeat fold averages; SD across the repeat-level averages
// (sample convention, zero for a single repeat).
inline MetricsAgg aggregate_cells(const std::vector<CvCell>& cells, int repeats, int k,
                                  bool ecd_range) {
  std::vector<std::array<double, 4>> repeat_avg(static_cast<std::size_t>(repeats),
                                                std::array<double, 4>{});
  for (const auto& cell : cells) {
    const auto v = metric_values(ecd_range ? cell.ecd : cell.overall);
    for (std::size_t i = 0; i < 4; ++i)
      repeat_avg[static_cast<std::size_t>(cell.repeat)][i] += v[i] / static_cast<double>(k);
  }
  std::array<double, 4> mean{};
  for (const auto& r : repeat_avg)
    for (std::size_t i = 0; i < 4; ++i) mean[i] += r[i] / static_cast<double>(repeats);
  std::array<double, 4> sd{};
  if (repeats > 1) {
    for (const auto& r : repeat_avg)
      for (std::size_t i = 0; i < 4; ++i) {
        const double d = r[i] - mean[i];
        sd[i] += d * d;
      }
    for (std::size_t i = 0; i < 4; ++i)
      sd[i] = std::sqrt(sd[i] / static_cast<double>(repeats - 1));
  }
  return {metrics_from_values(mean), metrics_from_values(sd)};
}

inline Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.normalized = d.normalized;
  out.samples.reserve(idx.size());
  for (std::size_t i : idx) out.samples.push_back(d.samples[i]);
  return out;
}

inline void no_warn(const std::string&) {}

}  // namespace detail

// Repeated k-fold protocol. Per repeat the data is reshuffled into k folds;
// per cell the training portion is every other fold (NIC drops ICD rows from
// the training portion only), the normalizer is fit on that portion alone,
// and the held-out fold is scored on the full and ECD-only ranges. Cells are
// independent: cell (r, f) draws from a stream derived from (seed, r, f) and
// results land in preassigned slots, so worker count never changes a report.
inline CvReport repeated_cv(const ModelSpec& spec, const Dataset& d, const CvConfig& cfg,
                            int workers = 1) {
  if (d.normalized) throw std::invalid_argument("repeated_cv: expects raw (unnormalized) data");
  if (cfg.repeats < 1) throw std::invalid_argument("repeated_cv: repeats must be >= 1");
  if (cfg.k < 2 || static_cast<std::size_t>(cfg.k) > d.size())
    throw std::invalid_argument("repeated_cv: need 2 <= k <= dataset size");

  const std::size_t n = d.size();
  std::vector<std::vector<std::vector<std::size_t>>> folds(
      static_cast<std::size_t>(cfg.repeats));
  for (int r = 0; r < cfg.repeats; ++r) {
    Rng rng(derive_seed(cfg.seed, 0x5F1E1Dull, static_cast<std::uint64_t>(r)));
    folds[static_cast<std::size_t>(r)] = kfold_split(n, cfg.k, rng);
  }

  CvReport report;
  report.model = spec.name;
  report.regime = cfg.regime;
  report.config = cfg;
  report.cells.resize(static_cast<std::size_t>(cfg.repeats) * static_cast<std::size_t>(cfg.k));

  parallel_for(report.cells.size(), workers, [&](std::size_t c) {
    const int r = static_cast<int>(c) / cfg.k;
    const int f = static_cast<int>(c) % cfg.k;
    try {
      const auto& fold_sets = folds[static_cast<std::size_t>(r)];
      std::vector<std::size_t> train_idx;
      for (int j = 0; j < cfg.k; ++j) {
        if (j == f) continue;
        for (std::size_t i : fold_sets[static_cast<std::size_t>(j)]) {
          if (cfg.regime == Regime::NIC && d.samples[i].cls == SampleClass::ICD) continue;
          train_idx.push_back(i);
        }
      }
      if (cfg.regime == Regime::NIC) {
        const bool any_ecd = std::any_of(train_idx.begin(), train_idx.end(), [&](std::size_t i) {
          return d.samples[i].cls == SampleClass::ECD;
        });
        if (!any_ecd) throw std::invalid_argument("NIC training portion has no ECD samples");
      }
      if (train_idx.size() < 2)
        throw std::invalid_argument("training portion too small");

      const Dataset train_raw = detail::subset(d, train_idx);
      const Dataset held_raw = detail::subset(d, fold_sets[static_cast<std::size_t>(f)]);
      const NormalizationSpec norm = fit_normalizer(train_raw);
      const Dataset train = apply_normalizer(norm, train_raw, detail::no_warn);
      const Dataset held = apply_normalizer(norm, held_raw, detail::no_warn);

      const std::uint64_t cell_seed =
          derive_seed(cfg.seed, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(f));

      FittedModel fitted;
      if (spec.needs_validation_split) {
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng carve(derive_seed(cell_seed, 0x7641ull));
        carve.shuffle(order);
        std::size_t n_val = static_cast<std::size_t>(
            std::llround(0.2 * static_cast<double>(train.size())));
        n_val = std::clamp<std::size_t>(n_val, 1, train.size() - 1);
        const std::vector<std::size_t> val_idx(order.begin(),
                                               order.begin() + static_cast<std::ptrdiff_t>(n_val));
        const std::vector<std::size_t> tr_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                                              order.end());
        const Dataset train80 = detail::subset(train, tr_idx);
        const Dataset val = detail::subset(train, val_idx);
        fitted = spec.fit(train80, &val, norm, derive_seed(cell_seed, 0x5EEDull));
      } else {
        fitted = spec.fit(train, nullptr, norm, derive_seed(cell_seed, 0x5EEDull));
      }

      CvCell cell;
      cell.repeat = r;
      cell.fold = f;
      cell.heldout = fold_sets[static_cast<std::size_t>(f)];
      cell.estimates = fitted.predict(held);
      cell.measured = targets(held);
      cell.converged = fitted.converged;
      for (const auto& s : held.samples) {
        cell.drying_time.push_back(s.features.drying_time());
        cell.classes.push_back(s.cls);
      }
      std::tie(cell.overall, cell.ecd) = evaluate_ranges(cell.estimates, held);
      report.cells[c] = std::move(cell);
    } catch (const CvError&) {
      throw;
    } catch (const std::exception& e) {
      throw CvError(r, f, e.what());
    }
  });

  report.overall_agg = detail::aggregate_cells(report.cells, cfg.repeats, cfg.k, false);
  report.ecd_agg = detail::aggregate_cells(report.cells, cfg.repeats, cfg.k, true);
  for (const auto& cell : report.cells)
    if (!cell.converged) ++report.unconverged_cells;
  return report;
}

}  // namespace drycurve
