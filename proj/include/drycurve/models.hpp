#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "drycurve/baselines.hpp"
#include "drycurve/crossval.hpp"
#include "drycurve/dataset.hpp"
#include "drycurve/mlp.hpp"
#include "drycurve/thinlayer.hpp"

namespace drycurve {

// Per-run knobs for the benchmark model set; the cross-validation harness
// overrides each model's seed per cell.
struct BenchmarkModelOptions {
  MlpConfig ann;
  int pls_components = 5;
  RfrParams rfr;
  FitOptions thinlayer;
};

inline std::vector<std::string> benchmark_model_names() {
  return {"lewis", "page", "twoterm", "henderson", "logarithmic", "midilli", "ann", "pls", "rfr"};
}

// Thin-layer curves consume the raw drying-time axis: when initial-condition
// rows are excluded from training, normalized time goes negative on held-out
// rows, outside the fractional-power families' domain. Targets are rescaled
// to the [0,1] ratio the curve families expect, estimates back to [0,100].
inline ModelSpec make_thinlayer_spec(CurveFamily family, const FitOptions& options) {
  ModelSpec spec;
  spec.name = family_name(family);
  spec.fit = [family, options](const Dataset& train, const Dataset*,
                               const NormalizationSpec& norm, std::uint64_t) {
    // Inverting the affine map can land a hair below zero; clamp, raw input
    // times are never negative.
    const auto raw_time = [norm](const Sample& s) {
      return std::max(0.0, norm.denormalize_feature(0, s.features.drying_time()));
    };
    std::vector<double> times, ratios;
    times.reserve(train.size());
    ratios.reserve(train.size());
    for (const auto& s : train.samples) {
      times.push_back(raw_time(s));
      ratios.push_back(s.mc / 100.0);
    }
    const FitResult fit = fit_multistart(family, times, ratios, options);
    FittedModel m;
    m.converged = fit.converged;
    m.predict = [fit, raw_time](const Dataset& d) {
      std::vector<double> out;
      out.reserve(d.size());
      for (const auto& s : d.samples)
        out.push_back(evaluate(fit.family, fit.params, raw_time(s)) * 100.0);
      return out;
    };
    return m;
  };
  return spec;
}

inline ModelSpec make_model_spec(const std::string& name, const BenchmarkModelOptions& opts) {
  const auto names = benchmark_model_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw std::invalid_argument("unknown model: " + name);

  if (name == "ann") {
    ModelSpec spec;
    spec.name = name;
    spec.needs_validation_split = true;
    MlpConfig cfg = opts.ann;
    spec.fit = [cfg](const Dataset& train, const Dataset* val, const NormalizationSpec&,
                     std::uint64_t seed) mutable {
      if (!val) throw std::invalid_argument("ann: validation split required");
      cfg.seed = seed;
      auto [state, report] = mlp_train(cfg, train, *val);
      FittedModel m;
      m.predict = [state = std::move(state)](const Dataset& d) { return mlp_predict(state, d); };
      return m;
    };
    return spec;
  }
  if (name == "pls") {
    ModelSpec spec;
    spec.name = name;
    const int components = opts.pls_components;
    spec.fit = [components](const Dataset& train, const Dataset*, const NormalizationSpec&,
                            std::uint64_t) {
      const PlsModel model = pls_fit(feature_matrix(train), targets(train), components);
      FittedModel m;
      m.predict = [model](const Dataset& d) { return pls_predict(model, feature_matrix(d)); };
      return m;
    };
    return spec;
  }
  if (name == "rfr") {
    ModelSpec spec;
    spec.name = name;
    const RfrParams params = opts.rfr;
    spec.fit = [params](const Dataset& train, const Dataset*, const NormalizationSpec&,
                        std::uint64_t seed) {
      const ForestModel model = rfr_fit(feature_matrix(train), targets(train), params, seed);
      FittedModel m;
      m.predict = [model](const Dataset& d) { return rfr_predict(model, feature_matrix(d)); };
      return m;
    };
    return spec;
  }
  return make_thinlayer_spec(family_from_name(name), opts.thinlayer);
}

}  // namespace drycurve
