#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "drycurve/dataset.hpp"
#include "drycurve/rng.hpp"
#include "drycurve/thinlayer.hpp"

namespace drycurve {

// Test-data generator. Each experiment draws oven settings, gets a private
// rate modifier derived from those settings, and emits an ICD sample (t = 0)
// plus an ECD sample at a random extraction time. MC targets follow the chosen
// thin-layer curve plus Gaussian noise.
struct SynthConfig {
  int n_experiments = 150;
  CurveFamily family = CurveFamily::Logarithmic;
  ParamVector params = {0.85, 0.045, 0.15};
  double noise_sigma = 2.0;      // MC points
  bool heteroscedastic = true;   // sigma scaled by clean MC / 100
  double t_min = 8.0;            // ECD extraction-time range, minutes
  double t_max = 120.0;
  double rate_spread = 0.25;     // strength of the per-experiment rate modifier
  double oven_temp_mean = 80.0;
  double oven_temp_sd = 6.0;
  double dp_mean = 250.0;
  double dp_sd = 30.0;
  double mass_mean = 1200.0;
  double mass_sd = 150.0;
  double ambient_temp = 20.0;
  int n_positions = 4;
};

inline Dataset synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.n_experiments <= 0) throw std::invalid_argument("synth_generate: non-positive sample count");
  if (cfg.params.size() != family_arity(cfg.family))
    throw std::invalid_argument("synth_generate: curve parameter arity mismatch");
  if (cfg.t_max < cfg.t_min || cfg.t_min < 0.0)
    throw std::invalid_argument("synth_generate: bad drying-time range");

  Dataset d;
  d.samples.reserve(static_cast<std::size_t>(cfg.n_experiments) * 2);
  const auto rate_indices = rate_param_indices(cfg.family);

  for (int e = 0; e < cfg.n_experiments; ++e) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));

    const double oven_temp = rng.normal(cfg.oven_temp_mean, cfg.oven_temp_sd);
    const double dp = rng.normal(cfg.dp_mean, cfg.dp_sd);
    const double mass = std::max(1.0, rng.normal(cfg.mass_mean, cfg.mass_sd));
    const double pos = static_cast<double>(rng.uniform_int(1, cfg.n_positions));

    // Drying rate responds to oven settings: hotter and windier dries faster,
    // heavier dries slower. This variance is invisible to time-only models.
    const double z_temp = (oven_temp - cfg.oven_temp_mean) / cfg.oven_temp_sd;
    const double z_dp = (dp - cfg.dp_mean) / cfg.dp_sd;
    const double z_mass = (mass - cfg.mass_mean) / cfg.mass_sd;
    const double z_pos = (pos - 0.5 * (cfg.n_positions + 1)) / std::max(1, cfg.n_positions - 1);
    const double rate =
        std::exp(cfg.rate_spread * (0.6 * z_temp + 0.3 * z_dp - 0.5 * z_mass + 0.2 * z_pos));

    ParamVector p = cfg.params;
    for (std::size_t idx : rate_indices) p[idx] *= rate;

    const double t_ecd = rng.uniform(cfg.t_min, cfg.t_max);
    const double ratio_icd = evaluate(cfg.family, p, 0.0);
    const double ratio_ecd = evaluate(cfg.family, p, t_ecd);

    const auto noisy_mc = [&](double ratio) {
      const double clean = ratio * 100.0;
      const double sigma =
          cfg.heteroscedastic ? cfg.noise_sigma * (clean / 100.0) : cfg.noise_sigma;
      return sigma == 0.0 ? clean : clean + rng.normal(0.0, sigma);
    };
    const double mc_icd = noisy_mc(ratio_icd);
    const double mc_ecd = noisy_mc(ratio_ecd);

    // Filter temperature climbs from ambient toward oven temperature as the
    // media dries; at insertion it still reads ambient.
    const auto filter_temp = [&](double ratio) {
      const double base = cfg.ambient_temp + (oven_temp - cfg.ambient_temp) * (1.0 - ratio);
      return base + rng.normal(0.0, 0.5);
    };
    const double ft_icd = filter_temp(ratio_icd);
    const double ft_ecd = filter_temp(ratio_ecd);
    const double cur_icd = oven_temp + rng.normal(0.0, 1.0);
    const double cur_ecd = oven_temp + rng.normal(0.0, 1.0);

    const std::string id = "exp" + std::to_string(e);
    Sample icd;
    icd.experiment_id = id;
    icd.features.values = {0.0, ft_icd, pos, oven_temp, dp, cur_icd, mass};
    icd.mc = mc_icd;
    icd.cls = SampleClass::ICD;
    d.samples.push_back(std::move(icd));

    Sample ecd;
    ecd.experiment_id = id;
    ecd.features.values = {t_ecd, ft_ecd, pos, oven_temp, dp, cur_ecd, mass};
    ecd.mc = mc_ecd;
    ecd.cls = SampleClass::ECD;
    d.samples.push_back(std::move(ecd));
  }
  return d;
}

}  // namespace drycurve
