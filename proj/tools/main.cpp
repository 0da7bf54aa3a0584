// Batch front end: every command reads (config JSON, flags, env), echoes the
// effective configuration into the output directory, and writes CSV/JSON
// artifacts. Identical inputs produce byte-identical outputs.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "drycurve/baselines.hpp"
#include "drycurve/crossval.hpp"
#include "drycurve/dataset.hpp"
#include "drycurve/hpo.hpp"
#include "drycurve/metrics.hpp"
#include "drycurve/mlp.hpp"
#include "drycurve/models.hpp"
#include "drycurve/serialize.hpp"
#include "drycurve/synth.hpp"
#include "drycurve/thinlayer.hpp"
#include "drycurve/version.hpp"

namespace fs = std::filesystem;
using drycurve::json;

namespace {

constexpr int kExitUser = 2;
constexpr int kExitRuntime = 3;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed_flag = 0;
  bool seed_flag_set = false;
  int workers = 0;  // 0 = available parallelism
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed_flag, "master seed")->each([&](const std::string&) {
    o.seed_flag_set = true;
  });
  cmd->add_option("--workers", o.workers, "worker thread count (0 = all cores)");
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j = json::parse(drycurve::read_text_file(path));
  if (!j.is_object()) throw std::invalid_argument("config root must be a JSON object");
  return j;
}

// Seed precedence: --seed flag, then config "seed", then DRYCURVE_SEED, then 0.
std::uint64_t effective_seed(const CommonOpts& o, const json& config) {
  if (o.seed_flag_set) return o.seed_flag;
  if (config.contains("seed")) return config.at("seed").get<std::uint64_t>();
  if (const char* env = std::getenv("DRYCURVE_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw std::invalid_argument(std::string("DRYCURVE_SEED is not an integer: ") + env);
    return static_cast<std::uint64_t>(v);
  }
  return 0;
}

int effective_workers(const CommonOpts& o, const json& config) {
  int w = o.workers;
  if (w == 0 && config.contains("workers")) w = config.at("workers").get<int>();
  if (w == 0) w = static_cast<int>(std::thread::hardware_concurrency());
  return w > 0 ? w : 1;
}

void write_echo(const std::string& out_dir, const std::string& command, json effective) {
  effective["command"] = command;
  effective["version"] = drycurve::kVersion;
  fs::create_directories(out_dir);
  drycurve::write_file((fs::path(out_dir) / "run_config.json").string(),
                       effective.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Config fragments

drycurve::SynthConfig synth_config_from_json(const json& j) {
  drycurve::SynthConfig c;
  if (j.contains("n_experiments")) c.n_experiments = j.at("n_experiments").get<int>();
  if (j.contains("family")) c.family = drycurve::family_from_name(j.at("family").get<std::string>());
  if (j.contains("params")) c.params = j.at("params").get<std::vector<double>>();
  if (j.contains("noise_sigma")) c.noise_sigma = j.at("noise_sigma").get<double>();
  if (j.contains("heteroscedastic")) c.heteroscedastic = j.at("heteroscedastic").get<bool>();
  if (j.contains("t_min")) c.t_min = j.at("t_min").get<double>();
  if (j.contains("t_max")) c.t_max = j.at("t_max").get<double>();
  if (j.contains("rate_spread")) c.rate_spread = j.at("rate_spread").get<double>();
  if (j.contains("oven_temp_mean")) c.oven_temp_mean = j.at("oven_temp_mean").get<double>();
  if (j.contains("oven_temp_sd")) c.oven_temp_sd = j.at("oven_temp_sd").get<double>();
  if (j.contains("dp_mean")) c.dp_mean = j.at("dp_mean").get<double>();
  if (j.contains("dp_sd")) c.dp_sd = j.at("dp_sd").get<double>();
  if (j.contains("mass_mean")) c.mass_mean = j.at("mass_mean").get<double>();
  if (j.contains("mass_sd")) c.mass_sd = j.at("mass_sd").get<double>();
  if (j.contains("ambient_temp")) c.ambient_temp = j.at("ambient_temp").get<double>();
  if (j.contains("n_positions")) c.n_positions = j.at("n_positions").get<int>();
  return c;
}

json synth_config_to_json(const drycurve::SynthConfig& c) {
  json j;
  j["n_experiments"] = c.n_experiments;
  j["family"] = drycurve::family_name(c.family);
  j["params"] = c.params;
  j["noise_sigma"] = c.noise_sigma;
  j["heteroscedastic"] = c.heteroscedastic;
  j["t_min"] = c.t_min;
  j["t_max"] = c.t_max;
  j["rate_spread"] = c.rate_spread;
  j["oven_temp_mean"] = c.oven_temp_mean;
  j["oven_temp_sd"] = c.oven_temp_sd;
  j["dp_mean"] = c.dp_mean;
  j["dp_sd"] = c.dp_sd;
  j["mass_mean"] = c.mass_mean;
  j["mass_sd"] = c.mass_sd;
  j["ambient_temp"] = c.ambient_temp;
  j["n_positions"] = c.n_positions;
  return j;
}

drycurve::FitOptions fit_options_from_json(const json& j) {
  drycurve::FitOptions o;
  if (j.contains("max_iterations")) o.max_iterations = j.at("max_iterations").get<int>();
  if (j.contains("step_tol")) o.step_tol = j.at("step_tol").get<double>();
  if (j.contains("sse_tol")) o.sse_tol = j.at("sse_tol").get<double>();
  if (j.contains("lambda_init")) o.lambda_init = j.at("lambda_init").get<double>();
  if (j.contains("clamp_rates")) o.clamp_rates = j.at("clamp_rates").get<bool>();
  return o;
}

json fit_options_to_json(const drycurve::FitOptions& o) {
  return json{{"max_iterations", o.max_iterations},
              {"step_tol", o.step_tol},
              {"sse_tol", o.sse_tol},
              {"lambda_init", o.lambda_init},
              {"clamp_rates", o.clamp_rates}};
}

drycurve::RfrParams rfr_params_from_json(const json& j) {
  drycurve::RfrParams p;
  if (j.contains("n_trees")) p.n_trees = j.at("n_trees").get<int>();
  if (j.contains("max_depth")) p.max_depth = j.at("max_depth").get<int>();
  if (j.contains("min_samples_leaf")) p.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  if (j.contains("mtry")) p.mtry = j.at("mtry").get<int>();
  return p;
}

json rfr_params_to_json(const drycurve::RfrParams& p) {
  return json{{"n_trees", p.n_trees},
              {"max_depth", p.max_depth},
              {"min_samples_leaf", p.min_samples_leaf},
              {"mtry", p.mtry}};
}

drycurve::CvConfig cv_config_from_json(const json& j) {
  drycurve::CvConfig c;
  if (j.contains("k")) c.k = j.at("k").get<int>();
  if (j.contains("repeats")) c.repeats = j.at("repeats").get<int>();
  return c;
}

drycurve::AshaConfig asha_config_from_json(const json& j) {
  drycurve::AshaConfig c;
  if (j.contains("grace_period")) c.grace_period = j.at("grace_period").get<int>();
  if (j.contains("reduction_factor")) c.reduction_factor = j.at("reduction_factor").get<int>();
  if (j.contains("brackets")) c.brackets = j.at("brackets").get<int>();
  if (j.contains("trials_per_depth")) c.trials_per_depth = j.at("trials_per_depth").get<int>();
  if (j.contains("max_resource")) c.max_resource = j.at("max_resource").get<int>();
  if (j.contains("cv_repeats")) c.cv_repeats = j.at("cv_repeats").get<int>();
  return c;
}

json asha_config_to_json(const drycurve::AshaConfig& c) {
  return json{{"grace_period", c.grace_period},   {"reduction_factor", c.reduction_factor},
              {"brackets", c.brackets},           {"trials_per_depth", c.trials_per_depth},
              {"max_resource", c.max_resource},   {"cv_repeats", c.cv_repeats}};
}

drycurve::SearchSpace space_from_json(const json& j) {
  drycurve::SearchSpace s;
  if (j.contains("neurons_min")) s.neurons_min = j.at("neurons_min").get<int>();
  if (j.contains("neurons_max")) s.neurons_max = j.at("neurons_max").get<int>();
  if (j.contains("depth_min")) s.depth_min = j.at("depth_min").get<int>();
  if (j.contains("depth_max")) s.depth_max = j.at("depth_max").get<int>();
  if (j.contains("lr_min")) s.lr_min = j.at("lr_min").get<double>();
  if (j.contains("lr_max")) s.lr_max = j.at("lr_max").get<double>();
  if (j.contains("batch_choices")) s.batch_choices = j.at("batch_choices").get<std::vector<int>>();
  return s;
}

json space_to_json(const drycurve::SearchSpace& s) {
  return json{{"neurons_min", s.neurons_min}, {"neurons_max", s.neurons_max},
              {"depth_min", s.depth_min},     {"depth_max", s.depth_max},
              {"lr_min", s.lr_min},           {"lr_max", s.lr_max},
              {"batch_choices", s.batch_choices}};
}

drycurve::MlpConfig ann_config(const json& config, std::uint64_t seed) {
  drycurve::MlpConfig c = config.contains("ann")
                              ? drycurve::mlp_config_from_json(config.at("ann"))
                              : drycurve::MlpConfig{};
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_validate(const std::string& input, const CommonOpts& opts) {
  const drycurve::Dataset d = drycurve::load_csv(input);
  std::size_t icd = 0, ecd = 0;
  for (const auto& s : d.samples) (s.cls == drycurve::SampleClass::ICD ? icd : ecd)++;
  std::cout << d.size() << " samples, " << icd << " ICD, " << ecd << " ECD\n";

  json report;
  report["samples"] = d.size();
  report["icd"] = icd;
  report["ecd"] = ecd;
  if (!d.empty()) {
    json ranges = json::object();
    for (std::size_t j = 0; j < drycurve::kFeatureCount; ++j) {
      double lo = d.samples[0].features[j], hi = lo;
      for (const auto& s : d.samples) {
        lo = std::min(lo, s.features[j]);
        hi = std::max(hi, s.features[j]);
      }
      ranges[drycurve::kFeatureNames[j]] = json::array({lo, hi});
      std::cout << drycurve::kFeatureNames[j] << ": " << lo << " .. " << hi << "\n";
    }
    double mc_lo = d.samples[0].mc, mc_hi = mc_lo;
    for (const auto& s : d.samples) {
      mc_lo = std::min(mc_lo, s.mc);
      mc_hi = std::max(mc_hi, s.mc);
    }
    ranges["mc"] = json::array({mc_lo, mc_hi});
    std::cout << "mc: " << mc_lo << " .. " << mc_hi << "\n";
    report["ranges"] = std::move(ranges);
  }
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    drycurve::write_file((fs::path(opts.out_dir) / "validation.json").string(),
                         report.dump(2) + "\n");
  }
  return 0;
}

int cmd_synth(const CommonOpts& opts) {
  const json config = load_config(opts.config_path);
  const std::uint64_t seed = effective_seed(opts, config);
  const drycurve::SynthConfig sc =
      synth_config_from_json(config.contains("synth") ? config.at("synth") : json::object());

  const drycurve::Dataset d = drycurve::synth_generate(sc, seed);
  json echo;
  echo["seed"] = seed;
  echo["synth"] = synth_config_to_json(sc);
  write_echo(opts.out_dir, "synth", std::move(echo));
  drycurve::save_csv(d, (fs::path(opts.out_dir) / "synthetic.csv").string());
  std::cout << "wrote " << d.size() << " samples\n";
  return 0;
}

int cmd_fit_thinlayer(const std::string& input, const std::string& family_flag,
                      const CommonOpts& opts) {
  const json config = load_config(opts.config_path);
  const int workers = effective_workers(opts, config);
  const drycurve::FitOptions fit_opts = fit_options_from_json(
      config.contains("thinlayer") ? config.at("thinlayer") : json::object());

  std::vector<drycurve::CurveFamily> families;
  std::string family_name_cfg = family_flag;
  if (family_name_cfg.empty() && config.contains("family"))
    family_name_cfg = config.at("family").get<std::string>();
  if (!family_name_cfg.empty() && family_name_cfg != "all") {
    families.push_back(drycurve::family_from_name(family_name_cfg));
  } else {
    for (const auto& name : {"lewis", "page", "twoterm", "henderson", "logarithmic", "midilli"})
      families.push_back(drycurve::family_from_name(name));
  }

  const drycurve::Dataset d = drycurve::load_csv(input);
  if (d.empty()) throw std::invalid_argument("input has no samples");
  std::vector<double> times, ratios;
  for (const auto& s : d.samples) {
    times.push_back(s.features.drying_time());
    ratios.push_back(s.mc / 100.0);
  }

  json echo;
  echo["input"] = input;
  echo["families"] = json::array();
  for (auto f : families) echo["families"].push_back(drycurve::family_name(f));
  echo["thinlayer"] = fit_options_to_json(fit_opts);
  echo["workers"] = workers;
  write_echo(opts.out_dir, "fit-thinlayer", std::move(echo));

  json all = json::array();
  for (auto f : families) {
    const drycurve::FitResult fit = drycurve::fit_multistart(f, times, ratios, fit_opts, workers);
    const json fj = drycurve::fit_result_to_json(fit);
    drycurve::write_file(
        (fs::path(opts.out_dir) / ("fit_" + std::string(drycurve::family_name(f)) + ".json"))
            .string(),
        fj.dump(2) + "\n");
    all.push_back(fj);
    std::cout << drycurve::family_name(f) << ": sse=" << fit.sse
              << (fit.converged ? "" : " (not converged)") << "\n";
  }
  drycurve::write_file((fs::path(opts.out_dir) / "fits.json").string(), all.dump(2) + "\n");
  return 0;
}

int cmd_train_ann(const std::string& input, const CommonOpts& opts) {
  const json config = load_config(opts.config_path);
  const std::uint64_t seed = effective_seed(opts, config);
  const drycurve::MlpConfig mlp_cfg = ann_config(config, seed);
  const double val_fraction =
      config.contains("val_fraction") ? config.at("val_fraction").get<double>() : 0.2;
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("val_fraction must be in (0, 1)");

  const drycurve::Dataset d = drycurve::load_csv(input);
  if (d.size() < 2) throw std::invalid_argument("need at least 2 samples");

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  drycurve::Rng carve(drycurve::derive_seed(seed, 0x7641ull));
  carve.shuffle(order);
  std::size_t n_val =
      static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(d.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, d.size() - 1);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  const drycurve::Dataset train_raw = drycurve::detail::subset(d, tr_idx);
  const drycurve::Dataset val_raw = drycurve::detail::subset(d, val_idx);
  const drycurve::NormalizationSpec norm = drycurve::fit_normalizer(train_raw);
  const drycurve::Dataset train = drycurve::apply_normalizer(norm, train_raw);
  const drycurve::Dataset val = drycurve::apply_normalizer(norm, val_raw);

  json echo;
  echo["input"] = input;
  echo["seed"] = seed;
  echo["val_fraction"] = val_fraction;
  echo["ann"] = drycurve::mlp_config_to_json(mlp_cfg);
  write_echo(opts.out_dir, "train-ann", std::move(echo));

  const auto [state, report] = drycurve::mlp_train(mlp_cfg, train, val);

  const auto [manifest, blob] = drycurve::mlp_state_to_blob(state);
  drycurve::write_file((fs::path(opts.out_dir) / "model_manifest.json").string(),
                       manifest.dump(2) + "\n");
  drycurve::write_file((fs::path(opts.out_dir) / "model_params.bin").string(), blob);
  drycurve::write_file((fs::path(opts.out_dir) / "normalizer.json").string(),
                       drycurve::normalizer_to_json(norm).dump(2) + "\n");

  const std::vector<double> val_est = drycurve::mlp_predict(state, val);
  json rj;
  rj["epochs_run"] = report.epochs_run;
  rj["best_epoch"] = report.best_epoch;
  rj["best_val_mse"] = report.best_val_mse;
  rj["stopped_early"] = report.stopped_early;
  rj["val_metrics"] = drycurve::metrics_to_json(
      drycurve::compute_metrics(val_est, drycurve::targets(val)));
  drycurve::write_file((fs::path(opts.out_dir) / "train_report.json").string(),
                       rj.dump(2) + "\n");
  std::cout << "best_val_mse=" << report.best_val_mse << " epochs=" << report.epochs_run << "\n";
  return 0;
}

int cmd_train_baseline(const std::string& input, const std::string& model,
                       const CommonOpts& opts) {
  if (model != "pls" && model != "rfr")
    throw std::invalid_argument("unknown baseline model: " + model);
  const json config = load_config(opts.config_path);
  const std::uint64_t seed = effective_seed(opts, config);
  const int workers = effective_workers(opts, config);

  const drycurve::Dataset d = drycurve::load_csv(input);
  if (d.empty()) throw std::invalid_argument("input has no samples");
  const drycurve::NormalizationSpec norm = drycurve::fit_normalizer(d);
  const drycurve::Dataset nd = drycurve::apply_normalizer(norm, d);
  const drycurve::Matrix x = drycurve::feature_matrix(nd);
  const std::vector<double> y = drycurve::targets(nd);

  json echo;
  echo["input"] = input;
  echo["seed"] = seed;
  echo["model"] = model;

  std::vector<double> est;
  json model_json;
  if (model == "pls") {
    const int comps =
        config.contains("pls_components") ? config.at("pls_components").get<int>() : 5;
    echo["pls_components"] = comps;
    write_echo(opts.out_dir, "train-baseline", std::move(echo));
    const drycurve::PlsModel m = drycurve::pls_fit(x, y, comps);
    model_json = drycurve::pls_to_json(m);
    est = drycurve::pls_predict(m, x);
  } else {
    const drycurve::RfrParams params =
        rfr_params_from_json(config.contains("rfr") ? config.at("rfr") : json::object());
    echo["rfr"] = rfr_params_to_json(params);
    write_echo(opts.out_dir, "train-baseline", std::move(echo));
    const drycurve::ForestModel m = drycurve::rfr_fit(x, y, params, seed, workers);
    model_json = drycurve::forest_to_json(m);
    est = drycurve::rfr_predict(m, x);
  }

  drycurve::write_file((fs::path(opts.out_dir) / ("model_" + model + ".json")).string(),
                       model_json.dump(2) + "\n");
  drycurve::write_file((fs::path(opts.out_dir) / "normalizer.json").string(),
                       drycurve::normalizer_to_json(norm).dump(2) + "\n");
  json rj;
  rj["train_metrics"] = drycurve::metrics_to_json(drycurve::compute_metrics(est, y));
  drycurve::write_file((fs::path(opts.out_dir) / "train_report.json").string(),
                       rj.dump(2) + "\n");
  std::cout << model << " trained on " << d.size() << " samples\n";
  return 0;
}

int cmd_benchmark(const std::string& input, const std::string& models_flag,
                  const std::string& regimes_flag, const CommonOpts& opts) {
  const json config = load_config(opts.config_path);
  const std::uint64_t seed = effective_seed(opts, config);
  const int workers = effective_workers(opts, config);

  std::vector<std::string> models;
  if (!models_flag.empty()) {
    std::string item;
    for (char ch : models_flag + ",") {
      if (ch == ',') {
        if (!item.empty()) models.push_back(item);
        item.clear();
      } else {
        item.push_back(ch);
      }
    }
  } else if (config.contains("models")) {
    models = config.at("models").get<std::vector<std::string>>();
  } else {
    models = drycurve::benchmark_model_names();
  }

  std::vector<drycurve::Regime> regimes;
  if (!regimes_flag.empty()) {
    std::string item;
    for (char ch : regimes_flag + ",") {
      if (ch == ',') {
        if (!item.empty()) regimes.push_back(drycurve::regime_from_name(item));
        item.clear();
      } else {
        item.push_back(ch);
      }
    }
  } else if (config.contains("regimes")) {
    for (const auto& r : config.at("regimes"))
      regimes.push_back(drycurve::regime_from_name(r.get<std::string>()));
  } else {
    regimes = {drycurve::Regime::WIC, drycurve::Regime::NIC};
  }

  drycurve::BenchmarkModelOptions model_opts;
  model_opts.ann = ann_config(config, seed);
  if (config.contains("pls_components"))
    model_opts.pls_components = config.at("pls_components").get<int>();
  if (config.contains("rfr")) model_opts.rfr = rfr_params_from_json(config.at("rfr"));
  if (config.contains("thinlayer"))
    model_opts.thinlayer = fit_options_from_json(config.at("thinlayer"));

  // Resolve every model spec up front so an unknown name fails before any
  // expensive work or partial outputs.
  std::vector<drycurve::ModelSpec> specs;
  for (const auto& name : models) specs.push_back(drycurve::make_model_spec(name, model_opts));

  drycurve::CvConfig cv =
      cv_config_from_json(config.contains("cv") ? config.at("cv") : json::object());
  cv.seed = seed;
  const double hw_time = config.contains("rolling_time_halfwidth")
                             ? config.at("rolling_time_halfwidth").get<double>()
                             : 8.0;
  const double hw_est = config.contains("rolling_estimate_halfwidth")
                            ? config.at("rolling_estimate_halfwidth").get<double>()
                            : 2.5;

  const drycurve::Dataset d = drycurve::load_csv(input);

  json echo;
  echo["input"] = input;
  echo["seed"] = seed;
  echo["workers"] = workers;
  echo["models"] = models;
  echo["regimes"] = json::array();
  for (auto r : regimes) echo["regimes"].push_back(drycurve::regime_name(r));
  echo["cv"] = json{{"k", cv.k}, {"repeats", cv.repeats}};
  echo["ann"] = drycurve::mlp_config_to_json(model_opts.ann);
  echo["pls_components"] = model_opts.pls_components;
  echo["rfr"] = rfr_params_to_json(model_opts.rfr);
  echo["thinlayer"] = fit_options_to_json(model_opts.thinlayer);
  echo["rolling_time_halfwidth"] = hw_time;
  echo["rolling_estimate_halfwidth"] = hw_est;
  write_echo(opts.out_dir, "benchmark", std::move(echo));

  std::vector<drycurve::CvReport> reports;
  for (auto regime : regimes) {
    for (const auto& spec : specs) {
      drycurve::CvConfig cell_cv = cv;
      cell_cv.regime = regime;
      drycurve::CvReport report = drycurve::repeated_cv(spec, d, cell_cv, workers);

      const std::string tag = report.model + "_" + drycurve::regime_name(regime);
      drycurve::write_file((fs::path(opts.out_dir) / ("report_" + tag + ".json")).string(),
                           drycurve::cv_report_to_json(report).dump(2) + "\n");

      std::vector<double> est, meas, time_axis;
      for (const auto& cell : report.cells) {
        est.insert(est.end(), cell.estimates.begin(), cell.estimates.end());
        meas.insert(meas.end(), cell.measured.begin(), cell.measured.end());
        time_axis.insert(time_axis.end(), cell.drying_time.begin(), cell.drying_time.end());
      }
      drycurve::write_file(
          (fs::path(opts.out_dir) / ("rolling_time_" + tag + ".csv")).string(),
          drycurve::rolling_csv(drycurve::rolling_mae(est, meas, time_axis, hw_time,
                                                      drycurve::RollingAxis::DryingTime)));
      drycurve::write_file(
          (fs::path(opts.out_dir) / ("rolling_estimate_" + tag + ".csv")).string(),
          drycurve::rolling_csv(drycurve::rolling_mae(est, meas, est, hw_est,
                                                      drycurve::RollingAxis::Estimate)));

      std::cout << tag << ": mae=" << report.overall_agg.mean.mae
                << " ecd_mae=" << report.ecd_agg.mean.mae
                << (report.unconverged_cells > 0 ? " (unconverged cells)" : "") << "\n";
      reports.push_back(std::move(report));
    }
  }
  drycurve::write_file((fs::path(opts.out_dir) / "benchmark.csv").string(),
                       drycurve::benchmark_csv(reports));
  return 0;
}

int cmd_hpo(const std::string& input, const CommonOpts& opts) {
  const json config = load_config(opts.config_path);
  const std::uint64_t seed = effective_seed(opts, config);
  const int workers = effective_workers(opts, config);
  const drycurve::AshaConfig asha =
      asha_config_from_json(config.contains("asha") ? config.at("asha") : json::object());
  const drycurve::SearchSpace space =
      space_from_json(config.contains("space") ? config.at("space") : json::object());

  const drycurve::Dataset d = drycurve::load_csv(input);

  json echo;
  echo["input"] = input;
  echo["seed"] = seed;
  echo["workers"] = workers;
  echo["asha"] = asha_config_to_json(asha);
  echo["space"] = space_to_json(space);
  write_echo(opts.out_dir, "hpo", std::move(echo));

  std::string depth_csv = "depth,score\n";
  double best_score = std::numeric_limits<double>::infinity();
  json best_config;
  int best_depth = 0;
  for (int depth = space.depth_min; depth <= space.depth_max; ++depth) {
    const drycurve::AshaOutcome outcome = drycurve::asha_search(
        space, depth, d, asha,
        drycurve::derive_seed(seed, 0xD3B7ull, static_cast<std::uint64_t>(depth)), workers);
    drycurve::write_file(
        (fs::path(opts.out_dir) / ("transcript_depth" + std::to_string(depth) + ".jsonl"))
            .string(),
        drycurve::asha_events_jsonl(outcome));
    depth_csv += std::to_string(depth);
    depth_csv.push_back(',');
    drycurve::detail::append_double(depth_csv, outcome.best_score);
    depth_csv.push_back('\n');
    std::cout << "depth " << depth << ": best score " << outcome.best_score << "\n";
    if (outcome.best_score < best_score) {
      best_score = outcome.best_score;
      best_config = drycurve::mlp_config_to_json(outcome.best_config);
      best_depth = depth;
    }
  }
  drycurve::write_file((fs::path(opts.out_dir) / "depth_scores.csv").string(), depth_csv);
  best_config["depth"] = best_depth;
  best_config["score"] = best_score;
  drycurve::write_file((fs::path(opts.out_dir) / "best_config.json").string(),
                       best_config.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moisture-content estimation toolkit"};
  app.set_version_flag("--version", drycurve::kVersion);
  app.require_subcommand(1);

  CommonOpts opts;
  std::string input, family, model, models_flag, regimes_flag;

  CLI::App* validate = app.add_subcommand("validate", "check a dataset file against the schema");
  validate->add_option("input", input, "CSV dataset")->required();
  opts.out_dir.clear();  // validate writes files only when --out is given
  add_common(validate, opts);

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, opts);

  CLI::App* fit = app.add_subcommand("fit-thinlayer", "fit drying-curve families");
  fit->add_option("input", input, "CSV dataset")->required();
  fit->add_option("--family", family, "curve family (default: all)");
  add_common(fit, opts);

  CLI::App* train_ann = app.add_subcommand("train-ann", "train the MLP regressor");
  train_ann->add_option("input", input, "CSV dataset")->required();
  add_common(train_ann, opts);

  CLI::App* train_baseline = app.add_subcommand("train-baseline", "train PLS or RFR");
  train_baseline->add_option("input", input, "CSV dataset")->required();
  train_baseline->add_option("--model", model, "pls or rfr")->required();
  add_common(train_baseline, opts);

  CLI::App* benchmark = app.add_subcommand("benchmark", "repeated k-fold model comparison");
  benchmark->add_option("input", input, "CSV dataset")->required();
  benchmark->add_option("--models", models_flag, "comma-separated model names");
  benchmark->add_option("--regimes", regimes_flag, "comma-separated regimes (wic,nic)");
  add_common(benchmark, opts);

  CLI::App* hpo = app.add_subcommand("hpo", "hyperparameter search over depths");
  hpo->add_option("input", input, "CSV dataset")->required();
  add_common(hpo, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUser;
  }

  // validate defaults to stdout-only; every other command needs a directory.
  if (!validate->parsed() && opts.out_dir.empty()) opts.out_dir = "out";

  try {
    if (validate->parsed()) return cmd_validate(input, opts);
    if (synth->parsed()) return cmd_synth(opts);
    if (fit->parsed()) return cmd_fit_thinlayer(input, family, opts);
    if (train_ann->parsed()) return cmd_train_ann(input, opts);
    if (train_baseline->parsed()) return cmd_train_baseline(input, model, opts);
    if (benchmark->parsed()) return cmd_benchmark(input, models_flag, regimes_flag, opts);
    if (hpo->parsed()) return cmd_hpo(input, opts);
  } catch (const drycurve::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const drycurve::CvError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
