#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "drycurve/dataset.hpp"
#include "drycurve/linalg.hpp"
#include "drycurve/parallel.hpp"

namespace drycurve {

// The six semi-empirical moisture-ratio curves. All are functions of drying
// time only and sit near 1 at t = 0.
enum class CurveFamily { Lewis, Page, TwoTerm, Henderson, Logarithmic, Midilli };

using ParamVector = std::vector<double>;

inline constexpr std::size_t family_arity(CurveFamily f) {
  switch (f) {
    case CurveFamily::Lewis: return 1;       // k
    case CurveFamily::Page: return 2;        // k, n
    case CurveFamily::TwoTerm: return 4;     // a, k1, b, k2
    case CurveFamily::Henderson: return 2;   // a, k
    case CurveFamily::Logarithmic: return 3; // a, k, c
    case CurveFamily::Midilli: return 4;     // a, k, n, b
  }
  return 0;
}

inline const char* family_name(CurveFamily f) {
  switch (f) {
    case CurveFamily::Lewis: return "lewis";
    case CurveFamily::Page: return "page";
    case CurveFamily::TwoTerm: return "twoterm";
    case CurveFamily::Henderson: return "henderson";
    case CurveFamily::Logarithmic: return "logarithmic";
    case CurveFamily::Midilli: return "midilli";
  }
  return "?";
}

inline std::vector<const char*> param_names(CurveFamily f) {
  switch (f) {
    case CurveFamily::Lewis: return {"k"};
    case CurveFamily::Page: return {"k", "n"};
    case CurveFamily::TwoTerm: return {"a", "k1", "b", "k2"};
    case CurveFamily::Henderson: return {"a", "k"};
    case CurveFamily::Logarithmic: return {"a", "k", "c"};
    case CurveFamily::Midilli: return {"a", "k", "n", "b"};
  }
  return {};
}

inline CurveFamily family_from_name(const std::string& name) {
  for (CurveFamily f : {CurveFamily::Lewis, CurveFamily::Page, CurveFamily::TwoTerm,
                        CurveFamily::Henderson, CurveFamily::Logarithmic, CurveFamily::Midilli}) {
    if (name == family_name(f)) return f;
  }
  throw std::invalid_argument("unknown thin-layer family '" + name + "'");
}

// Indices of rate constants (k, k1, k2) that the fitter clamps to >= 0.
inline std::vector<std::size_t> rate_param_indices(CurveFamily f) {
  switch (f) {
    case CurveFamily::Lewis: return {0};
    case CurveFamily::Page: return {0};
    case CurveFamily::TwoTerm: return {1, 3};
    case CurveFamily::Henderson: return {1};
    case CurveFamily::Logarithmic: return {1};
    case CurveFamily::Midilli: return {1};
  }
  return {};
}

namespace detail {

inline void check_eval_args(CurveFamily f, const ParamVector& p, double t) {
  if (p.size() != family_arity(f))
    throw std::invalid_argument(std::string("thin-layer ") + family_name(f) + ": expected " +
                                std::to_string(family_arity(f)) + " parameters, got " +
                                std::to_string(p.size()));
  if (t < 0.0) throw std::invalid_argument("thin-layer evaluate: negative drying time");
}

// t^n with the t = 0 limit convention: 0^n := 0 for n > 0, t^0 := 1 otherwise.
inline double pow_tn(double t, double n) {
  if (t == 0.0) return n > 0.0 ? 0.0 : 1.0;
  return std::pow(t, n);
}

// d(t^n)/dn = t^n ln t, defined as 0 at t = 0.
inline double pow_tn_dn(double t, double n) {
  if (t == 0.0) return 0.0;
  return std::pow(t, n) * std::log(t);
}

}  // namespace detail

// Moisture ratio at drying time t.
inline double evaluate(CurveFamily f, const ParamVector& p, double t) {
  detail::check_eval_args(f, p, t);
  switch (f) {
    case CurveFamily::Lewis:
      return std::exp(-p[0] * t);
    case CurveFamily::Page:
      return std::exp(-p[0] * detail::pow_tn(t, p[1]));
    case CurveFamily::TwoTerm:
      return p[0] * std::exp(-p[1] * t) + p[2] * std::exp(-p[3] * t);
    case CurveFamily::Henderson:
      return p[0] * std::exp(-p[1] * t);
    case CurveFamily::Logarithmic:
      return p[0] * std::exp(-p[1] * t) + p[2];
    case CurveFamily::Midilli:
      return p[0] * std::exp(-p[1] * detail::pow_tn(t, p[2])) + p[3] * t;
  }
  return 0.0;
}

// Analytic partial derivatives of the curve value w.r.t. each parameter.
inline std::vector<double> jacobian_row(CurveFamily f, const ParamVector& p, double t) {
  detail::check_eval_args(f, p, t);
  switch (f) {
    case CurveFamily::Lewis: {
      const double e = std::exp(-p[0] * t);
      return {-t * e};
    }
    case CurveFamily::Page: {
      const double tn = detail::pow_tn(t, p[1]);
      const double e = std::exp(-p[0] * tn);
      return {-tn * e, -p[0] * detail::pow_tn_dn(t, p[1]) * e};
    }
    case CurveFamily::TwoTerm: {
      const double e1 = std::exp(-p[1] * t);
      const double e2 = std::exp(-p[3] * t);
      return {e1, -p[0] * t * e1, e2, -p[2] * t * e2};
    }
    case CurveFamily::Henderson: {
      const double e = std::exp(-p[1] * t);
      return {e, -p[0] * t * e};
    }
    case CurveFamily::Logarithmic: {
      const double e = std::exp(-p[1] * t);
      return {e, -p[0] * t * e, 1.0};
    }
    case CurveFamily::Midilli: {
      const double tn = detail::pow_tn(t, p[2]);
      const double e = std::exp(-p[1] * tn);
      return {e, -p[0] * tn * e, -p[0] * p[1] * detail::pow_tn_dn(t, p[2]) * e, t};
    }
  }
  return {};
}

struct FitOptions {
  int max_iterations = 500;
  double step_tol = 1e-10;          // max |step| / (|param| + 1e-12)
  double sse_tol = 1e-12;           // relative SSE decrease on an accepted step
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double lambda_max = 1e16;
  bool clamp_rates = true;          // keep k, k1, k2 >= 0
};

struct FitResult {
  CurveFamily family = CurveFamily::Lewis;
  ParamVector params;
  double sse = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool condition_flag = false;  // near-singular damped normal equations seen
};

namespace detail {

inline double curve_sse(CurveFamily f, const ParamVector& p, const std::vector<double>& times,
                        const std::vector<double>& targets) {
  double sse = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double r = targets[i] - evaluate(f, p, times[i]);
    sse += r * r;
  }
  return std::isfinite(sse) ? sse : std::numeric_limits<double>::infinity();
}

inline void clamp_params(CurveFamily f, ParamVector& p, bool clamp_rates) {
  if (!clamp_rates) return;
  for (std::size_t idx : rate_param_indices(f))
    if (p[idx] < 0.0) p[idx] = 0.0;
}

}  // namespace detail

// Levenberg-Marquardt on sum of squared residuals against [0,1]-scale targets.
// Damping follows the Marquardt schedule: scale the normal-equation diagonal by
// (1 + lambda), grow lambda on rejected steps, shrink it on accepted ones.
// Hitting max_iterations reports converged = false but still returns the best
// parameters found.
inline FitResult fit_lm(CurveFamily f, const std::vector<double>& times,
                        const std::vector<double>& targets, ParamVector init,
                        const FitOptions& opts = {}) {
  const std::size_t m = family_arity(f);
  if (times.size() != targets.size())
    throw std::invalid_argument("fit_lm: times/targets length mismatch");
  if (times.size() < m) throw std::invalid_argument("fit_lm: fewer points than parameters");
  if (init.size() != m) throw std::invalid_argument("fit_lm: init arity mismatch");

  FitResult res;
  res.family = f;
  detail::clamp_params(f, init, opts.clamp_rates);
  ParamVector p = std::move(init);
  double sse = detail::curve_sse(f, p, times, targets);
  double lambda = opts.lambda_init;

  int iter = 0;
  while (iter < opts.max_iterations) {
    ++iter;
    // Normal equations from the analytic Jacobian.
    Matrix jtj(m, m);
    std::vector<double> jtr(m, 0.0);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto row = jacobian_row(f, p, times[i]);
      const double r = targets[i] - evaluate(f, p, times[i]);
      for (std::size_t a = 0; a < m; ++a) {
        jtr[a] += row[a] * r;
        for (std::size_t b = a; b < m; ++b) jtj(a, b) += row[a] * row[b];
      }
    }
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < a; ++b) jtj(a, b) = jtj(b, a);

    Matrix damped = jtj;
    for (std::size_t a = 0; a < m; ++a)
      damped(a, a) += lambda * std::max(jtj(a, a), 1e-12);
    std::vector<double> step = jtr;
    if (!solve_inplace(damped, step)) {
      res.condition_flag = true;
      lambda *= opts.lambda_up;
      if (lambda > opts.lambda_max) break;
      continue;
    }

    ParamVector trial(m);
    for (std::size_t a = 0; a < m; ++a) trial[a] = p[a] + step[a];
    detail::clamp_params(f, trial, opts.clamp_rates);
    const double trial_sse = detail::curve_sse(f, trial, times, targets);

    if (trial_sse <= sse) {
      double step_metric = 0.0;
      for (std::size_t a = 0; a < m; ++a)
        step_metric = std::max(step_metric, std::abs(trial[a] - p[a]) / (std::abs(p[a]) + 1e-12));
      const double rel_decrease = (sse - trial_sse) / std::max(sse, 1e-300);
      p = std::move(trial);
      sse = trial_sse;
      lambda = std::max(lambda / opts.lambda_down, 1e-12);
      if (step_metric < opts.step_tol || rel_decrease < opts.sse_tol || sse == 0.0) {
        res.converged = true;
        break;
      }
    } else {
      lambda *= opts.lambda_up;
      if (lambda > opts.lambda_max) break;
    }
  }

  res.params = std::move(p);
  res.sse = sse;
  res.iterations = iter;
  return res;
}

// Deterministic multi-start table: four rate decades crossed with two
// amplitude/shape variants.
inline std::vector<ParamVector> multistart_inits(CurveFamily f) {
  static constexpr double kRates[4] = {0.001, 0.01, 0.1, 1.0};
  std::vector<ParamVector> inits;
  inits.reserve(8);
  for (double k0 : kRates) {
    switch (f) {
      case CurveFamily::Lewis:
        inits.push_back({k0});
        inits.push_back({3.0 * k0});
        break;
      case CurveFamily::Page:
        inits.push_back({k0, 1.0});
        inits.push_back({k0, 1.5});
        break;
      case CurveFamily::TwoTerm:
        inits.push_back({0.5, k0, 0.5, 10.0 * k0});
        inits.push_back({0.7, 3.0 * k0, 0.3, 0.3 * k0});
        break;
      case CurveFamily::Henderson:
        inits.push_back({1.0, k0});
        inits.push_back({0.5, 3.0 * k0});
        break;
      case CurveFamily::Logarithmic:
        inits.push_back({1.0, k0, 0.0});
        inits.push_back({0.9, k0, 0.1});
        break;
      case CurveFamily::Midilli:
        inits.push_back({1.0, k0, 1.0, 0.0});
        inits.push_back({0.9, k0, 1.5, -0.001});
        break;
    }
  }
  return inits;
}

// All multi-start fits; winner by (SSE, start index) so parallel runs agree
// with serial ones.
inline FitResult fit_multistart(CurveFamily f, const std::vector<double>& times,
                                const std::vector<double>& targets, const FitOptions& opts = {},
                                int workers = 1) {
  const auto inits = multistart_inits(f);
  std::vector<FitResult> results(inits.size());
  parallel_for(inits.size(), workers,
               [&](std::size_t i) { results[i] = fit_lm(f, times, targets, inits[i], opts); });
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i)
    if (results[i].sse < results[best].sse) best = i;
  return results[best];
}

// Per-sample estimates on the normalized [0,100] MC scale; input is the
// sample's (normalized) drying time.
inline std::vector<double> predict_dataset(const FitResult& fit, const Dataset& d,
                                           bool allow_unconverged = false) {
  if (!fit.converged && !allow_unconverged)
    throw std::invalid_argument("predict_dataset: fit did not converge");
  std::vector<double> out;
  out.reserve(d.size());
  for (const auto& s : d.samples)
    out.push_back(evaluate(fit.family, fit.params, s.features.drying_time()) * 100.0);
  return out;
}

}  // namespace drycurve
