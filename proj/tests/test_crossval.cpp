#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <set>
#include <vector>

#include "drycurve/crossval.hpp"
#include "drycurve/dataset.hpp"
#include "drycurve/models.hpp"
#include "drycurve/rng.hpp"

using namespace drycurve;

namespace {

Dataset mixed_dataset(std::size_t n, std::size_t n_icd, std::uint64_t seed) {
  Dataset d;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    const bool icd = i < n_icd;
    s.features.values = {icd ? 0.0 : rng.uniform(5.0, 60.0),
                         rng.uniform(40.0, 60.0),
                         static_cast<double>(1 + (i % 4)),
                         rng.uniform(70.0, 90.0),
                         rng.uniform(200.0, 300.0),
                         rng.uniform(60.0, 100.0),
                         rng.uniform(1000.0, 1400.0)};
    s.mc = icd ? rng.uniform(90.0, 100.0) : rng.uniform(10.0, 80.0);
    s.cls = icd ? SampleClass::ICD : SampleClass::ECD;
    d.samples.push_back(std::move(s));
  }
  return d;
}

ModelSpec mean_spec() {
  ModelSpec s;
  s.name = "mean";
  s.needs_validation_split = false;
  s.fit = [](const Dataset& train, const Dataset*, const NormalizationSpec&, std::uint64_t) {
    double mean = 0.0;
    for (const auto& smp : train.samples) mean += smp.mc;
    mean /= static_cast<double>(train.size());
    FittedModel f;
    f.converged = true;
    f.predict = [mean](const Dataset& d) { return std::vector<double>(d.size(), mean); };
    return f;
  };
  return s;
}

// Ignores training entirely; echoes each sample's (normalized) drying time.
// Any train-fold leakage into the normalizer would move these estimates.
ModelSpec time_echo_spec() {
  ModelSpec s;
  s.name = "time-echo";
  s.needs_validation_split = false;
  s.fit = [](const Dataset&, const Dataset*, const NormalizationSpec&, std::uint64_t) {
    FittedModel f;
    f.converged = true;
    f.predict = [](const Dataset& d) {
      std::vector<double> out;
      for (const auto& smp : d.samples) out.push_back(smp.features.drying_time());
      return out;
    };
    return f;
  };
  return s;
}

// Bitwise equality: single-sample ECD folds carry the -inf sentinel, whose
// aggregate spread is NaN in both runs being compared.
bool bits_equal(double a, double b) {
  std::uint64_t ua, ub;
  std::memcpy(&ua, &a, sizeof a);
  std::memcpy(&ub, &b, sizeof b);
  return ua == ub;
}

bool metrics_equal(const Metrics& a, const Metrics& b) {
  return bits_equal(a.mae, b.mae) && bits_equal(a.mse, b.mse) &&
         bits_equal(a.std_abs_resid, b.std_abs_resid) && bits_equal(a.r2, b.r2);
}

}  // namespace

TEST_CASE("fold sizes are balanced") {
  Rng rng(1);
  const auto folds = kfold_split(322, 10, rng);
  REQUIRE(folds.size() == 10);
  std::vector<std::size_t> sizes;
  for (const auto& f : folds) sizes.push_back(f.size());
  CHECK(std::count(sizes.begin(), sizes.end(), 33) == 2);
  CHECK(std::count(sizes.begin(), sizes.end(), 32) == 8);
}

TEST_CASE("fold assignment partitions the index range") {
  Rng rng(2);
  const auto folds = kfold_split(47, 7, rng);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& f : folds) {
    total += f.size();
    for (std::size_t i : f) {
      CHECK(i < 47);
      CHECK(seen.insert(i).second);  // disjoint
    }
  }
  CHECK(total == 47);  // exhaustive
}

TEST_CASE("as many folds as samples gives singletons") {
  Rng rng(3);
  const auto folds = kfold_split(6, 6, rng);
  for (const auto& f : folds) CHECK(f.size() == 1);
}

TEST_CASE("fold assignment is deterministic in the rng seed") {
  Rng a(9), b(9), c(10);
  CHECK(kfold_split(30, 5, a) == kfold_split(30, 5, b));
  Rng a2(9);
  CHECK(kfold_split(30, 5, a2) != kfold_split(30, 5, c));
}

TEST_CASE("more folds than samples is an error") {
  Rng rng(4);
  CHECK_THROWS_AS(kfold_split(3, 4, rng), std::invalid_argument);
}

TEST_CASE("two-fold mean predictor matches brute-force recomputation") {
  const Dataset d = mixed_dataset(10, 2, 5);
  CvConfig cfg;
  cfg.k = 2;
  cfg.repeats = 1;
  cfg.seed = 11;
  const CvReport report = repeated_cv(mean_spec(), d, cfg);
  REQUIRE(report.cells.size() == 2);

  for (const auto& cell : report.cells) {
    // Training portion is the complement of the held-out fold.
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (std::find(cell.heldout.begin(), cell.heldout.end(), i) == cell.heldout.end())
        train_idx.push_back(i);

    Dataset train_raw;
    for (std::size_t i : train_idx) train_raw.samples.push_back(d.samples[i]);
    const NormalizationSpec norm = fit_normalizer(train_raw);

    double mean = 0.0;
    for (std::size_t i : train_idx) mean += norm.normalize_mc(d.samples[i].mc);
    mean /= static_cast<double>(train_idx.size());

    std::vector<double> want_measured;
    for (std::size_t i : cell.heldout) want_measured.push_back(norm.normalize_mc(d.samples[i].mc));

    REQUIRE(cell.estimates.size() == cell.heldout.size());
    for (std::size_t i = 0; i < cell.estimates.size(); ++i) {
      CHECK(cell.estimates[i] == Catch::Approx(mean).margin(1e-12));
      CHECK(cell.measured[i] == Catch::Approx(want_measured[i]).margin(1e-12));
    }
    const Metrics want = compute_metrics(cell.estimates, cell.measured);
    CHECK(metrics_equal(cell.overall, want));
  }
}

TEST_CASE("identical seeds give bit-identical reports") {
  const Dataset d = mixed_dataset(20, 4, 6);
  CvConfig cfg;
  cfg.k = 4;
  cfg.repeats = 2;
  cfg.seed = 77;
  const CvReport a = repeated_cv(mean_spec(), d, cfg);
  const CvReport b = repeated_cv(mean_spec(), d, cfg);
  REQUIRE(a.cells.size() == b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    CHECK(a.cells[i].heldout == b.cells[i].heldout);
    CHECK(a.cells[i].estimates == b.cells[i].estimates);
    CHECK(metrics_equal(a.cells[i].overall, b.cells[i].overall));
  }
  CHECK(metrics_equal(a.overall_agg.mean, b.overall_agg.mean));
  CHECK(metrics_equal(a.overall_agg.sd, b.overall_agg.sd));
}

TEST_CASE("worker count does not change the report") {
  const Dataset d = mixed_dataset(24, 6, 7);
  CvConfig cfg;
  cfg.k = 6;
  cfg.repeats = 2;
  cfg.seed = 13;
  const CvReport serial = repeated_cv(mean_spec(), d, cfg, 1);
  const CvReport parallel = repeated_cv(mean_spec(), d, cfg, 4);
  REQUIRE(serial.cells.size() == parallel.cells.size());
  for (std::size_t i = 0; i < serial.cells.size(); ++i) {
    CHECK(serial.cells[i].estimates == parallel.cells[i].estimates);
    CHECK(serial.cells[i].measured == parallel.cells[i].measured);
  }
  CHECK(metrics_equal(serial.overall_agg.mean, parallel.overall_agg.mean));
  CHECK(metrics_equal(serial.ecd_agg.sd, parallel.ecd_agg.sd));
}

TEST_CASE("regimes coincide on a dataset without initial-stage samples") {
  const Dataset d = mixed_dataset(18, 0, 8);
  CvConfig cfg;
  cfg.k = 3;
  cfg.repeats = 2;
  cfg.seed = 21;
  cfg.regime = Regime::WIC;
  const CvReport wic = repeated_cv(mean_spec(), d, cfg);
  cfg.regime = Regime::NIC;
  const CvReport nic = repeated_cv(mean_spec(), d, cfg);
  for (std::size_t i = 0; i < wic.cells.size(); ++i)
    CHECK(wic.cells[i].estimates == nic.cells[i].estimates);
  CHECK(metrics_equal(wic.overall_agg.mean, nic.overall_agg.mean));
}

TEST_CASE("the no-initial-curve regime drops early samples from training only") {
  const Dataset d = mixed_dataset(20, 5, 9);
  std::vector<std::size_t> train_sizes;
  ModelSpec spy;
  spy.name = "spy";
  spy.needs_validation_split = false;
  spy.fit = [&train_sizes](const Dataset& train, const Dataset*, const NormalizationSpec&, std::uint64_t) {
    train_sizes.push_back(train.size());
    for (const auto& s : train.samples) REQUIRE(s.cls == SampleClass::ECD);
    FittedModel f;
    f.converged = true;
    f.predict = [](const Dataset& dd) { return std::vector<double>(dd.size(), 0.0); };
    return f;
  };

  CvConfig cfg;
  cfg.k = 4;
  cfg.repeats = 1;
  cfg.seed = 3;
  cfg.regime = Regime::NIC;
  const CvReport report = repeated_cv(spy, d, cfg, 1);

  // Held-out folds keep their early-stage samples and still get scored.
  std::size_t icd_heldout = 0;
  for (const auto& cell : report.cells)
    for (auto cls : cell.classes)
      if (cls == SampleClass::ICD) ++icd_heldout;
  CHECK(icd_heldout == 5);

  // Each training portion lost exactly the early-stage samples outside the fold.
  REQUIRE(train_sizes.size() == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    std::size_t icd_in_fold = 0;
    for (auto cls : report.cells[c].classes)
      if (cls == SampleClass::ICD) ++icd_in_fold;
    CHECK(train_sizes[c] == 20 - report.cells[c].heldout.size() - (5 - icd_in_fold));
  }
}

TEST_CASE("a training portion with no late-stage samples is a located error") {
  // All-ICD data: under NIC every training portion empties out, so the first
  // cell already carries the located error.
  const Dataset d = mixed_dataset(4, 4, 10);
  CvConfig cfg;
  cfg.k = 4;
  cfg.repeats = 1;
  cfg.seed = 2;
  cfg.regime = Regime::NIC;
  try {
    repeated_cv(mean_spec(), d, cfg);
    FAIL("expected a located cross-validation error");
  } catch (const CvError& e) {
    CHECK(e.repeat() == 0);
    CHECK(e.fold() >= 0);
    CHECK(e.fold() < 4);
    CHECK(std::string(e.what()).find("ECD") != std::string::npos);
  }
}

TEST_CASE("curve models score early samples at their physical time") {
  // Under NIC the normalizer is fit on late-stage rows only, so an early
  // sample's normalized time is negative. The curve spec must map back to the
  // raw axis: a zero-time sample then gets the full initial ratio.
  const Dataset d = mixed_dataset(20, 5, 11);
  CvConfig cfg;
  cfg.k = 4;
  cfg.repeats = 1;
  cfg.seed = 6;
  cfg.regime = Regime::NIC;
  const CvReport report = repeated_cv(make_model_spec("lewis", {}), d, cfg, 1);

  std::size_t icd_scored = 0;
  for (const auto& cell : report.cells)
    for (std::size_t i = 0; i < cell.classes.size(); ++i)
      if (cell.classes[i] == SampleClass::ICD) {
        ++icd_scored;
        CHECK(cell.estimates[i] == Catch::Approx(100.0).margin(1e-9));
      }
  CHECK(icd_scored == 5);
}

TEST_CASE("a single repeat reports zero spread") {
  const Dataset d = mixed_dataset(15, 3, 11);
  CvConfig cfg;
  cfg.k = 3;
  cfg.repeats = 1;
  cfg.seed = 4;
  const CvReport report = repeated_cv(mean_spec(), d, cfg);
  CHECK(report.overall_agg.sd.mae == 0.0);
  CHECK(report.overall_agg.sd.mse == 0.0);
  CHECK(report.overall_agg.sd.std_abs_resid == 0.0);
  CHECK(report.overall_agg.sd.r2 == 0.0);
  CHECK(report.ecd_agg.sd.mae == 0.0);
}

TEST_CASE("the aggregate mean averages per-repeat fold averages") {
  const Dataset d = mixed_dataset(18, 4, 12);
  CvConfig cfg;
  cfg.k = 3;
  cfg.repeats = 2;
  cfg.seed = 6;
  const CvReport report = repeated_cv(mean_spec(), d, cfg);

  double grand = 0.0;
  for (int r = 0; r < cfg.repeats; ++r) {
    double fold_avg = 0.0;
    for (int f = 0; f < cfg.k; ++f)
      fold_avg += report.cells[static_cast<std::size_t>(r * cfg.k + f)].overall.mae;
    grand += fold_avg / cfg.k;
  }
  grand /= cfg.repeats;
  CHECK(report.overall_agg.mean.mae == Catch::Approx(grand).margin(1e-12));
}

TEST_CASE("held-out samples make no contribution to the normalizer") {
  Dataset d = mixed_dataset(9, 0, 13);
  CvConfig cfg;
  cfg.k = 3;
  cfg.repeats = 1;
  cfg.seed = 14;
  const CvReport before = repeated_cv(time_echo_spec(), d, cfg);

  // Push one sample's drying time far outside every range. Folds depend only
  // on (n, seed), so assignments are unchanged. In the cell that holds the
  // sample out, the training portion is untouched; if the normalizer saw
  // held-out values, every estimate in that cell would shift.
  const std::size_t moved = 4;
  d.samples[moved].features.values[0] = 1e6;
  const CvReport after = repeated_cv(time_echo_spec(), d, cfg);

  bool found = false;
  for (std::size_t c = 0; c < before.cells.size(); ++c) {
    REQUIRE(before.cells[c].heldout == after.cells[c].heldout);
    const auto& held = before.cells[c].heldout;
    if (std::find(held.begin(), held.end(), moved) == held.end()) continue;
    found = true;
    for (std::size_t i = 0; i < held.size(); ++i) {
      if (held[i] == moved) continue;  // its own estimate legitimately moves
      CHECK(before.cells[c].estimates[i] == after.cells[c].estimates[i]);
    }
  }
  CHECK(found);
}

TEST_CASE("a validation split is carved for models that request one") {
  const Dataset d = mixed_dataset(14, 2, 15);
  std::vector<std::size_t> train_sizes, val_sizes;
  ModelSpec spy;
  spy.name = "val-spy";
  spy.needs_validation_split = true;
  spy.fit = [&](const Dataset& train, const Dataset* val, const NormalizationSpec&, std::uint64_t) {
    REQUIRE(val != nullptr);
    train_sizes.push_back(train.size());
    val_sizes.push_back(val->size());
    FittedModel f;
    f.converged = true;
    f.predict = [](const Dataset& dd) { return std::vector<double>(dd.size(), 50.0); };
    return f;
  };

  CvConfig cfg;
  cfg.k = 2;
  cfg.repeats = 1;
  cfg.seed = 16;
  repeated_cv(spy, d, cfg, 1);

  REQUIRE(train_sizes.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    const std::size_t portion = 7;  // 14 samples, two equal folds
    CHECK(train_sizes[c] + val_sizes[c] == portion);
    const auto want_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(portion)));
    CHECK(val_sizes[c] == std::clamp<std::size_t>(want_val, 1, portion - 1));
  }
}

TEST_CASE("cross validation validates its inputs") {
  Dataset d = mixed_dataset(10, 2, 17);
  CvConfig cfg;
  cfg.k = 5;
  cfg.repeats = 1;

  Dataset normalized = d;
  normalized.normalized = true;
  CHECK_THROWS_AS(repeated_cv(mean_spec(), normalized, cfg), std::invalid_argument);

  cfg.repeats = 0;
  CHECK_THROWS_AS(repeated_cv(mean_spec(), d, cfg), std::invalid_argument);
  cfg.repeats = 1;
  cfg.k = 11;
  CHECK_THROWS_AS(repeated_cv(mean_spec(), d, cfg), std::invalid_argument);
  cfg.k = 1;
  CHECK_THROWS_AS(repeated_cv(mean_spec(), d, cfg), std::invalid_argument);
}

TEST_CASE("regime names round trip") {
  CHECK(regime_from_name(regime_name(Regime::WIC)) == Regime::WIC);
  CHECK(regime_from_name(regime_name(Regime::NIC)) == Regime::NIC);
  CHECK_THROWS_AS(regime_from_name("both"), std::invalid_argument);
}
