#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "isap/errors.hpp"
#include "isap/metrics.hpp"
#include "isap/rng.hpp"

#include "../common/checks.hpp"

using namespace isap;
using namespace isap::metrics;
using anchors::FutureTrack;

using namespace isap::testing;

TEST_CASE("displacement metrics match the exhaustive oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 5 + rng.below(40);
    const auto set = random_anchors(rng, c);
    const auto p = random_probs(rng, c, trial % 2 == 0);
    const auto gt = random_track(rng);
    double prev = 1e300;
    for (std::size_t k = 1; k <= c; ++k) {
      const double v = min_ade_k(p, set, gt, k);
      CHECK(std::abs(v - oracle_min_ade(p, set, gt, k)) < 1e-12);
      CHECK(v <= prev);
      prev = v;
    }
    std::size_t top = 0;
    for (std::size_t i = 1; i < c; ++i)
      if (p[i] > p[top]) top = i;
    const double f = std::hypot(set.anchors[top].back()[0] - gt.back()[0], set.anchors[top].back()[1] - gt.back()[1]);
    CHECK(std::abs(fde(p, set, gt) - f) < 1e-12);
    double exhaustive = 1e300;
    for (const auto& a : set.anchors) exhaustive = std::min(exhaustive, oracle_ade(a, gt));
    CHECK(min_ade_k(p, set, gt, c) == doctest::Approx(exhaustive).epsilon(1e-14));
  }
}

TEST_CASE("displacement examples and errors") {
  Rng rng(2);
  const auto set = random_anchors(rng, 8);
  std::vector<double> p(8, 0.1);
  p[3] = 0.3;
  CHECK(min_ade_k(p, set, set.anchors[3], 1) == 0.0);
  CHECK(fde(p, set, set.anchors[3]) == 0.0);
  CHECK(min_ade_k(p, set, set.anchors[0], 2) == 0.0);  // tie among 0.1s goes to the lowest index
  CHECK(min_ade_k(p, set, set.anchors[1], 2) > 0.0);
  CHECK(min_ade_k(p, set, set.anchors[1], 3) == 0.0);
  CHECK_THROWS_AS(min_ade_k(p, set, set.anchors[0], 0), ValidationError);
  CHECK_THROWS_AS(min_ade_k(p, set, set.anchors[0], 9), ValidationError);
  CHECK(top_k(p, 3) == std::vector<std::size_t>{3, 0, 1});
}

TEST_CASE("ranking metrics match pairwise oracles") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_scored(rng, 20 + rng.below(200), trial % 3 == 0);
    CHECK(std::abs(auroc(s) - oracle_auroc(s)) < 1e-12);
    CHECK(std::abs(apr(s) - oracle_apr(s)) < 1e-12);
    // strictly increasing transform
    auto t = s;
    for (auto& x : t) x.score = std::exp(0.5 * x.score) + 3;
    CHECK(std::abs(auroc(t) - auroc(s)) < 1e-15);
  }
}

TEST_CASE("ranking examples") {
  std::vector<ScoredSample> sep{{3, 1}, {2, 1}, {1, 0}, {0, 0}};
  CHECK(auroc(sep) == 1.0);
  CHECK(apr(sep) == 1.0);
  std::vector<ScoredSample> flat{{1, 1}, {1, 0}, {1, 1}, {1, 0}};
  CHECK(auroc(flat) == 0.5);
  std::vector<ScoredSample> one{{1, 1}, {2, 1}};
  CHECK_THROWS_AS(auroc(one), ValidationError);
  CHECK_THROWS_AS(apr(one), ValidationError);
  std::vector<ScoredSample> bad{{std::nan(""), 1}, {2, 0}};
  CHECK_THROWS_AS(auroc(bad), ValidationError);
}

TEST_CASE("ECE matches the per-bin oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Confidence> c(50 + rng.below(200));
    for (auto& x : c) {
      x.confidence = trial % 4 == 0 ? double(rng.below(11)) / 10 : rng.uniform();
      x.correct = rng.uniform() < x.confidence;
    }
    const std::size_t bins = 1 + rng.below(15);
    CHECK(std::abs(ece(c, bins) - oracle_ece(c, bins)) < 1e-12);
  }
}

TEST_CASE("ECE examples") {
  std::vector<Confidence> perfect(10, {1.0, true});
  CHECK(ece(perfect) == 0.0);
  std::vector<Confidence> calibrated;
  for (int i = 0; i < 10; ++i) calibrated.push_back({0.8, i < 8});
  CHECK(std::abs(ece(calibrated)) < 1e-15);
  CHECK_THROWS_AS(ece(std::vector<Confidence>{}), ValidationError);
  CHECK_THROWS_AS(ece(perfect, 0), ValidationError);
  CHECK(ece_bin(0.0, 10) == 0);
  CHECK(ece_bin(0.1, 10) == 0);
  CHECK(ece_bin(0.1000001, 10) == 1);
  CHECK(ece_bin(1.0, 10) == 9);
}

TEST_CASE("Brier") {
  CHECK(brier(std::vector<double>{0, 1, 0}, 1) == 0.0);
  CHECK(brier(std::vector<double>{0.5, 0.5}, 0) == 0.5);
  CHECK(std::abs(brier(std::vector<double>(64, 1.0 / 64), 5) - 0.984375) < 1e-15);
  CHECK_THROWS_AS(brier(std::vector<double>{0.5, 0.5}, 2), ValidationError);
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto p = random_probs(rng, 12, false);
    const std::size_t y = rng.below(12);
    double s = 0;
    for (std::size_t i = 0; i < 12; ++i) s += (p[i] - (i == y)) * (p[i] - (i == y));
    CHECK(std::abs(brier(p, y) - s) < 1e-12);
  }
}

TEST_CASE("model-level scores") {
  SamplePrediction e;
  e.alpha = std::vector<double>(64, 1.0);
  (*e.alpha)[0] = 65;
  e.probs = std::vector<double>(64, 1.0 / 128);
  e.probs[0] = 65.0 / 128;
  e.predicted = 0;
  e.label = 0;
  const auto cs = confidence_scores(std::span(&e, 1));
  CHECK(cs.aleatoric[0].score == 65.0 / 128);
  REQUIRE(cs.epistemic.has_value());
  CHECK((*cs.epistemic)[0].score == 65.0);
  CHECK(cs.aleatoric[0].label == 1);

  SamplePrediction base;
  base.probs = {0.2, 0.8};
  base.predicted = 1;
  base.label = 0;
  const auto bs = confidence_scores(std::span(&base, 1));
  CHECK_FALSE(bs.epistemic.has_value());
  CHECK(bs.aleatoric[0].label == 0);

  std::vector<SamplePrediction> mixed(4, e);
  for (auto& m : mixed) m.alpha = std::vector<double>(64, 1.0);
  mixed[2].ood = mixed[3].ood = true;
  const auto os = ood_scores(mixed);
  CHECK(auroc(*os.epistemic) == 0.5);
  CHECK(alpha0_ratio(mixed) == 1.0);

  (*mixed[0].alpha)[0] = 8137 - 63;
  (*mixed[1].alpha)[0] = 8137 - 63;
  (*mixed[2].alpha)[0] = 69 - 63;
  (*mixed[3].alpha)[0] = 69 - 63;
  CHECK(auroc(*ood_scores(mixed).epistemic) == 1.0);
  CHECK(alpha0_ratio(mixed) == doctest::Approx(69.0 / 8137.0));

  std::vector<SamplePrediction> bad{e, base};
  CHECK_THROWS_AS(confidence_scores(bad), ValidationError);
}

TEST_CASE("report rows, ranges and CSV round trip") {
  Rng rng(6);
  const auto set = random_anchors(rng, 16);
  std::vector<SamplePrediction> id, ood;
  std::vector<FutureTrack> id_truth, ood_truth;
  for (int i = 0; i < 60; ++i) {
    SamplePrediction p;
    p.ood = i >= 40;
    p.probs = random_probs(rng, 16, false);
    p.alpha = p.probs;
    for (double& a : *p.alpha) a = 1 + a * (p.ood ? 10 : 500);
    p.concept_alpha0 = std::array<double, 3>{100, 200, 300};
    p.predicted = std::size_t(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
    p.label = rng.below(16);
    p.speed_heuristic = rng.uniform(0, 20);
    (p.ood ? ood : id).push_back(p);
    (p.ood ? ood_truth : id_truth).push_back(set.anchors[p.label]);
  }
  EvalReport r = build_report(id, ood, set, id_truth, ood_truth);
  for (const char* name : {"minADE_1", "minADE_5", "minADE_10", "minADE_15", "FDE", "accuracy",
                           "conf_aleatoric_auroc", "conf_epistemic_apr", "ece", "brier"}) {
    CAPTURE(name);
    REQUIRE(r.find(name));
    CHECK(r.find(name)->id_value.has_value());
    CHECK(r.find(name)->ood_value.has_value());
  }
  for (const auto& row : r.rows) {
    const bool bounded = row.name.find("auroc") != std::string::npos ||
                         row.name.find("apr") != std::string::npos || row.name == "ece";
    for (auto v : {row.id_value, row.ood_value})
      if (v) {
        CHECK(std::isfinite(*v));
        if (bounded) CHECK((*v >= 0 && *v <= 1));
        if (row.name.rfind("minADE", 0) == 0 || row.name == "FDE") CHECK(*v >= 0);
      }
  }
  CHECK(r.id("minADE_1") >= r.id("minADE_5"));
  CHECK(r.id("minADE_10") >= r.id("minADE_15"));
  CHECK(r.id("alpha0_ratio") < 1.0);
  CHECK(r.id("alpha0_agent") == 100.0);
  CHECK(r.find("ood_epistemic_auroc")->ood_value == std::nullopt);

  r.header = {{"experiment.name", "speed"}, {"input.dataset_hash", "00ff"}};
  std::stringstream ss;
  write_csv(r, ss);
  const std::string text = ss.str();
  const EvalReport back = read_csv(ss);
  CHECK(back.header == r.header);
  REQUIRE(back.rows.size() == r.rows.size());
  std::stringstream again;
  write_csv(back, again);
  CHECK(again.str() == text);
  CHECK(text.find("--") != std::string::npos);
  CHECK_THROWS_AS(r.id("no_such_metric"), ValidationError);
}

TEST_CASE("histogram") {
  const std::vector<double> v{-1, 0, 0.24, 0.25, 0.99, 1.0, 7};
  const auto h = histogram(v, 4, 0, 1);
  CHECK(h.counts == std::vector<std::size_t>{3, 1, 0, 3});
  CHECK(h.bin_width() == 0.25);
}
