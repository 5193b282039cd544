#pragma once

// Trajectory and uncertainty metrics.

#include <array>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "isap/anchors.hpp"

namespace isap::metrics {

// ---------------------------------------------------------------------------
// Displacement

/// Indices of the k most probable classes, ties broken by lower index.
std::vector<std::size_t> top_k(std::span<const double> probs, std::size_t k);

/// min over the top-k anchors of the mean pointwise distance to gt.
/// Throws ValidationError unless 1 <= k <= C.
double min_ade_k(std::span<const double> probs, const anchors::AnchorSet& anchors,
                 const anchors::FutureTrack& gt, std::size_t k);

/// Final-waypoint distance of the most probable anchor.
double fde(std::span<const double> probs, const anchors::AnchorSet& anchors,
           const anchors::FutureTrack& gt);

// ---------------------------------------------------------------------------
// Ranking

struct ScoredSample {
  double score = 0;
  int label = 0;  // 1 = positive (ID / correct)
};

/// Mann-Whitney statistic with ties counted half. Throws ValidationError on
/// single-class input or non-finite scores.
double auroc(std::span<const ScoredSample> samples);

/// Average precision: sum over distinct thresholds of (R_n - R_{n-1}) P_n,
/// tied scores entering together.
double apr(std::span<const ScoredSample> samples);

// ---------------------------------------------------------------------------
// Calibration

struct Confidence {
  double confidence = 0;  // max predicted probability
  bool correct = false;
};

/// Equal-width bins on [0, 1], right-inclusive (bin 0 also holds 0).
/// Throws ValidationError on empty input or bins == 0.
double ece(std::span<const Confidence> samples, std::size_t bins = 10);

/// Bin index of a confidence under the ece binning.
std::size_t ece_bin(double confidence, std::size_t bins);

/// Squared Euclidean distance to the one-hot label.
double brier(std::span<const double> xi_bar, std::size_t label);

// ---------------------------------------------------------------------------
// Histograms

struct Histogram {
  double lo = 0, hi = 1;
  std::vector<std::size_t> counts;

  double bin_width() const { return (hi - lo) / double(counts.size()); }
};

/// Values outside [lo, hi] are clamped into the edge bins.
Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

// ---------------------------------------------------------------------------
// Model-level scores

/// One evaluated scene.
struct SamplePrediction {
  std::vector<double> probs;                  // categorical over anchors
  std::optional<std::vector<double>> alpha;   // evidential models
  std::optional<std::array<double, 3>> concept_alpha0;  // isap: agent, map, social
  std::optional<double> ensemble_score;       // 1 / (Var + eps)
  std::size_t predicted = 0;
  std::size_t label = 0;  // ground-truth anchor
  bool ood = false;
  double speed_heuristic = 0;
};

/// Aleatoric always; epistemic only for evidential models and ensembles.
struct ScoreSets {
  std::vector<ScoredSample> aleatoric;
  std::optional<std::vector<ScoredSample>> epistemic;
};

/// aleatoric = max probs, epistemic = max alpha or 1/Var; label 1 iff the
/// prediction hits the ground-truth anchor.
ScoreSets confidence_scores(std::span<const SamplePrediction> preds);

/// aleatoric = max probs, epistemic = alpha0 or 1/Var; label 1 = ID.
ScoreSets ood_scores(std::span<const SamplePrediction> preds);

/// Mean OOD alpha0 over mean ID alpha0.
double alpha0_ratio(std::span<const SamplePrediction> preds);

double alpha0(const SamplePrediction& p);

// ---------------------------------------------------------------------------
// Report

struct ReportRow {
  std::string name;
  std::optional<double> id_value;
  std::optional<double> ood_value;
};

struct EvalReport {
  std::vector<std::pair<std::string, std::string>> header;  // echoed provenance
  std::vector<ReportRow> rows;

  const ReportRow* find(std::string_view name) const;
  /// Throws ValidationError when the row or value is absent.
  double id(std::string_view name) const;
  double ood(std::string_view name) const;
};

inline constexpr std::array<std::size_t, 4> kMinAdeKs{1, 5, 10, 15};
inline constexpr std::size_t kEntropyBins = 20;

/// Builds the report from ID-test and OOD-test predictions.
EvalReport build_report(std::span<const SamplePrediction> id_preds,
                        std::span<const SamplePrediction> ood_preds,
                        const anchors::AnchorSet& anchors,
                        std::span<const anchors::FutureTrack> id_truth,
                        std::span<const anchors::FutureTrack> ood_truth);

/// "# key=value" provenance lines, then "name,id_value,ood_value" rows with
/// absent values written as "--".
void write_csv(const EvalReport& report, std::ostream& out);
EvalReport read_csv(std::istream& in);

std::string format_value(double v);

}  // namespace isap::metrics
