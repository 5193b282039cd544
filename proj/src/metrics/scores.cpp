#include <algorithm>
#include <numeric>

#include "isap/errors.hpp"
#include "isap/metrics.hpp"

namespace isap::metrics {

double alpha0(const SamplePrediction& p) {
  if (!p.alpha) throw ValidationError("alpha0: prediction has no Dirichlet parameters");
  return std::accumulate(p.alpha->begin(), p.alpha->end(), 0.0);
}

namespace {

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

bool has_epistemic(std::span<const SamplePrediction> preds) {
  if (preds.empty()) return false;
  const bool evidential = preds[0].alpha.has_value();
  const bool ensemble = preds[0].ensemble_score.has_value();
  for (const SamplePrediction& p : preds)
    if (p.alpha.has_value() != evidential || p.ensemble_score.has_value() != ensemble)
      throw ValidationError("scores: mixed model outputs");
  return evidential || ensemble;
}

}  // namespace

ScoreSets confidence_scores(std::span<const SamplePrediction> preds) {
  ScoreSets s;
  const bool epi = has_epistemic(preds);
  if (epi) s.epistemic.emplace();
  for (const SamplePrediction& p : preds) {
    const int correct = p.predicted == p.label ? 1 : 0;
    s.aleatoric.push_back({max_of(p.probs), correct});
    if (epi)
      s.epistemic->push_back({p.alpha ? max_of(*p.alpha) : *p.ensemble_score, correct});
  }
  return s;
}

ScoreSets ood_scores(std::span<const SamplePrediction> preds) {
  ScoreSets s;
  const bool epi = has_epistemic(preds);
  if (epi) s.epistemic.emplace();
  for (const SamplePrediction& p : preds) {
    const int id = p.ood ? 0 : 1;
    s.aleatoric.push_back({max_of(p.probs), id});
    if (epi) s.epistemic->push_back({p.alpha ? alpha0(p) : *p.ensemble_score, id});
  }
  return s;
}

double alpha0_ratio(std::span<const SamplePrediction> preds) {
  double id_sum = 0, ood_sum = 0;
  std::size_t id_n = 0, ood_n = 0;
  for (const SamplePrediction& p : preds) {
    (p.ood ? ood_sum : id_sum) += alpha0(p);
    ++(p.ood ? ood_n : id_n);
  }
  if (id_n == 0 || ood_n == 0) throw ValidationError("alpha0_ratio: need ID and OOD samples");
  return (ood_sum / double(ood_n)) / (id_sum / double(id_n));
}

}  // namespace isap::metrics
