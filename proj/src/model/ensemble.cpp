#include <algorithm>

#include "isap/errors.hpp"
#include "isap/model.hpp"

namespace isap::model {

EnsembleScores ensemble_scores(const std::vector<std::vector<double>>& member_probs) {
  const std::size_t n = member_probs.size();
  if (n < 2) throw ValidationError("ensemble needs at least 2 members");
  const std::size_t c = member_probs[0].size();
  for (const auto& p : member_probs)
    if (p.size() != c) throw ShapeError("ensemble members disagree on class count");
  EnsembleScores s;
  s.mean_probs.assign(c, 0.0);
  for (const auto& p : member_probs)
    for (std::size_t j = 0; j < c; ++j) s.mean_probs[j] += p[j];
  for (double& v : s.mean_probs) v /= double(n);
  s.predicted = std::size_t(std::max_element(s.mean_probs.begin(), s.mean_probs.end()) -
                            s.mean_probs.begin());
  const double mu = s.mean_probs[s.predicted];
  double var = 0.0;
  for (const auto& p : member_probs) var += (p[s.predicted] - mu) * (p[s.predicted] - mu);
  s.variance = var / double(n);
  s.score = 1.0 / (s.variance + kVarianceFloor);
  return s;
}

}  // namespace isap::model
