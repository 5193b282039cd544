#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "isap/errors.hpp"
#include "isap/metrics.hpp"

namespace isap::metrics {

std::vector<std::size_t> top_k(std::span<const double> probs, std::size_t k) {
  if (k == 0 || k > probs.size())
    throw ValidationError("top_k: k must lie in [1, " + std::to_string(probs.size()) + "]");
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + long(k), idx.end(), [&](std::size_t a, std::size_t b) {
    return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
  });
  idx.resize(k);
  return idx;
}

double min_ade_k(std::span<const double> probs, const anchors::AnchorSet& anchors,
                 const anchors::FutureTrack& gt, std::size_t k) {
  if (probs.size() != anchors.size()) throw ShapeError("min_ade_k: probs/anchors size mismatch");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c : top_k(probs, k))
    best = std::min(best, anchors::mean_distance(gt, anchors.anchors[c]));
  return best;
}

double fde(std::span<const double> probs, const anchors::AnchorSet& anchors,
           const anchors::FutureTrack& gt) {
  if (probs.size() != anchors.size()) throw ShapeError("fde: probs/anchors size mismatch");
  const auto& a = anchors.anchors[top_k(probs, 1)[0]].back();
  return std::hypot(a[0] - gt.back()[0], a[1] - gt.back()[1]);
}

namespace {

void check_binary(std::span<const ScoredSample> samples, std::size_t& pos, std::size_t& neg) {
  pos = neg = 0;
  for (const ScoredSample& s : samples) {
    if (!std::isfinite(s.score)) throw ValidationError("ranking metric: non-finite score");
    if (s.label == 1) ++pos;
    else if (s.label == 0) ++neg;
    else throw ValidationError("ranking metric: labels must be 0 or 1");
  }
  if (pos == 0 || neg == 0) throw ValidationError("ranking metric: need both label values");
}

std::vector<ScoredSample> sorted_desc(std::span<const ScoredSample> samples) {
  std::vector<ScoredSample> v(samples.begin(), samples.end());
  std::stable_sort(v.begin(), v.end(),
                   [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });
  return v;
}

}  // namespace

double auroc(std::span<const ScoredSample> samples) {
  std::size_t pos, neg;
  check_binary(samples, pos, neg);
  // Walk tie groups in ascending score order: each positive beats every
  // negative below its group and earns half credit for tied negatives.
  std::vector<ScoredSample> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score < b.score; });
  double wins = 0.0;
  std::size_t neg_below = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i, p = 0, n = 0;
    for (; j < v.size() && v[j].score == v[i].score; ++j) (v[j].label == 1 ? p : n)++;
    wins += double(p) * (double(neg_below) + 0.5 * double(n));
    neg_below += n;
    i = j;
  }
  return wins / (double(pos) * double(neg));
}

double apr(std::span<const ScoredSample> samples) {
  std::size_t pos, neg;
  check_binary(samples, pos, neg);
  const auto v = sorted_desc(samples);
  double ap = 0.0;
  std::size_t tp = 0, taken = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i, p = 0;
    for (; j < v.size() && v[j].score == v[i].score; ++j)
      if (v[j].label == 1) ++p;
    tp += p;
    taken = j;
    if (p > 0) ap += (double(p) / double(pos)) * (double(tp) / double(taken));
    i = j;
  }
  return ap;
}

std::size_t ece_bin(double confidence, std::size_t bins) {
  const double b = double(bins);
  long idx = long(std::ceil(confidence * b)) - 1;
  idx = std::clamp(idx, 0L, long(bins) - 1);
  // Make membership agree exactly with lo < c <= hi on computed edges.
  while (idx > 0 && confidence <= double(idx) / b) --idx;
  while (idx + 1 < long(bins) && confidence > double(idx + 1) / b) ++idx;
  return std::size_t(idx);
}

double ece(std::span<const Confidence> samples, std::size_t bins) {
  if (samples.empty()) throw ValidationError("ece: empty input");
  if (bins == 0) throw ValidationError("ece: need at least one bin");
  std::vector<double> conf(bins, 0.0), acc(bins, 0.0);
  std::vector<std::size_t> n(bins, 0);
  for (const Confidence& s : samples) {
    if (!(s.confidence >= 0.0 && s.confidence <= 1.0))
      throw ValidationError("ece: confidence outside [0, 1]");
    const std::size_t b = ece_bin(s.confidence, bins);
    conf[b] += s.confidence;
    acc[b] += s.correct ? 1.0 : 0.0;
    ++n[b];
  }
  double e = 0.0;
  for (std::size_t b = 0; b < bins; ++b)
    if (n[b] > 0) e += std::abs(acc[b] - conf[b]) / double(samples.size());
  return e;
}

double brier(std::span<const double> xi_bar, std::size_t label) {
  if (label >= xi_bar.size()) throw ValidationError("brier: label out of range");
  double s = 0.0;
  for (std::size_t c = 0; c < xi_bar.size(); ++c) {
    const double d = xi_bar[c] - (c == label ? 1.0 : 0.0);
    s += d * d;
  }
  return s;
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0 || !(hi > lo)) throw ValidationError("histogram: need bins > 0 and hi > lo");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double v : values) {
    const double t = (v - lo) / (hi - lo) * double(bins);
    const long b = std::clamp(long(std::floor(t)), 0L, long(bins) - 1);
    ++h.counts[std::size_t(b)];
  }
  return h;
}

}  // namespace isap::metrics
