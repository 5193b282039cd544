#include "isap/anchors.hpp"
#include "isap/container.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "isap/errors.hpp"
#include "isap/rng.hpp"

namespace isap::anchors {

namespace {

constexpr std::size_t kDim = 2 * scene::kFutureLen;
using Vec = std::array<double, kDim>;

Vec flatten(const FutureTrack& t) {
  Vec v;
  for (std::size_t k = 0; k < scene::kFutureLen; ++k) {
    v[2 * k] = t[k][0];
    v[2 * k + 1] = t[k][1];
  }
  return v;
}

FutureTrack unflatten(const Vec& v) {
  FutureTrack t;
  for (std::size_t k = 0; k < scene::kFutureLen; ++k) t[k] = {v[2 * k], v[2 * k + 1]};
  return t;
}

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kDim; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::size_t nearest(const Vec& p, const std::vector<Vec>& centres, double* d2 = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centres.size(); ++c) {
    const double d = sq_dist(p, centres[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (d2) *d2 = best_d;
  return best;
}

std::size_t count_distinct(std::vector<Vec> pts) {
  std::sort(pts.begin(), pts.end());
  return std::size_t(std::unique(pts.begin(), pts.end()) - pts.begin());
}

}  // namespace

std::uint64_t AnchorSet::hash() const {
  io::PayloadWriter w;
  for (const FutureTrack& t : anchors)
    for (const auto& p : t) {
      w.f64(p[0]);
      w.f64(p[1]);
    }
  return io::fnv1a64(w.bytes());
}

AnchorSet fit_anchors(std::span<const FutureTrack> futures, std::size_t count,
                      std::uint64_t seed) {
  if (count == 0) throw ValidationError("fit_anchors: anchor count must be positive");
  std::vector<Vec> pts;
  pts.reserve(futures.size());
  for (const FutureTrack& f : futures) pts.push_back(flatten(f));
  if (count_distinct(pts) < count)
    throw ValidationError("fit_anchors: fewer distinct trajectories than anchors (" +
                          std::to_string(count) + ")");

  Rng rng(seed);
  const std::size_t n = pts.size();
  // k-means++ seeding.
  std::vector<Vec> centres;
  centres.push_back(pts[rng.below(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(pts[i], centres[0]);
  while (centres.size() < count) {
    double total = 0.0;
    for (double d : d2) total += d;
    double u = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      if (u < d2[i]) break;
      u -= d2[i];
    }
    centres.push_back(pts[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(pts[i], centres.back()));
  }

  AnchorSet out;
  out.seed = seed;
  std::vector<std::size_t> assign(n);
  for (std::size_t it = 0; it < kMaxIterations; ++it) {
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) assign[i] = nearest(pts[i], centres, &dist[i]);
    std::vector<Vec> sums(count, Vec{});
    std::vector<std::size_t> sizes(count, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[assign[i]];
      for (std::size_t j = 0; j < kDim; ++j) sums[assign[i]][j] += pts[i][j];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < count; ++c) {
      Vec next;
      if (sizes[c] == 0) {
        // Re-seed from the point currently worst served by its centroid.
        const std::size_t far = std::size_t(std::max_element(dist.begin(), dist.end()) - dist.begin());
        next = pts[far];
        dist[far] = 0.0;
        ++out.reseeded;
      } else {
        for (std::size_t j = 0; j < kDim; ++j) next[j] = sums[c][j] / double(sizes[c]);
      }
      shift = std::max(shift, std::sqrt(sq_dist(next, centres[c])));
      centres[c] = next;
    }
    out.iterations = it + 1;
    if (shift < kShiftTolerance) break;
  }
  for (Vec& c : centres)
    for (double& v : c) v = io::round_to_f32(v);
  for (const Vec& c : centres) out.anchors.push_back(unflatten(c));
  return out;
}

AnchorSet fit_covering(std::span<const FutureTrack> futures, std::size_t count,
                       std::uint64_t seed, std::size_t max_refits) {
  AnchorSet set = fit_anchors(futures, count, seed);
  for (std::size_t r = 1; r <= max_refits; ++r) {
    const auto counts = label_counts(futures, set);
    const auto empty = std::count(counts.begin(), counts.end(), std::size_t{0});
    if (empty == 0) break;
    std::cerr << "fit-anchors: " << empty << " classes unused by labels, refitting (" << r << "/"
              << max_refits << ")\n";
    set = fit_anchors(futures, count, derive_seed(seed, r));
  }
  return set;
}

double within_cluster_sse(std::span<const FutureTrack> futures,
                          std::span<const FutureTrack> centroids) {
  std::vector<Vec> cs;
  for (const FutureTrack& c : centroids) cs.push_back(flatten(c));
  double sse = 0.0;
  for (const FutureTrack& f : futures) {
    double d2;
    nearest(flatten(f), cs, &d2);
    sse += d2;
  }
  return sse;
}

double mean_distance(const FutureTrack& a, const FutureTrack& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < scene::kFutureLen; ++k)
    s += std::hypot(a[k][0] - b[k][0], a[k][1] - b[k][1]);
  return s / double(scene::kFutureLen);
}

std::size_t label(const FutureTrack& future, const AnchorSet& set) {
  if (set.anchors.empty()) throw ValidationError("label: empty anchor set");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < set.anchors.size(); ++c) {
    const double d = mean_distance(future, set.anchors[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<std::size_t> label_counts(std::span<const FutureTrack> futures, const AnchorSet& set) {
  std::vector<std::size_t> counts(set.size(), 0);
  for (const FutureTrack& f : futures) ++counts[label(f, set)];
  return counts;
}

void save(const AnchorSet& set, const std::filesystem::path& path, const io::KeyValues& config) {
  io::PayloadWriter w;
  for (const FutureTrack& t : set.anchors)
    for (const auto& p : t) {
      w.f32(float(p[0]));
      w.f32(float(p[1]));
    }
  io::KeyValues meta{{"count", std::to_string(set.size())},
                     {"horizon", std::to_string(scene::kFutureLen)},
                     {"seed", std::to_string(set.seed)},
                     {"iterations", std::to_string(set.iterations)},
                     {"reseeded", std::to_string(set.reseeded)},
                     {"anchor_hash", io::hex64(set.hash())},
                     {"record_layout", "f32 anchors[count][horizon][2]"}};
  io::save(path, "anchors", io::DType::f32, config, meta, w.bytes());
}

AnchorSet load(const std::filesystem::path& path, io::Manifest* manifest) {
  io::Container c = io::load(path, "anchors");
  const std::size_t count = std::stoull(io::lookup(c.manifest.meta, "count"));
  if (std::stoull(io::lookup(c.manifest.meta, "horizon")) != scene::kFutureLen)
    throw ValidationError("anchors: horizon mismatch");
  if (c.payload.size() != count * scene::kFutureLen * 2 * 4)
    throw ValidationError("anchors: payload size mismatch");
  AnchorSet set;
  set.seed = std::stoull(io::lookup(c.manifest.meta, "seed"));
  set.iterations = std::stoull(io::lookup(c.manifest.meta, "iterations"));
  set.reseeded = std::stoull(io::lookup(c.manifest.meta, "reseeded"));
  io::PayloadReader r(c.payload);
  set.anchors.resize(count);
  for (FutureTrack& t : set.anchors)
    for (auto& p : t) {
      p[0] = r.f32();
      p[1] = r.f32();
    }
  if (io::hex64(set.hash()) != io::lookup(c.manifest.meta, "anchor_hash"))
    throw ValidationError("anchors: anchor hash mismatch");
  if (manifest) *manifest = std::move(c.manifest);
  return set;
}

}  // namespace isap::anchors
