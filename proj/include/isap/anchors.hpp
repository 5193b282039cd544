#pragma once

// Discrete trajectory anchors from k-means over flattened futures.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "isap/container.hpp"
#include "isap/scene.hpp"

namespace isap::anchors {

using scene::FutureTrack;

inline constexpr std::size_t kDefaultAnchors = 64;
inline constexpr std::size_t kMaxIterations = 200;
inline constexpr double kShiftTolerance = 1e-6;

struct AnchorSet {
  std::vector<FutureTrack> anchors;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  std::size_t reseeded = 0;

  std::size_t size() const { return anchors.size(); }
  /// Hash of the anchor coordinates; checkpoints reference it.
  std::uint64_t hash() const;
};

/// k-means++ seeding then Lloyd iterations (at most kMaxIterations, or until
/// no centroid moves by more than kShiftTolerance). Empty clusters are
/// re-seeded from the point farthest from its centroid. Throws
/// ValidationError with fewer than `count` distinct inputs or count == 0.
AnchorSet fit_anchors(std::span<const FutureTrack> futures, std::size_t count,
                      std::uint64_t seed);

/// fit_anchors, re-fitting with derived seeds until every class receives at
/// least one label over `futures` (at most max_refits extra fits; the last
/// fit is returned otherwise). Refits are reported on stderr.
AnchorSet fit_covering(std::span<const FutureTrack> futures, std::size_t count,
                       std::uint64_t seed, std::size_t max_refits = 10);

/// Within-cluster sum of squared distances under nearest-centroid assignment.
double within_cluster_sse(std::span<const FutureTrack> futures,
                          std::span<const FutureTrack> centroids);

/// Mean pointwise Euclidean distance between two tracks.
double mean_distance(const FutureTrack& a, const FutureTrack& b);

/// argmin_c mean_distance(future, anchor_c); lowest index on ties.
std::size_t label(const FutureTrack& future, const AnchorSet& set);

/// Per-class label counts over the given futures.
std::vector<std::size_t> label_counts(std::span<const FutureTrack> futures, const AnchorSet& set);

/// Coordinates are stored as f32; fitted anchors are rounded to float so the
/// round trip is exact.
void save(const AnchorSet& set, const std::filesystem::path& path, const io::KeyValues& config);
AnchorSet load(const std::filesystem::path& path, io::Manifest* manifest = nullptr);

}  // namespace isap::anchors
