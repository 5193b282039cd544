#pragma once

// Split-tagged scene collections for the two experiments, and their on-disk
// form. Record layout (one little-endian 32-bit word each, 130 words):
//   u32 map_kind, drive_side, split, roundabout_tag, neighbor_count,
//       seed_lo, seed_hi, lanes_left, lanes_right, oncoming_lanes
//   f32 lane_width, feature_distance, feature_width
//   f32 state[3], past[5][2], future[12][2], neighbors[8][5][2] (zero padded)

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "isap/container.hpp"
#include "isap/scene.hpp"

namespace isap::scene {

enum class Experiment { speed, map };

std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view s);

using SplitCounts = std::array<std::size_t, 5>;  // indexed by Split

/// Reference split sizes at scale 1.
inline constexpr SplitCounts kSpeedSplitCounts{25669, 7344, 7270, 2521, 3267};
inline constexpr SplitCounts kMapSplitCounts{8110, 318, 2186, 80, 364};

struct DatasetConfig {
  Experiment experiment = Experiment::speed;
  double scale = 0.1;
  std::uint64_t seed = 0;
  double speed_threshold = kDefaultSpeedThreshold;
  /// Map split: fraction of OOD scenes that are right-side straight roads
  /// carrying the roundabout tag.
  double leak_fraction = 0.15;
};

/// round(reference * scale), at least 1 per split.
SplitCounts split_counts(const DatasetConfig& cfg);

/// Generator settings per experiment and domain.
GeneratorConfig id_generator(const DatasetConfig& cfg);
GeneratorConfig ood_generator(const DatasetConfig& cfg);

/// Scenes in split order (train, val_id, test_id, val_ood, test_ood). Each
/// split draws from its own seed stream, so ID splits do not depend on the
/// OOD settings (leak fraction in particular).
std::vector<Scene> build_dataset(const DatasetConfig& cfg);

io::KeyValues echo(const DatasetConfig& cfg);

struct DatasetManifest {
  SplitCounts counts{};
  std::uint64_t config_hash = 0;
  std::uint64_t payload_hash = 0;
  std::uint64_t payload_bytes = 0;
  std::size_t record_words = 0;
};

inline constexpr std::size_t kRecordWords = 130;

DatasetManifest persist(const std::vector<Scene>& scenes, const std::filesystem::path& path,
                        const io::KeyValues& config);

struct LoadedDataset {
  std::vector<Scene> scenes;
  io::Manifest manifest;
};

LoadedDataset load_dataset(const std::filesystem::path& path);

/// Indices of scenes in the given split.
std::vector<std::size_t> select(const std::vector<Scene>& scenes, Split split);

}  // namespace isap::scene
