#pragma once

// Synthetic driving scenes in the agent-centric frame: the agent sits at the
// origin at t = 0 with heading along +y; -x is to its left. Past waypoints
// cover 2 s at 2 Hz (oldest first, the last one is the current position),
// the future covers 6 s at 2 Hz.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace isap::scene {

inline constexpr std::size_t kPastLen = 5;
inline constexpr std::size_t kFutureLen = 12;
inline constexpr std::size_t kMaxNeighbors = 8;
inline constexpr double kStepSeconds = 0.5;
/// Waypoints spanning the most recent 1 s of past (2 intervals at 2 Hz).
inline constexpr std::size_t kHeuristicWindow = 3;

using Point = std::array<double, 2>;
using PastTrack = std::array<Point, kPastLen>;
using FutureTrack = std::array<Point, kFutureLen>;

enum class MapKind : std::uint32_t { straight, intersection, multilane, roundabout };
enum class DriveSide : std::uint32_t { left, right };
enum class Split : std::uint32_t { train, val_id, test_id, val_ood, test_ood };
enum class Domain { id, ood };

inline constexpr std::array<Split, 5> kAllSplits{
    Split::train, Split::val_id, Split::test_id, Split::val_ood, Split::test_ood};

std::string_view to_string(MapKind k);
std::string_view to_string(DriveSide s);
std::string_view to_string(Split s);
std::optional<MapKind> parse_map_kind(std::string_view s);
bool is_ood(Split s);

/// Lane geometry around the agent. Lanes are lane_width wide; the agent lane
/// is centred on x = 0 with lanes_left / lanes_right further lanes beside it.
struct RoadLayout {
  double lane_width = 3.5;
  std::uint32_t lanes_left = 1;
  std::uint32_t lanes_right = 1;
  /// Lanes (counted from the far side opposite the driving side) carrying
  /// oncoming traffic.
  std::uint32_t oncoming_lanes = 1;
  /// Intersection: distance ahead of the crossing road's centreline.
  /// Roundabout: ring radius of the agent's lane.
  double feature_distance = 0.0;
  /// Intersection: crossing road width. Roundabout: ring width.
  double feature_width = 0.0;

  friend bool operator==(const RoadLayout&, const RoadLayout&) = default;
};

struct Scene {
  PastTrack past{};
  FutureTrack future{};
  std::array<double, 3> state{};  // speed m/s, acceleration m/s^2, heading rate rad/s
  std::vector<PastTrack> neighbors;
  MapKind map_kind = MapKind::straight;
  DriveSide drive_side = DriveSide::left;
  RoadLayout road;
  /// Scene-level metadata tag; may be set on a straight local road.
  bool roundabout_tag = false;
  Split split = Split::train;
  std::uint64_t seed = 0;

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Truncated normal speed distribution in m/s.
struct SpeedRegime {
  double mean = 3.0;
  double sd = 2.0;
  double lo = 0.0;
  double hi = 10.0;
};

struct GeneratorConfig {
  /// Relative weights for straight, intersection, multilane, roundabout.
  std::array<double, 4> map_weights{0.35, 0.3, 0.25, 0.1};
  /// Probability of left-side driving.
  double left_side_prob = 0.5;
  SpeedRegime speed;
  /// Fraction of agents that are stopped (v = 0, no motion noise).
  double stopped_fraction = 0.15;
  double accel_sd = 0.5;            // m/s^2
  double speed_noise = 0.15;        // m/s per sqrt(s) random walk
  double curvature_noise = 0.002;   // 1/m
  double position_noise = 0.03;     // m, uniform half-width, <= 0.05
  double max_speed = 25.0;          // m/s
  std::size_t max_neighbors = 6;

  /// Fixed-speed override used by tests: bypasses the regime draw.
  std::optional<double> fixed_speed;
  std::optional<MapKind> fixed_map;
  std::optional<DriveSide> fixed_side;
  bool zero_noise = false;
};

/// Deterministic function of (seed, config). Throws ValidationError on an
/// empty map mixture or a negative speed range.
Scene generate_scene(std::uint64_t seed, const GeneratorConfig& config);

// ---------------------------------------------------------------------------
// Raster

/// H x W x 3 values in [0,1], stored channel-major [3][H][W].
/// Channel 0: drivable area (1.0) with lane dividers (0.5).
/// Channel 1: neighbor past tracks, fading oldest -> newest.
/// Channel 2: agent past track, fading oldest -> newest.
struct Raster {
  std::size_t size = 64;
  std::vector<float> pixels;

  float at(std::size_t channel, std::size_t row, std::size_t col) const {
    return pixels[(channel * size + row) * size + col];
  }
  std::span<const float> channel(std::size_t c) const {
    return std::span<const float>(pixels).subspan(c * size * size, size * size);
  }
};

/// Field of view in metres; the agent sits on the vertical centreline,
/// kRasterAhead metres below the top edge.
inline constexpr double kRasterWidth = 64.0;
inline constexpr double kRasterAhead = 40.0;

/// Pixel containing an agent-frame point, if inside the grid.
std::optional<std::array<std::size_t, 2>> to_pixel(Point p, std::size_t size);

Raster rasterize(const Scene& scene, std::size_t size = 64);

// ---------------------------------------------------------------------------
// Split rules

/// Distance between the first and last waypoints of the given track.
/// Throws ValidationError with fewer than 2 waypoints.
double speed_heuristic(std::span<const Point> track);

/// Heuristic over the most recent 1 s of the scene's past.
double speed_heuristic(const Scene& scene);

inline constexpr double kDefaultSpeedThreshold = 10.0;

/// ID iff heuristic < threshold.
Domain split_speed(const Scene& scene, double threshold = kDefaultSpeedThreshold);

/// ID iff left-side driving on an untagged non-roundabout map; OOD iff
/// right-side driving with the roundabout tag (whatever the local road).
/// Any other combination belongs to neither side: ValidationError.
Domain split_map(const Scene& scene);

}  // namespace isap::scene
