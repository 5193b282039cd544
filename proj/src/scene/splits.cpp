#include <cmath>

#include "isap/errors.hpp"
#include "isap/scene.hpp"

namespace isap::scene {

double speed_heuristic(std::span<const Point> track) {
  if (track.size() < 2) throw ValidationError("speed_heuristic: need at least 2 waypoints");
  const Point& a = track.front();
  const Point& b = track.back();
  return std::hypot(b[0] - a[0], b[1] - a[1]);
}

double speed_heuristic(const Scene& scene) {
  return speed_heuristic(std::span<const Point>(scene.past).last(kHeuristicWindow));
}

Domain split_speed(const Scene& scene, double threshold) {
  if (!(threshold > 0)) throw ValidationError("split_speed: threshold must be positive");
  return speed_heuristic(scene) < threshold ? Domain::id : Domain::ood;
}

Domain split_map(const Scene& scene) {
  if (scene.drive_side == DriveSide::left && !scene.roundabout_tag &&
      scene.map_kind != MapKind::roundabout)
    return Domain::id;
  if (scene.drive_side == DriveSide::right && scene.roundabout_tag) return Domain::ood;
  throw ValidationError("split_map: scene belongs to neither domain");
}

}  // namespace isap::scene
