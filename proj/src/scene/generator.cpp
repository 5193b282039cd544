#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "isap/container.hpp"
#include "isap/errors.hpp"
#include "isap/rng.hpp"
#include "isap/scene.hpp"

namespace isap::scene {

std::string_view to_string(MapKind k) {
  switch (k) {
    case MapKind::straight: return "straight";
    case MapKind::intersection: return "intersection";
    case MapKind::multilane: return "multilane";
    case MapKind::roundabout: return "roundabout";
  }
  return "?";
}

std::string_view to_string(DriveSide s) {
  return s == DriveSide::left ? "left" : "right";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val_id: return "val_id";
    case Split::test_id: return "test_id";
    case Split::val_ood: return "val_ood";
    case Split::test_ood: return "test_ood";
  }
  return "?";
}

std::optional<MapKind> parse_map_kind(std::string_view s) {
  for (MapKind k : {MapKind::straight, MapKind::intersection, MapKind::multilane,
                    MapKind::roundabout})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

bool is_ood(Split s) { return s == Split::val_ood || s == Split::test_ood; }

namespace {

using std::numbers::pi;

// Piecewise-constant curvature along arc length. curvature[i] applies on
// [breaks[i-1], breaks[i]) with open ends at both sides.
struct CurvatureProfile {
  std::vector<double> breaks;
  std::vector<double> curvature;  // breaks.size() + 1 entries

  double at(double s) const {
    const auto it = std::upper_bound(breaks.begin(), breaks.end(), s);
    return curvature[std::size_t(it - breaks.begin())];
  }
};

struct Pose {
  double x = 0, y = 0, theta = 0;  // theta measured CCW from +y
};

// Advances a pose by signed arc length len at constant curvature k.
Pose advance(Pose p, double len, double k) {
  if (std::abs(k) < 1e-12) {
    p.x -= len * std::sin(p.theta);
    p.y += len * std::cos(p.theta);
    return p;
  }
  const double t1 = p.theta + k * len;
  p.x += (std::cos(t1) - std::cos(p.theta)) / k;
  p.y += (std::sin(t1) - std::sin(p.theta)) / k;
  p.theta = t1;
  return p;
}

// Position at arc length s, integrating exactly from the origin.
Point position_at(const CurvatureProfile& prof, double s) {
  Pose pose;
  double cur = 0.0;
  if (s >= 0) {
    for (double b : prof.breaks) {
      if (b <= cur) continue;
      if (b >= s) break;
      pose = advance(pose, b - cur, prof.at(cur));
      cur = b;
    }
    pose = advance(pose, s - cur, prof.at(cur));
  } else {
    for (auto it = prof.breaks.rbegin(); it != prof.breaks.rend(); ++it) {
      const double b = *it;
      if (b >= cur) continue;
      if (b <= s) break;
      // Segment (b, cur) uses the curvature just below cur.
      pose = advance(pose, b - cur, prof.at(std::nextafter(cur, -1e300)));
      cur = b;
    }
    pose = advance(pose, s - cur, prof.at(std::nextafter(cur, -1e300)));
  }
  return {pose.x, pose.y};
}

double truncated_normal(Rng& rng, const SpeedRegime& r) {
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal(r.mean, r.sd);
    if (v >= r.lo && v < r.hi) return v;
  }
  return rng.uniform(r.lo, r.hi);
}

double q(double v) { return io::round_to_f32(v); }
void quantize(Point& p) { p = {q(p[0]), q(p[1])}; }

MapKind draw_kind(Rng& rng, const std::array<double, 4>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return MapKind(i);
    u -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0) return MapKind(i);
  return MapKind::straight;
}

// Arc lengths travelled at each sample time; positive into the future.
// Speeds follow v0 + a t plus a random walk, clipped to [0, vmax].
template <std::size_t N>
std::array<double, N> arc_lengths(Rng& rng, double v0, double accel,
                                  double noise, double vmax, int direction) {
  std::array<double, N> out{};
  constexpr int kSub = 10;
  const double dt = kStepSeconds / kSub;
  double s = 0.0, walk = 0.0, t = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    const double w_next = walk + (noise > 0 ? rng.normal(0.0, noise * std::sqrt(kStepSeconds)) : 0.0);
    for (int i = 0; i < kSub; ++i) {
      const double frac = (i + 0.5) / kSub;
      const double tm = t + frac * kStepSeconds;
      const double v = std::clamp(v0 + direction * accel * tm + walk + frac * (w_next - walk),
                                  0.0, vmax);
      s += v * dt;
    }
    walk = w_next;
    t += kStepSeconds;
    out[k] = direction * s;
  }
  return out;
}

struct Lane {
  double x;       // lateral centre
  bool oncoming;
};

std::vector<Lane> lanes_of(const RoadLayout& road, DriveSide side) {
  std::vector<Lane> lanes;
  const int lo = -int(road.lanes_left), hi = int(road.lanes_right);
  const int total = hi - lo + 1;
  for (int i = lo; i <= hi; ++i) {
    // Oncoming lanes sit on the far side from the driving side.
    const int from_far = side == DriveSide::left ? hi - i : i - lo;
    const bool oncoming = from_far < int(road.oncoming_lanes) && total > 1;
    lanes.push_back({i * road.lane_width, oncoming});
  }
  return lanes;
}

PastTrack linear_track(Point now, Point velocity) {
  PastTrack tr{};
  for (std::size_t k = 0; k < kPastLen; ++k) {
    const double t = -kStepSeconds * double(kPastLen - 1 - k);
    tr[k] = {now[0] + velocity[0] * t, now[1] + velocity[1] * t};
  }
  return tr;
}

std::vector<PastTrack> make_neighbors(Rng& rng, const Scene& s,
                                      const GeneratorConfig& cfg, double v0) {
  std::vector<PastTrack> out;
  const std::size_t cap = std::min(cfg.max_neighbors, kMaxNeighbors);
  const std::size_t n = std::size_t(rng.below(cap + 1));
  const double traffic = std::max(v0, 1.0);
  if (s.map_kind == MapKind::roundabout) {
    const double r_lane = s.road.feature_distance;
    const double sign = s.drive_side == DriveSide::right ? 1.0 : -1.0;  // CCW / CW
    const Point centre{-sign * r_lane, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double radius = r_lane + (rng.uniform() < 0.5 ? 0.0 : s.road.lane_width);
      // Angle 0 is the agent's position seen from the centre.
      const double phase = rng.uniform(0.4, 2 * pi - 0.4);
      const double speed = std::clamp(rng.normal(traffic, 1.5), 0.0, cfg.max_speed);
      const double omega = sign * speed / radius;
      PastTrack tr{};
      for (std::size_t k = 0; k < kPastLen; ++k) {
        const double t = -kStepSeconds * double(kPastLen - 1 - k);
        const double ang = (sign > 0 ? 0.0 : pi) + phase + omega * t;
        tr[k] = {centre[0] + radius * std::cos(ang), centre[1] + radius * std::sin(ang)};
      }
      out.push_back(tr);
    }
    return out;
  }
  const std::vector<Lane> lanes = lanes_of(s.road, s.drive_side);
  for (std::size_t i = 0; i < n; ++i) {
    const bool crossing = s.map_kind == MapKind::intersection && rng.uniform() < 0.35;
    if (crossing) {
      const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
      const double y = s.road.feature_distance + dir * 0.25 * s.road.feature_width;
      const double x = rng.uniform(-30.0, 30.0);
      const double speed = std::clamp(rng.normal(traffic, 2.0), 0.0, cfg.max_speed);
      out.push_back(linear_track({x, y}, {dir * speed, 0.0}));
      continue;
    }
    const Lane& lane = lanes[std::size_t(rng.below(lanes.size()))];
    double y = rng.uniform(-20.0, 35.0);
    if (std::abs(lane.x) < 1e-9 && std::abs(y) < 8.0) y += y < 0 ? -8.0 : 8.0;
    const double speed = std::clamp(rng.normal(traffic, lane.oncoming ? 2.5 : 1.5),
                                    0.0, cfg.max_speed);
    const double vy = lane.oncoming ? -speed : speed;
    out.push_back(linear_track({lane.x + rng.normal(0.0, 0.15), y}, {0.0, vy}));
  }
  return out;
}

void validate(const GeneratorConfig& cfg) {
  double total = 0.0;
  for (double w : cfg.map_weights) {
    if (w < 0) throw ValidationError("generator: negative map weight");
    total += w;
  }
  if (total <= 0 && !cfg.fixed_map) throw ValidationError("generator: empty map mixture");
  if (cfg.speed.lo < 0 || cfg.speed.hi <= cfg.speed.lo)
    throw ValidationError("generator: speed range must satisfy 0 <= lo < hi");
  if (cfg.fixed_speed && *cfg.fixed_speed < 0)
    throw ValidationError("generator: negative speed");
  if (cfg.max_speed <= 0) throw ValidationError("generator: max_speed must be positive");
  if (cfg.position_noise < 0 || cfg.position_noise > 0.05)
    throw ValidationError("generator: position_noise must lie in [0, 0.05]");
  if (cfg.stopped_fraction < 0 || cfg.stopped_fraction > 1 || cfg.left_side_prob < 0 ||
      cfg.left_side_prob > 1)
    throw ValidationError("generator: probabilities must lie in [0, 1]");
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const GeneratorConfig& cfg) {
  validate(cfg);
  Rng rng(seed);
  Scene s;
  s.seed = seed;
  s.map_kind = cfg.fixed_map ? *cfg.fixed_map : draw_kind(rng, cfg.map_weights);
  const double side_u = rng.uniform();
  s.drive_side = cfg.fixed_side ? *cfg.fixed_side
                                : (side_u < cfg.left_side_prob ? DriveSide::left
                                                               : DriveSide::right);
  const bool noisy = !cfg.zero_noise;

  // Speed and acceleration.
  const bool stopped = !cfg.fixed_speed && rng.uniform() < cfg.stopped_fraction;
  double v0 = cfg.fixed_speed ? *cfg.fixed_speed : stopped ? 0.0 : truncated_normal(rng, cfg.speed);
  v0 = std::min(v0, cfg.max_speed);
  const double accel_draw = rng.normal(0.0, cfg.accel_sd);
  const double accel = (stopped || !noisy || v0 == 0.0) ? 0.0 : std::clamp(accel_draw, -3.0, 3.0);
  const double speed_noise = (stopped || !noisy || v0 == 0.0) ? 0.0 : cfg.speed_noise;

  // Road layout and curvature profile.
  CurvatureProfile prof;
  const double kappa_noise = noisy ? rng.normal(0.0, cfg.curvature_noise) : 0.0;
  RoadLayout& road = s.road;
  road.lane_width = noisy ? rng.uniform(3.2, 3.8) : 3.5;
  switch (s.map_kind) {
    case MapKind::straight: {
      road.lanes_left = road.lanes_right = 1;
      road.oncoming_lanes = 1;
      prof.curvature = {kappa_noise};
      break;
    }
    case MapKind::multilane: {
      const std::uint32_t same = 2 + std::uint32_t(rng.below(2));
      const std::uint32_t oncoming = 2 + std::uint32_t(rng.below(2));
      const std::uint32_t ego = std::uint32_t(rng.below(same));
      road.oncoming_lanes = oncoming;
      if (s.drive_side == DriveSide::left) {
        road.lanes_left = ego;
        road.lanes_right = same - 1 - ego + oncoming;
      } else {
        road.lanes_left = oncoming + ego;
        road.lanes_right = same - 1 - ego;
      }
      prof.curvature = {kappa_noise};
      // Optional lane change to an adjacent same-direction lane.
      const double lc_u = rng.uniform();
      const bool can_left = ego > 0, can_right = ego + 1 < same;
      const double start = rng.uniform(0.5, 2.5) * std::max(v0, 1.0);
      const double length = std::max(15.0, 3.0 * v0);
      if (v0 > 1.0 && lc_u < 0.3 && (can_left || can_right)) {
        // Same-direction lane indices grow to the right for both sides.
        const bool to_left = can_left && (!can_right || lc_u < 0.15);
        const double k = road.lane_width / ((length / 2) * (length / 2));
        const double sign = to_left ? 1.0 : -1.0;  // + curvature turns left
        prof.breaks = {start, start + length / 2, start + length};
        prof.curvature = {kappa_noise, sign * k, -sign * k, kappa_noise};
      }
      break;
    }
    case MapKind::intersection: {
      road.lanes_left = road.lanes_right = 1;
      road.oncoming_lanes = 1;
      road.feature_width = noisy ? rng.uniform(7.0, 10.0) : 8.0;
      road.feature_distance = noisy ? rng.uniform(8.0, 35.0) : 20.0;
      const double m = rng.uniform();
      const double turn_start = road.feature_distance - 0.5 * road.feature_width;
      if (m >= 0.4) {
        const bool left = m < 0.7;
        // The near-side turn is tight, the turn across traffic is wide.
        const bool near_side = (left && s.drive_side == DriveSide::left) ||
                               (!left && s.drive_side == DriveSide::right);
        const double radius = near_side ? rng.uniform(6.0, 9.0) : rng.uniform(10.0, 14.0);
        const double k = (left ? 1.0 : -1.0) / radius;
        prof.breaks = {turn_start, turn_start + 0.5 * pi * radius};
        prof.curvature = {0.0, k, 0.0};
      } else {
        prof.curvature = {kappa_noise};
      }
      break;
    }
    case MapKind::roundabout: {
      road.lanes_left = road.lanes_right = 0;
      road.oncoming_lanes = 0;
      road.feature_distance = noisy ? rng.uniform(12.0, 22.0) : 16.0;
      road.feature_width = 2.0 * road.lane_width;
      const double sign = s.drive_side == DriveSide::right ? 1.0 : -1.0;
      const double exit_angle = rng.uniform(0.25 * pi, 1.5 * pi);
      prof.breaks = {exit_angle * road.feature_distance};
      prof.curvature = {sign / road.feature_distance, 0.0};
      break;
    }
  }

  // Kinematics along the path.
  const auto fut_s = arc_lengths<kFutureLen>(rng, v0, accel, speed_noise, cfg.max_speed, +1);
  const auto past_s = arc_lengths<kPastLen - 1>(rng, v0, accel, speed_noise, cfg.max_speed, -1);
  const double pn = noisy ? cfg.position_noise : 0.0;
  auto jitter = [&](Point p) {
    if (pn > 0) {
      p[0] += rng.uniform(-pn, pn);
      p[1] += rng.uniform(-pn, pn);
    }
    return p;
  };
  for (std::size_t k = 0; k < kFutureLen; ++k) s.future[k] = jitter(position_at(prof, fut_s[k]));
  // past_s[j] is j+1 steps back; oldest first in the stored track.
  for (std::size_t j = 0; j + 1 < kPastLen; ++j)
    s.past[kPastLen - 2 - j] = jitter(position_at(prof, past_s[j]));
  s.past[kPastLen - 1] = {0.0, 0.0};

  s.state = {v0, accel, v0 * prof.at(0.0)};
  s.neighbors = make_neighbors(rng, s, cfg, v0);
  s.roundabout_tag = s.map_kind == MapKind::roundabout;

  // Values are stored as 32-bit floats on disk; keep them representable.
  for (auto& p : s.past) quantize(p);
  for (auto& p : s.future) quantize(p);
  for (auto& v : s.state) v = q(v);
  for (auto& tr : s.neighbors)
    for (auto& p : tr) quantize(p);
  road.lane_width = q(road.lane_width);
  road.feature_distance = q(road.feature_distance);
  road.feature_width = q(road.feature_width);
  return s;
}

}  // namespace isap::scene
