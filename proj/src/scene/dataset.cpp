#include "isap/dataset.hpp"

#include <cmath>
#include <sstream>

#include "isap/errors.hpp"
#include "isap/rng.hpp"

namespace isap::scene {

std::string_view to_string(Experiment e) { return e == Experiment::speed ? "speed" : "map"; }

Experiment parse_experiment(std::string_view s) {
  if (s == "speed" || s == "speed_split") return Experiment::speed;
  if (s == "map" || s == "map_split") return Experiment::map;
  throw ValidationError("unknown experiment '" + std::string(s) + "'");
}

SplitCounts split_counts(const DatasetConfig& cfg) {
  if (!(cfg.scale > 0)) throw ValidationError("dataset scale must be positive");
  const SplitCounts& ref = cfg.experiment == Experiment::speed ? kSpeedSplitCounts : kMapSplitCounts;
  SplitCounts out{};
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::max<std::size_t>(1, std::size_t(std::llround(double(ref[i]) * cfg.scale)));
  return out;
}

GeneratorConfig id_generator(const DatasetConfig& cfg) {
  GeneratorConfig g;
  if (cfg.experiment == Experiment::speed) {
    // The heuristic spans 1 s, so the threshold reads directly as m/s.
    g.speed = {3.0, 2.0, 0.0, cfg.speed_threshold};
  } else {
    g.map_weights = {0.4, 0.35, 0.25, 0.0};
    g.fixed_side = DriveSide::left;
    g.speed = {5.0, 3.0, 0.0, 15.0};
  }
  return g;
}

GeneratorConfig ood_generator(const DatasetConfig& cfg) {
  GeneratorConfig g;
  if (cfg.experiment == Experiment::speed) {
    g.speed = {12.0, 3.0, cfg.speed_threshold, 25.0};
    g.stopped_fraction = 0.0;
  } else {
    g.fixed_side = DriveSide::right;
    g.fixed_map = MapKind::roundabout;
    g.speed = {5.0, 3.0, 0.0, 15.0};
  }
  return g;
}

namespace {

constexpr std::size_t kMaxAttempts = 1000;

bool accept(const Scene& s, const DatasetConfig& cfg, bool want_ood) {
  if (cfg.experiment == Experiment::speed)
    return (split_speed(s, cfg.speed_threshold) == Domain::ood) == want_ood;
  return true;  // map split membership is fixed by the generator settings
}

Scene draw(std::uint64_t slot_seed, const GeneratorConfig& gen, const DatasetConfig& cfg,
           bool want_ood) {
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Scene s = generate_scene(derive_seed(slot_seed, attempt), gen);
    if (accept(s, cfg, want_ood)) return s;
  }
  throw ValidationError("dataset: generator cannot satisfy the split rule");
}

}  // namespace

std::vector<Scene> build_dataset(const DatasetConfig& cfg) {
  if (cfg.leak_fraction < 0 || cfg.leak_fraction > 1)
    throw ValidationError("leak_fraction must lie in [0, 1]");
  const SplitCounts counts = split_counts(cfg);
  const GeneratorConfig id_gen = id_generator(cfg);
  const GeneratorConfig ood_gen = ood_generator(cfg);
  GeneratorConfig leak_gen = ood_gen;
  leak_gen.fixed_map = MapKind::straight;

  std::vector<Scene> out;
  for (Split split : kAllSplits) {
    const std::uint64_t stream = derive_seed(cfg.seed, 0x5C3E + std::uint64_t(split));
    const bool ood = is_ood(split);
    for (std::size_t i = 0; i < counts[std::size_t(split)]; ++i) {
      const std::uint64_t slot = derive_seed(stream, i);
      Scene s;
      if (ood && cfg.experiment == Experiment::map) {
        Rng coin(derive_seed(slot, 0x1EA7));
        if (coin.uniform() < cfg.leak_fraction) {
          s = draw(slot, leak_gen, cfg, true);
          s.roundabout_tag = true;
        } else {
          s = draw(slot, ood_gen, cfg, true);
        }
      } else {
        s = draw(slot, ood ? ood_gen : id_gen, cfg, ood);
      }
      s.split = split;
      out.push_back(std::move(s));
    }
  }
  return out;
}

io::KeyValues echo(const DatasetConfig& cfg) {
  auto num = [](double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  };
  return {{"experiment", std::string(to_string(cfg.experiment))},
          {"scale", num(cfg.scale)},
          {"seed", std::to_string(cfg.seed)},
          {"speed_threshold", num(cfg.speed_threshold)},
          {"leak_fraction", num(cfg.leak_fraction)}};
}

DatasetManifest persist(const std::vector<Scene>& scenes, const std::filesystem::path& path,
                        const io::KeyValues& config) {
  io::PayloadWriter w;
  SplitCounts counts{};
  for (const Scene& s : scenes) {
    if (s.neighbors.size() > kMaxNeighbors)
      throw ValidationError("persist: more than " + std::to_string(kMaxNeighbors) + " neighbors");
    ++counts.at(std::size_t(s.split));
    w.u32(std::uint32_t(s.map_kind));
    w.u32(std::uint32_t(s.drive_side));
    w.u32(std::uint32_t(s.split));
    w.u32(s.roundabout_tag ? 1u : 0u);
    w.u32(std::uint32_t(s.neighbors.size()));
    w.u32(std::uint32_t(s.seed & 0xFFFFFFFFu));
    w.u32(std::uint32_t(s.seed >> 32));
    w.u32(s.road.lanes_left);
    w.u32(s.road.lanes_right);
    w.u32(s.road.oncoming_lanes);
    w.f32(float(s.road.lane_width));
    w.f32(float(s.road.feature_distance));
    w.f32(float(s.road.feature_width));
    for (double v : s.state) w.f32(float(v));
    for (const Point& p : s.past) { w.f32(float(p[0])); w.f32(float(p[1])); }
    for (const Point& p : s.future) { w.f32(float(p[0])); w.f32(float(p[1])); }
    for (std::size_t n = 0; n < kMaxNeighbors; ++n)
      for (std::size_t k = 0; k < kPastLen; ++k) {
        const Point p = n < s.neighbors.size() ? s.neighbors[n][k] : Point{0.0, 0.0};
        w.f32(float(p[0]));
        w.f32(float(p[1]));
      }
  }
  io::KeyValues meta;
  std::size_t total = 0;
  for (Split sp : kAllSplits) {
    meta.emplace_back("count." + std::string(to_string(sp)), std::to_string(counts[std::size_t(sp)]));
    total += counts[std::size_t(sp)];
  }
  meta.emplace_back("count.total", std::to_string(total));
  meta.emplace_back("record_words", std::to_string(kRecordWords));
  meta.emplace_back("record_layout",
                    "u32 map_kind drive_side split roundabout_tag neighbor_count seed_lo seed_hi "
                    "lanes_left lanes_right oncoming_lanes; f32 lane_width feature_distance "
                    "feature_width state[3] past[5][2] future[12][2] neighbors[8][5][2]");
  const io::Manifest m = io::save(path, "dataset", io::DType::f32, config, meta, w.bytes());
  return {counts, m.config_hash, m.payload_hash, m.payload_bytes, kRecordWords};
}

LoadedDataset load_dataset(const std::filesystem::path& path) {
  io::Container c = io::load(path, "dataset");
  const std::size_t total = std::stoull(io::lookup(c.manifest.meta, "count.total"));
  if (std::stoull(io::lookup(c.manifest.meta, "record_words")) != kRecordWords)
    throw ValidationError("dataset record layout mismatch");
  if (c.payload.size() != total * kRecordWords * 4)
    throw ValidationError("dataset payload size does not match record count");
  io::PayloadReader r(c.payload);
  LoadedDataset out;
  out.scenes.reserve(total);
  SplitCounts counts{};
  auto enum_field = [&](std::uint32_t limit, const char* what) {
    const std::uint32_t v = r.u32();
    if (v >= limit) throw ValidationError(std::string("dataset: bad ") + what);
    return v;
  };
  for (std::size_t i = 0; i < total; ++i) {
    Scene s;
    s.map_kind = MapKind(enum_field(4, "map kind"));
    s.drive_side = DriveSide(enum_field(2, "drive side"));
    s.split = Split(enum_field(5, "split"));
    s.roundabout_tag = enum_field(2, "tag") != 0;
    const std::uint32_t n = enum_field(kMaxNeighbors + 1, "neighbor count");
    const std::uint64_t lo = r.u32(), hi = r.u32();
    s.seed = lo | (hi << 32);
    s.road.lanes_left = r.u32();
    s.road.lanes_right = r.u32();
    s.road.oncoming_lanes = r.u32();
    s.road.lane_width = r.f32();
    s.road.feature_distance = r.f32();
    s.road.feature_width = r.f32();
    for (double& v : s.state) v = r.f32();
    for (Point& p : s.past) { p[0] = r.f32(); p[1] = r.f32(); }
    for (Point& p : s.future) { p[0] = r.f32(); p[1] = r.f32(); }
    s.neighbors.resize(n);
    for (std::size_t k = 0; k < kMaxNeighbors; ++k)
      for (std::size_t t = 0; t < kPastLen; ++t) {
        const double x = r.f32(), y = r.f32();
        if (k < n) s.neighbors[k][t] = {x, y};
      }
    ++counts[std::size_t(s.split)];
    out.scenes.push_back(std::move(s));
  }
  for (Split sp : kAllSplits)
    if (std::stoull(io::lookup(c.manifest.meta, "count." + std::string(to_string(sp)))) !=
        counts[std::size_t(sp)])
      throw ValidationError("dataset: split counts disagree with manifest");
  out.manifest = std::move(c.manifest);
  return out;
}

std::vector<std::size_t> select(const std::vector<Scene>& scenes, Split split) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scenes.size(); ++i)
    if (scenes[i].split == split) idx.push_back(i);
  return idx;
}

}  // namespace isap::scene
