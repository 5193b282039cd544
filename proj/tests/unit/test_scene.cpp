#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "isap/dataset.hpp"
#include "isap/errors.hpp"
#include "isap/scene.hpp"
#include "test_util.hpp"

using namespace isap;
using namespace isap::scene;

namespace {

double dist(Point a, Point b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

GeneratorConfig quiet(MapKind kind, double speed) {
  GeneratorConfig c;
  c.fixed_map = kind;
  c.fixed_side = DriveSide::left;
  c.fixed_speed = speed;
  c.zero_noise = true;
  c.max_neighbors = 0;
  return c;
}

}  // namespace

TEST_CASE("stopped agent stays at the origin") {
  const Scene s = generate_scene(0, quiet(MapKind::straight, 0.0));
  for (const Point& p : s.past) CHECK(dist(p, {0, 0}) <= 0.1);
  for (const Point& p : s.future) CHECK(dist(p, {0, 0}) <= 0.1);
  CHECK(speed_heuristic(s) < 0.2);
}

TEST_CASE("stopped agents under default noise") {
  GeneratorConfig c;
  c.fixed_speed = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) CHECK(speed_heuristic(generate_scene(seed, c)) < 0.2);
}

TEST_CASE("generation is deterministic per seed") {
  GeneratorConfig c;
  CHECK(generate_scene(0, c) == generate_scene(0, c));
  CHECK(generate_scene(17, c) == generate_scene(17, c));
  CHECK_FALSE(generate_scene(17, c) == generate_scene(18, c));
}

TEST_CASE("constant speed on a straight road without noise") {
  const Scene s = generate_scene(0, quiet(MapKind::straight, 5.0));
  CHECK(dist(s.past.back(), {0, 0}) == 0.0);
  CHECK(dist({0, 0}, s.future[0]) == doctest::Approx(2.5).epsilon(1e-6));
  for (std::size_t t = 1; t < kFutureLen; ++t)
    CHECK(dist(s.future[t - 1], s.future[t]) == doctest::Approx(2.5).epsilon(1e-6));
  for (std::size_t t = 1; t < kPastLen; ++t)
    CHECK(dist(s.past[t - 1], s.past[t]) == doctest::Approx(2.5).epsilon(1e-6));
  CHECK(s.future.back()[1] > 0);
  CHECK(s.state[0] == doctest::Approx(5.0));
}

TEST_CASE("scene invariants hold across random scenes") {
  GeneratorConfig c;
  c.speed = {8, 6, 0, 25};
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const Scene s = generate_scene(seed, c);
    CAPTURE(seed);
    CHECK(s.past.back() == Point{0, 0});
    Point prev = s.past.front();
    for (std::size_t t = 1; t < kPastLen; ++t) {
      CHECK(dist(prev, s.past[t]) <= c.max_speed * kStepSeconds + 0.15);
      prev = s.past[t];
    }
    for (const Point& p : s.future) {
      CHECK(dist(prev, p) <= c.max_speed * kStepSeconds + 0.15);
      prev = p;
    }
    CHECK(s.neighbors.size() <= c.max_neighbors);
    CHECK(s.roundabout_tag == (s.map_kind == MapKind::roundabout));
  }
}

TEST_CASE("generator config errors") {
  GeneratorConfig c;
  c.map_weights = {0, 0, 0, 0};
  CHECK_THROWS_AS(generate_scene(0, c), ValidationError);
  GeneratorConfig d;
  d.speed = {3, 2, -1, 5};
  CHECK_THROWS_AS(generate_scene(0, d), ValidationError);
  GeneratorConfig e;
  e.fixed_speed = -2.0;
  CHECK_THROWS_AS(generate_scene(0, e), ValidationError);
}

TEST_CASE("raster channels") {
  const Scene stopped = generate_scene(0, quiet(MapKind::straight, 0.0));
  const Raster r = rasterize(stopped);
  REQUIRE(r.pixels.size() == 3 * 64 * 64);
  for (float v : r.pixels) CHECK((v >= 0.0f && v <= 1.0f));
  for (float v : r.channel(1)) CHECK(v == 0.0f);

  // At 1 m per pixel the origin falls in row 40, column 32.
  const auto px = to_pixel({0, 0}, 64);
  REQUIRE(px.has_value());
  CHECK((*px)[0] == 40);
  CHECK((*px)[1] == 32);
  std::size_t rmin = 64, rmax = 0, cmin = 64, cmax = 0;
  for (std::size_t row = 0; row < 64; ++row)
    for (std::size_t col = 0; col < 64; ++col)
      if (r.at(2, row, col) > 0) {
        rmin = std::min(rmin, row); rmax = std::max(rmax, row);
        cmin = std::min(cmin, col); cmax = std::max(cmax, col);
      }
  REQUIRE(rmax >= rmin);
  CHECK(rmax - rmin < 3);
  CHECK(cmax - cmin < 3);
  CHECK((rmin <= 40 && 40 <= rmax && cmin <= 32 && 32 <= cmax));
}

TEST_CASE("straight road raster is mirror symmetric") {
  const Scene s = generate_scene(3, quiet(MapKind::straight, 4.0));
  REQUIRE(s.road.lanes_left == s.road.lanes_right);
  const Raster r = rasterize(s);
  std::size_t mismatches = 0;
  for (std::size_t row = 0; row < 64; ++row)
    for (std::size_t col = 0; col < 32; ++col)
      if (r.at(0, row, col) != r.at(0, row, 63 - col)) ++mismatches;
  CHECK(mismatches == 0);
}

TEST_CASE("rasterize is pure and traces neighbours") {
  GeneratorConfig c;
  c.max_neighbors = 6;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Scene s = generate_scene(seed, c);
    const Raster a = rasterize(s), b = rasterize(s);
    CHECK(a.pixels == b.pixels);
    double road = 0;
    for (float v : a.channel(0)) road += v;
    CHECK(road > 0);
  }
  CHECK_FALSE(to_pixel({100, 0}, 64).has_value());
}

TEST_CASE("speed heuristic examples") {
  const std::array<Point, 2> a{{{0, 0}, {0, 3}}};
  const std::array<Point, 2> b{{{0, 0}, {3, 4}}};
  CHECK(speed_heuristic(a) == 3.0);
  CHECK(speed_heuristic(b) == 5.0);
  const std::array<Point, 1> one{{{0, 0}}};
  CHECK_THROWS_AS(speed_heuristic(std::span<const Point>(one)), ValidationError);
  // Only the most recent second counts.
  Scene s;
  s.past = {{{-100, -100}, {-50, 0}, {0, -9.99}, {0, -5}, {0, 0}}};
  CHECK(speed_heuristic(s) == doctest::Approx(9.99));
}

TEST_CASE("speed split threshold semantics") {
  Scene s;
  s.past = {{{0, 0}, {0, 0}, {0, -9.99}, {0, -5}, {0, 0}}};
  CHECK(split_speed(s, 10.0) == Domain::id);
  s.past[2] = {0, -10.0};
  CHECK(split_speed(s, 10.0) == Domain::ood);
  s.past[2] = {0, 0};
  CHECK(split_speed(s, 10.0) == Domain::id);
}

TEST_CASE("map split rule") {
  Scene s;
  s.drive_side = DriveSide::left;
  s.map_kind = MapKind::straight;
  CHECK(split_map(s) == Domain::id);
  s.map_kind = MapKind::intersection;
  CHECK(split_map(s) == Domain::id);
  s.drive_side = DriveSide::right;
  s.map_kind = MapKind::roundabout;
  s.roundabout_tag = true;
  CHECK(split_map(s) == Domain::ood);
  s.map_kind = MapKind::straight;
  CHECK(split_map(s) == Domain::ood);
  s.roundabout_tag = false;
  CHECK_THROWS_AS(split_map(s), ValidationError);
}

TEST_CASE("dataset splits") {
  for (Experiment e : {Experiment::speed, Experiment::map}) {
    DatasetConfig cfg{.experiment = e, .scale = 0.01};
    const auto counts = split_counts(cfg);
    const auto scenes = build_dataset(cfg);
    std::size_t total = 0;
    for (Split sp : kAllSplits) {
      CHECK(select(scenes, sp).size() == counts[std::size_t(sp)]);
      total += counts[std::size_t(sp)];
    }
    CHECK(scenes.size() == total);
    std::set<std::uint64_t> seeds;
    for (const Scene& s : scenes) {
      const Domain d = e == Experiment::speed ? split_speed(s, cfg.speed_threshold) : split_map(s);
      CHECK((d == Domain::ood) == is_ood(s.split));
      seeds.insert(s.seed);
    }
    CHECK(seeds.size() == scenes.size());
  }
  CHECK(split_counts({.scale = 0.01})[0] == 257);
  CHECK(split_counts({.scale = 0.1}) == SplitCounts{2567, 734, 727, 252, 327});
}

TEST_CASE("leak fraction controls straight roads in the map OOD set") {
  DatasetConfig cfg{.experiment = Experiment::map, .scale = 0.5, .leak_fraction = 0.0};
  std::size_t straight = 0;
  for (const Scene& s : build_dataset(cfg))
    if (is_ood(s.split) && s.map_kind != MapKind::roundabout) ++straight;
  CHECK(straight == 0);

  cfg.leak_fraction = 0.15;
  const auto leaky = build_dataset(cfg);
  std::size_t ood = 0;
  straight = 0;
  for (const Scene& s : leaky)
    if (is_ood(s.split)) {
      ++ood;
      if (s.map_kind == MapKind::straight) ++straight;
    }
  const double frac = double(straight) / double(ood);
  CHECK(frac > 0.08);
  CHECK(frac < 0.22);

  // ID splits do not depend on the leak fraction.
  cfg.leak_fraction = 0.0;
  const auto clean = build_dataset(cfg);
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (!is_ood(clean[i].split)) CHECK(clean[i] == leaky[i]);
}

TEST_CASE("dataset persistence") {
  TempDir dir;
  DatasetConfig cfg{.scale = 0.004};
  auto scenes = build_dataset(cfg);
  scenes.resize(100);
  const auto m = persist(scenes, dir / "d.ini", echo(cfg));
  CHECK(m.record_words == kRecordWords);
  CHECK(m.payload_bytes == 100 * kRecordWords * 4);
  const LoadedDataset back = load_dataset(dir / "d.ini");
  CHECK(back.scenes == scenes);
  CHECK(back.manifest.payload_hash == m.payload_hash);
  CHECK(back.manifest.config == echo(cfg));

  SUBCASE("repeat gives the same hash") {
    const auto m2 = persist(build_dataset(cfg), dir / "e.ini", echo(cfg));
    const auto m3 = persist(build_dataset(cfg), dir / "f.ini", echo(cfg));
    CHECK(m2.payload_hash == m3.payload_hash);
  }
  SUBCASE("tampered byte") {
    std::fstream f(dir / "d.ini.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(1234);
    f.put('\x5a');
    f.close();
    CHECK_THROWS_AS(load_dataset(dir / "d.ini"), ValidationError);
  }
  SUBCASE("truncated payload") {
    std::filesystem::resize_file(dir / "d.ini.bin", 1000);
    CHECK_THROWS_AS(load_dataset(dir / "d.ini"), ValidationError);
  }
  SUBCASE("tampered config") {
    std::ifstream in(dir / "d.ini");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto pos = text.find("scale");
    REQUIRE(pos != std::string::npos);
    text.replace(text.find('=', pos) + 1, 4, " 0.9");
    std::ofstream(dir / "d.ini") << text;
    CHECK_THROWS_AS(load_dataset(dir / "d.ini"), ValidationError);
  }
  SUBCASE("empty list") {
    const auto e = persist({}, dir / "empty.ini", echo(cfg));
    CHECK(e.counts == SplitCounts{});
    CHECK(load_dataset(dir / "empty.ini").scenes.empty());
  }
}
