#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "mdvsc/data.h"
#include "mdvsc/metrics.h"

using namespace mdvsc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("mdvsc_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SceneSpec still_scene() {
  SceneSpec s;
  s.height = 32;
  s.width = 32;
  s.background_seed = 3;
  s.has_overlay = false;
  s.frame_count = 5;
  MovingShape m;
  m.x = 4;
  m.y = 6;
  m.width = 5;
  m.height = 4;
  m.color = {10, 200, 90};
  s.shapes = {m};
  return s;
}

double pairwise_mse(const Gop& gop) {
  double total = 0.0;
  int pairs = 0;
  for (int a = 0; a < gop.size(); ++a) {
    for (int b = a + 1; b < gop.size(); ++b) {
      total += mse(gop.frames[a], gop.frames[b]);
      ++pairs;
    }
  }
  return total / pairs;
}

}  // namespace

TEST_CASE("zero velocity without noise gives identical frames") {
  Rng rng(1);
  const auto frames = generate_clip(still_scene(), rng);
  REQUIRE(frames.size() == 5);
  for (const auto& f : frames) CHECK(f.pixels == frames.front().pixels);
}

TEST_CASE("the overlay is pixel-identical across frames") {
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    SceneSpec spec = random_scene(rng, 64, 64, 6);
    spec.noise_level = 0.05;
    const auto frames = generate_clip(spec, rng);
    const Rect& o = spec.overlay;
    for (const auto& f : frames) {
      for (int y = o.y; y < o.y + o.height; ++y) {
        for (int x = o.x; x < o.x + o.width; ++x) {
          for (int c = 0; c < 3; ++c) CHECK(f.at(y, x, c) == frames.front().at(y, x, c));
        }
      }
    }
  }
}

TEST_CASE("shapes translate by their velocity with toroidal wrap") {
  SceneSpec spec = still_scene();
  spec.shapes[0].vx = 7;
  spec.shapes[0].vy = -3;
  spec.shapes[0].x = 28;
  Rng rng(3);
  const auto frames = generate_clip(spec, rng);
  const MovingShape& m = spec.shapes[0];
  auto wrap = [](int v, int n) { return ((v % n) + n) % n; };
  for (int t = 1; t < spec.frame_count; ++t) {
    for (int dy = 0; dy < m.height; ++dy) {
      for (int dx = 0; dx < m.width; ++dx) {
        const int y0 = wrap(m.y + dy, spec.height), x0 = wrap(m.x + dx, spec.width);
        const int yt = wrap(m.y + dy + t * m.vy, spec.height);
        const int xt = wrap(m.x + dx + t * m.vx, spec.width);
        for (int c = 0; c < 3; ++c) CHECK(frames[t].at(yt, xt, c) == frames[0].at(y0, x0, c));
      }
    }
  }
}

TEST_CASE("seeded clips are reproducible") {
  const ToyDataset a{.seed = 5, .clip_count = 10};
  const ToyDataset b{.seed = 5, .clip_count = 10};
  for (int i = 0; i < 10; ++i) {
    const Gop x = a.clip(i);
    const Gop y = b.clip(i);
    REQUIRE(x.size() == 4);
    for (int k = 0; k < 4; ++k) CHECK(x.frames[k].pixels == y.frames[k].pixels);
  }
  const ToyDataset c{.seed = 6};
  CHECK(c.clip(0).frames[0].pixels != a.clip(0).frames[0].pixels);
}

TEST_CASE("jump GOPs are less similar than normal GOPs") {
  Rng rng(4);
  double jump_total = 0.0, normal_total = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<SceneSpec> specs;
    for (int k = 0; k < 4; ++k) specs.push_back(random_scene(rng, 64, 64, 4));
    const Gop jump = make_jump_gop(specs, rng);
    CHECK(jump.size() == 4);
    Gop normal;
    normal.frames = generate_clip(specs[0], rng);
    jump_total += pairwise_mse(jump);
    normal_total += pairwise_mse(normal);
  }
  CHECK(jump_total > normal_total);

  const SceneSpec one = still_scene();
  const Gop repeated = make_jump_gop({one}, rng, 3);
  for (const auto& f : repeated.frames) CHECK(f.pixels == repeated.frames[0].pixels);
}

TEST_CASE("PPM directory round trip within 8-bit rounding") {
  TempDir dir("ppm");
  Rng rng(5);
  SceneSpec spec = random_scene(rng, 24, 40, 3);
  spec.noise_level = 0.1;
  auto frames = generate_clip(spec, rng);
  frames[1].pixels[0] = 0.123456f;
  write_frames(frames, dir.path);
  const auto back = read_frames(dir.path);
  REQUIRE(back.size() == 3);
  for (size_t k = 0; k < frames.size(); ++k) {
    CHECK(back[k].height == 24);
    CHECK(back[k].width == 40);
    for (size_t i = 0; i < frames[k].pixels.size(); ++i) {
      CHECK(std::abs(back[k].pixels[i] - frames[k].pixels[i]) <= 1.0f / 510.0f + 1e-7f);
    }
  }
}

TEST_CASE("frames are ordered numerically") {
  TempDir dir("order");
  for (int n : {10, 2, 1}) {
    Frame f(12, 12, 3);
    for (float& v : f.pixels) v = static_cast<float>(n) / 20.0f;
    write_ppm(f, dir.path / ("frame_" + std::to_string(n) + ".ppm"));
  }
  const auto frames = read_frames(dir.path);
  REQUIRE(frames.size() == 3);
  CHECK(frames[0].index == 1);
  CHECK(frames[1].index == 2);
  CHECK(frames[2].index == 10);
  CHECK(frames[2].pixels[0] == doctest::Approx(0.5).epsilon(1e-2));
}

TEST_CASE("frame directory errors") {
  TempDir empty("empty");
  try {
    read_frames(empty.path);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("no frames") != std::string::npos);
  }

  TempDir mixed("mixed");
  write_ppm(Frame(8, 8, 3), mixed.path / "frame_000000.ppm");
  write_ppm(Frame(8, 8, 3), mixed.path / "frame_000001.ppm");
  write_ppm(Frame(16, 8, 3), mixed.path / "frame_000002.ppm");
  try {
    read_frames(mixed.path);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("frame_000002.ppm") != std::string::npos);
    CHECK(std::string(e.what()).find("frame_000001.ppm") == std::string::npos);
  }

  TempDir bad("bad");
  std::ofstream(bad.path / "frame_000000.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS(read_frames(bad.path));
}

TEST_CASE("raw planar frames round trip") {
  TempDir dir("raw");
  Rng rng(6);
  Frame f(9, 13, 3);
  for (float& v : f.pixels) v = static_cast<float>(rng.uniform());
  write_raw_frame(f, dir.path / "a.raw", RawDtype::kF32);
  CHECK(read_raw_frame(dir.path / "a.raw").pixels == f.pixels);
  CHECK(fs::file_size(dir.path / "a.raw") == 16 + 4 * f.pixels.size());

  write_raw_frame(f, dir.path / "b.raw", RawDtype::kU8);
  const Frame q = read_raw_frame(dir.path / "b.raw");
  CHECK(fs::file_size(dir.path / "b.raw") == 16 + f.pixels.size());
  for (size_t i = 0; i < f.pixels.size(); ++i) {
    CHECK(std::abs(q.pixels[i] - f.pixels[i]) <= 1.0f / 510.0f + 1e-7f);
  }
  std::ifstream is(dir.path / "b.raw", std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  CHECK(std::string(magic, 4) == "MDVR");
}
