#include <vector>

#include "doctest.h"
#include "mdvsc/rng.h"
#include "mdvsc/video_model.h"

using namespace mdvsc;

namespace {

std::vector<Frame> video(int count, int h = 4, int w = 4, int c = 3) {
  std::vector<Frame> v;
  Rng rng(count);
  for (int t = 0; t < count; ++t) {
    Frame f(h, w, c, t);
    for (float& p : f.pixels) p = static_cast<float>(rng.uniform());
    v.push_back(std::move(f));
  }
  return v;
}

Gop gop_of(int n, int h, int w, int c) {
  Gop g;
  for (int i = 0; i < n; ++i) g.frames.emplace_back(h, w, c, i);
  return g;
}

}  // namespace

TEST_CASE("split_into_gops examples") {
  const auto v7 = video(7);
  const auto drop = split_into_gops(v7, 6, PadPolicy::kDropTail);
  REQUIRE(drop.size() == 1);
  CHECK(drop[0].size() == 6);

  const auto v6 = video(6);
  const auto exact = split_into_gops(v6, 6);
  REQUIRE(exact.size() == 1);
  for (int i = 0; i < 6; ++i) CHECK(exact[0].frames[i].pixels == v6[i].pixels);

  const auto pad = split_into_gops(v7, 6, PadPolicy::kRepeatLast);
  REQUIRE(pad.size() == 2);
  CHECK(pad[1].size() == 6);
  for (const Frame& f : pad[1].frames) CHECK(f.pixels == v7[6].pixels);
}

TEST_CASE("split_into_gops errors") {
  try {
    split_into_gops({}, 4);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("no frames") != std::string::npos);
  }
  CHECK_THROWS(split_into_gops(video(4), 0));
  auto mixed = video(4);
  mixed.push_back(Frame(8, 8, 3));
  CHECK_THROWS(split_into_gops(mixed, 2));
}

TEST_CASE("drop_tail split reproduces a prefix of the input") {
  const auto v = video(23);
  for (int n : {1, 2, 4, 6, 7}) {
    const auto gops = split_into_gops(v, n);
    size_t t = 0;
    for (const Gop& g : gops) {
      for (const Frame& f : g.frames) {
        CHECK(f.pixels == v[t].pixels);
        ++t;
      }
    }
    CHECK(t == v.size() / n * n);
  }
}

TEST_CASE("source_dimension examples") {
  CHECK(source_dimension(gop_of(6, 256, 256, 3)) == 1179648);
  CHECK(source_dimension(gop_of(1, 1, 1, 1)) == 1);
  CHECK(source_dimension(gop_of(4, 64, 64, 3)) == 49152);
}

TEST_CASE("cbr_of examples") {
  const CbrReport r = cbr_of(11796, 1179648);
  CHECK(r.cbr == doctest::Approx(0.0099998).epsilon(1e-6));
  CHECK(cbr_of(0, 100).cbr == 0.0);
  CHECK(cbr_of(49152, 49152).cbr == 1.0);
  CHECK_THROWS(cbr_of(5, 0));

  SymbolStream s;
  s.symbols.assign(10, 1.0f);
  s.per_unit_counts = {4, 4, 2};
  const Gop g = gop_of(2, 4, 4, 3);
  const CbrReport rs = cbr_of(s, g);
  CHECK(rs.symbol_count == 10);
  CHECK(rs.source_dim == 96);
  CHECK(rs.cbr == 10.0 / 96.0);
}

TEST_CASE("cbr_of is linear in the symbol count") {
  const int64_t sd = 49152;
  for (int64_t k = 1; k < 100; ++k) {
    CHECK(cbr_of(3 * k, sd).cbr == doctest::Approx(3 * cbr_of(k, sd).cbr).epsilon(1e-15));
  }
}

TEST_CASE("gop tensors round-trip") {
  Gop g;
  g.frames = video(3, 4, 6);
  const Tensor<float> t = gop_to_tensor<float>(g);
  CHECK(t.n == 3);
  CHECK(t.c == 3);
  CHECK(t.h == 4);
  CHECK(t.w == 6);
  CHECK(t.at(1, 2, 3, 5) == g.frames[1].at(3, 5, 2));
  const Gop back = tensor_to_gop(t, 9, true);
  CHECK(back.gop_id == 9);
  for (int i = 0; i < 3; ++i) CHECK(back.frames[i].pixels == g.frames[i].pixels);

  Tensor<float> wide = t;
  wide.data[0] = 1.7f;
  wide.data[1] = -0.3f;
  const Gop clamped = tensor_to_gop(wide, 0, true);
  CHECK(clamped.frames[0].at(0, 0, 0) == 1.0f);
  CHECK(clamped.frames[0].at(0, 1, 0) == 0.0f);
}

TEST_CASE("validate_frame rejects out-of-range pixels") {
  Frame f(2, 2, 3);
  f.pixels[0] = 1.5f;
  CHECK_THROWS(validate_frame(f));
  f.pixels[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS(validate_frame(f));
}
