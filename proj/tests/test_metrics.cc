#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "mdvsc/metrics.h"
#include "mdvsc/rng.h"

using namespace mdvsc;

namespace {

// Closed-form patterns shared with the numpy/scikit-image reference script
// that produced the frozen values below.
Frame pattern(int kind) {
  Frame f(64, 64, 3);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = 0.5 + 0.4 * std::sin(0.3 * x + 0.2 * y + c);
        if (kind == 1) v += 0.15 * std::cos(0.7 * x - 0.45 * y + 2 * c);
        f.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return f;
}

Frame random_frame(int h, int w, uint64_t seed) {
  Rng rng(seed);
  Frame f(h, w, 3);
  for (float& v : f.pixels) v = static_cast<float>(rng.uniform());
  return f;
}

Frame with_noise(const Frame& f, double stddev, Rng& rng) {
  Frame out = f;
  for (float& v : out.pixels) {
    v = static_cast<float>(std::clamp(v + stddev * rng.normal(), 0.0, 1.0));
  }
  return out;
}

}  // namespace

TEST_CASE("mse examples") {
  const Frame a = random_frame(8, 8, 1);
  CHECK(mse(a, a) == 0.0);
  Frame b(4, 4, 3, 0);
  Frame c = b;
  for (float& v : c.pixels) v = 0.1f;
  CHECK(mse(b, c) == doctest::Approx(0.01).epsilon(1e-6));

  const Frame x = random_frame(16, 12, 2);
  const Frame y = random_frame(16, 12, 3);
  double s = 0.0;
  for (int yy = 0; yy < 16; ++yy) {
    for (int xx = 0; xx < 12; ++xx) {
      for (int ch = 0; ch < 3; ++ch) {
        const double d = static_cast<double>(x.at(yy, xx, ch)) - y.at(yy, xx, ch);
        s += d * d;
      }
    }
  }
  CHECK(std::abs(mse(x, y) - s / (16 * 12 * 3)) <= 1e-12);
  CHECK_THROWS(mse(x, random_frame(8, 8, 4)));
}

TEST_CASE("psnr examples") {
  CHECK(psnr_from_mse(0.01) == doctest::Approx(20.0));
  CHECK(psnr_from_mse(0.001) == doctest::Approx(30.0));
  const Frame a = random_frame(8, 8, 5);
  CHECK(std::isinf(psnr(a, a)));
}

TEST_CASE("psnr decreases as noise variance grows") {
  const Frame ref = pattern(0);
  double previous = kInfinity;
  for (double sd : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    double sum = 0.0;
    for (int trial = 0; trial < 4; ++trial) {
      Rng rng(100 + trial);
      sum += psnr(ref, with_noise(ref, sd, rng));
    }
    CHECK(sum / 4 < previous);
    previous = sum / 4;
  }
}

TEST_CASE("ssim matches the scikit-image reference") {
  CHECK(ssim(pattern(0), pattern(1)) == doctest::Approx(0.772634269496).epsilon(1e-6));
}

TEST_CASE("ms_ssim matches the numpy reference at three levels") {
  const double ref = 0.931439153021;
  CHECK(ms_ssim(pattern(0), pattern(1), 3) == doctest::Approx(ref).epsilon(1e-6));
}

TEST_CASE("ms_ssim examples and level validation") {
  const Frame a = pattern(0);
  CHECK(ms_ssim(a, a, 3) == doctest::Approx(1.0).epsilon(1e-12));
  Frame inv = a;
  for (float& v : inv.pixels) v = 1.0f - v;
  CHECK(ms_ssim(a, inv, 3) < 0.5);

  CHECK(max_ms_ssim_levels(64, 64) == 3);
  CHECK(max_ms_ssim_levels(176, 176) == 5);
  CHECK(max_ms_ssim_levels(256, 256) == 5);
  try {
    ms_ssim(a, a, 5);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("max valid levels is 3") != std::string::npos);
  }
}

TEST_CASE("ms_ssim is symmetric") {
  const Frame a = random_frame(64, 64, 7);
  Rng rng(8);
  const Frame b = with_noise(a, 0.1, rng);
  CHECK(std::abs(ms_ssim(a, b, 3) - ms_ssim(b, a, 3)) <= 1e-9);
}

TEST_CASE("ms_ssim_db examples") {
  CHECK(ms_ssim_db(0.9) == doctest::Approx(10.0));
  CHECK(ms_ssim_db(0.99) == doctest::Approx(20.0));
  CHECK(ms_ssim_db(0.0) == 0.0);
  CHECK(std::isinf(ms_ssim_db(1.0)));
  CHECK_THROWS_AS(ms_ssim_db(1.5), std::invalid_argument);
  CHECK_THROWS_AS(ms_ssim_db(-0.1), std::invalid_argument);
}

TEST_CASE("evaluate_quality reports the GOP-level numbers") {
  Gop ref, rec;
  Rng rng(3);
  for (int i = 0; i < 4; ++i) {
    ref.frames.push_back(random_frame(64, 64, 20 + i));
    rec.frames.push_back(with_noise(ref.frames.back(), 0.05, rng));
  }
  const QualityReport q = evaluate_quality(ref, rec);
  REQUIRE(q.per_frame.size() == 4);
  double mean_mse = 0.0;
  for (int i = 0; i < 4; ++i) mean_mse += mse(ref.frames[i], rec.frames[i]) / 4;
  CHECK(q.psnr_db == doctest::Approx(psnr_from_mse(mean_mse)));
  CHECK(q.ms_ssim_db == doctest::Approx(ms_ssim_db(q.ms_ssim)));
  CHECK(std::isinf(evaluate_quality(ref, ref).psnr_db));
}
