#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "mdvsc/channel.h"

using namespace mdvsc;

namespace {

std::vector<float> gaussian(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

}  // namespace

TEST_CASE("power_normalize examples") {
  const std::vector<float> v{3.0f, 4.0f};
  const Normalized<float> n = power_normalize(std::span<const float>(v));
  CHECK(n.symbols[0] == doctest::Approx(0.84853).epsilon(1e-5));
  CHECK(n.symbols[1] == doctest::Approx(1.13137).epsilon(1e-5));
  CHECK(n.scale == doctest::Approx(std::sqrt(12.5)));
  CHECK(mean_power(std::span<const float>(n.symbols)) == doctest::Approx(1.0).epsilon(1e-6));

  const std::vector<float> unit{1.0f, -1.0f, 1.0f, -1.0f};
  CHECK(power_normalize(std::span<const float>(unit)).scale == 1.0);

  const std::vector<float> big = gaussian(1000000, 1);
  const Normalized<float> nb = power_normalize(std::span<const float>(big));
  CHECK(std::abs(mean_power(std::span<const float>(nb.symbols)) - 1.0) <= 1e-6);
}

TEST_CASE("power_normalize rejects zero power") {
  const std::vector<float> zeros(8, 0.0f);
  try {
    power_normalize(std::span<const float>(zeros));
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("zero-power signal") != std::string::npos);
  }
}

TEST_CASE("denormalize inverts power_normalize") {
  const std::vector<float> v = gaussian(1000, 2);
  const Normalized<float> n = power_normalize(std::span<const float>(v));
  const std::vector<float> back = denormalize(std::span<const float>(n.symbols), n.scale);
  for (size_t i = 0; i < v.size(); ++i) {
    CHECK(std::abs(back[i] - v[i]) <= 1e-6 * std::max(1.0f, std::abs(v[i])));
  }
}

TEST_CASE("awgn noise variance and identity at infinite SNR") {
  ChannelConfig cfg;
  cfg.snr_db = 10.0;
  CHECK(cfg.noise_variance() == doctest::Approx(0.1));
  const std::vector<float> v = gaussian(1000, 3);
  Rng rng(4);
  ChannelConfig clean;
  clean.snr_db = std::numeric_limits<double>::infinity();
  CHECK(awgn(std::span<const float>(v), clean, rng) == v);
}

TEST_CASE("empirical SNR matches the target within 0.2 dB") {
  const std::vector<float> v = gaussian(1000000, 5);
  const Normalized<float> n = power_normalize(std::span<const float>(v));
  for (double snr : {0.0, 10.0, 15.0}) {
    ChannelConfig cfg;
    cfg.snr_db = snr;
    Rng rng(6);
    const std::vector<float> noisy = awgn(std::span<const float>(n.symbols), cfg, rng);
    const double measured =
        measure_snr_db(std::span<const float>(n.symbols), std::span<const float>(noisy));
    CHECK(std::abs(measured - snr) <= 0.2);
  }
}

TEST_CASE("measure_snr_db examples") {
  const std::vector<double> clean{1.0, -1.0, 1.0, -1.0};
  const std::vector<double> noisy{1.1, -0.9, 1.1, -0.9};
  CHECK(measure_snr_db(std::span<const double>(clean), std::span<const double>(noisy)) ==
        doctest::Approx(20.0));
  CHECK(std::isinf(measure_snr_db(std::span<const double>(clean),
                                  std::span<const double>(clean))));
  const std::vector<double> shorter{1.0};
  CHECK_THROWS(measure_snr_db(std::span<const double>(clean), std::span<const double>(shorter)));
}

TEST_CASE("noise is uncorrelated with the symbols") {
  const size_t n = 1000000;
  const std::vector<float> v = gaussian(n, 7);
  ChannelConfig cfg;
  cfg.snr_db = 5.0;
  Rng rng(8);
  const std::vector<float> noisy = awgn(std::span<const float>(v), cfg, rng);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double e = static_cast<double>(noisy[i]) - v[i];
    sxy += e * v[i];
    sxx += static_cast<double>(v[i]) * v[i];
    syy += e * e;
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("AwgnChannel is a swappable channel") {
  ChannelConfig cfg;
  cfg.snr_db = 10.0;
  std::unique_ptr<Channel> ch = std::make_unique<AwgnChannel>(cfg);
  const std::vector<float> v = gaussian(100, 9);
  Rng a(10), b(10);
  CHECK(ch->transmit(std::span<const float>(v), a) == awgn(std::span<const float>(v), cfg, b));
}
