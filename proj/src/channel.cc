#include "mdvsc/channel.h"

namespace mdvsc {
namespace {

template <typename T>
double power(std::span<const T> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s / static_cast<double>(v.size());
}

template <typename T>
double snr_db(std::span<const T> clean, std::span<const T> noisy) {
  if (clean.size() != noisy.size()) {
    throw std::invalid_argument("measure_snr_db: length mismatch");
  }
  double noise = 0.0;
  for (size_t i = 0; i < clean.size(); ++i) {
    const double d = static_cast<double>(noisy[i]) - static_cast<double>(clean[i]);
    noise += d * d;
  }
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  noise /= static_cast<double>(clean.size());
  return 10.0 * std::log10(power(clean) / noise);
}

}  // namespace

double ChannelConfig::noise_variance() const {
  if (noiseless()) return 0.0;
  if (!std::isfinite(snr_db)) throw std::invalid_argument("snr_db must be finite or +inf");
  return std::pow(10.0, -snr_db / 10.0);
}

double mean_power(std::span<const float> v) { return power(v); }
double mean_power(std::span<const double> v) { return power(v); }

std::vector<double> awgn_noise(size_t count, const ChannelConfig& config, Rng& rng) {
  std::vector<double> e(count, 0.0);
  if (config.noiseless()) return e;
  const double sd = std::sqrt(config.noise_variance());
  for (auto& v : e) v = sd * rng.normal();
  return e;
}

double measure_snr_db(std::span<const float> clean, std::span<const float> noisy) {
  return snr_db(clean, noisy);
}
double measure_snr_db(std::span<const double> clean, std::span<const double> noisy) {
  return snr_db(clean, noisy);
}

}  // namespace mdvsc
