#ifndef MDVSC_CHANNEL_H_
#define MDVSC_CHANNEL_H_

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "mdvsc/rng.h"

namespace mdvsc {

struct ChannelConfig {
  // +infinity disables noise.
  double snr_db = 10.0;
  uint64_t seed = 0;

  bool noiseless() const { return std::isinf(snr_db) && snr_db > 0; }
  // sigma^2 = 10^(-snr/10) for unit signal power.
  double noise_variance() const;
};

template <typename T>
struct Normalized {
  std::vector<T> symbols;
  // Root-mean-square of the input; multiply to de-normalize.
  double scale = 1.0;
};

double mean_power(std::span<const float> v);
double mean_power(std::span<const double> v);

// Scales to unit mean power. Throws on an empty or all-zero input.
template <typename T>
Normalized<T> power_normalize(std::span<const T> symbols) {
  if (symbols.empty()) throw std::invalid_argument("zero-power signal: empty input");
  const double p = mean_power(symbols);
  if (!(p > 0.0)) throw std::invalid_argument("zero-power signal");
  Normalized<T> out;
  out.scale = std::sqrt(p);
  out.symbols.resize(symbols.size());
  const double inv = 1.0 / out.scale;
  for (size_t i = 0; i < symbols.size(); ++i) {
    out.symbols[i] = static_cast<T>(symbols[i] * inv);
  }
  return out;
}

template <typename T>
std::vector<T> denormalize(std::span<const T> symbols, double scale) {
  std::vector<T> out(symbols.size());
  for (size_t i = 0; i < symbols.size(); ++i) out[i] = static_cast<T>(symbols[i] * scale);
  return out;
}

// Draws the noise vector e ~ N(0, sigma^2) that awgn() would add.
std::vector<double> awgn_noise(size_t count, const ChannelConfig& config, Rng& rng);

template <typename T>
std::vector<T> awgn(std::span<const T> symbols, const ChannelConfig& config, Rng& rng) {
  std::vector<T> out(symbols.begin(), symbols.end());
  if (config.noiseless()) return out;
  const std::vector<double> e = awgn_noise(symbols.size(), config, rng);
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(out[i] + e[i]);
  return out;
}

// 10 log10(P(clean) / P(noisy - clean)); +infinity when they are equal.
double measure_snr_db(std::span<const float> clean, std::span<const float> noisy);
double measure_snr_db(std::span<const double> clean, std::span<const double> noisy);

// Channel as a swappable stage. Symbols are unit-power on input.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual std::vector<float> transmit(std::span<const float> symbols, Rng& rng) const = 0;
};

class AwgnChannel : public Channel {
 public:
  explicit AwgnChannel(ChannelConfig config) : config_(config) {}
  std::vector<float> transmit(std::span<const float> symbols, Rng& rng) const override {
    return awgn(symbols, config_, rng);
  }
  const ChannelConfig& config() const { return config_; }

 private:
  ChannelConfig config_;
};

}  // namespace mdvsc

#endif  // MDVSC_CHANNEL_H_
