#include "mdvsc/metrics.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mdvsc {
namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_shapes(const Frame& x, const Frame& y) {
  if (!x.same_shape(y)) throw std::invalid_argument("frame shape mismatch");
}

// Single-channel plane.
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

Plane channel_plane(const Frame& f, int c) {
  Plane p{f.height, f.width, std::vector<double>(static_cast<size_t>(f.height) * f.width)};
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) p.v[static_cast<size_t>(y) * f.width + x] = f.at(y, x, c);
  }
  return p;
}

Plane downsample(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(static_cast<size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      out.v[static_cast<size_t>(y) * out.w + x] =
          0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y + 1, 2 * x) + p.at(2 * y, 2 * x + 1) +
                  p.at(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

std::vector<double> gaussian_taps() {
  std::vector<double> g(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Separable "valid" filtering.
Plane filter_valid(const Plane& p, const std::vector<double>& g) {
  Plane tmp{p.h, p.w - kWindow + 1, {}};
  tmp.v.resize(static_cast<size_t>(tmp.h) * tmp.w);
  for (int y = 0; y < tmp.h; ++y) {
    for (int x = 0; x < tmp.w; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * p.at(y, x + k);
      tmp.v[static_cast<size_t>(y) * tmp.w + x] = s;
    }
  }
  Plane out{p.h - kWindow + 1, tmp.w, {}};
  out.v.resize(static_cast<size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * tmp.at(y + k, x);
      out.v[static_cast<size_t>(y) * out.w + x] = s;
    }
  }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.h, a.w, std::vector<double>(a.v.size())};
  for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

struct SsimTerms {
  double ssim;
  double cs;
};

SsimTerms ssim_terms(const Plane& a, const Plane& b, const std::vector<double>& g) {
  const Plane mu_a = filter_valid(a, g);
  const Plane mu_b = filter_valid(b, g);
  const Plane aa = filter_valid(product(a, a), g);
  const Plane bb = filter_valid(product(b, b), g);
  const Plane ab = filter_valid(product(a, b), g);
  double ssim_sum = 0.0, cs_sum = 0.0;
  for (size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = aa.v[i] - ma * ma;
    const double vb = bb.v[i] - mb * mb;
    const double cov = ab.v[i] - ma * mb;
    const double cs = (2.0 * cov + kC2) / (va + vb + kC2);
    const double lum = (2.0 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
    ssim_sum += lum * cs;
    cs_sum += cs;
  }
  const double n = static_cast<double>(mu_a.v.size());
  return {ssim_sum / n, cs_sum / n};
}

}  // namespace

double mse(const Frame& x, const Frame& y) {
  check_shapes(x, y);
  double s = 0.0;
  for (size_t i = 0; i < x.pixels.size(); ++i) {
    const double d = static_cast<double>(x.pixels[i]) - static_cast<double>(y.pixels[i]);
    s += d * d;
  }
  return s / static_cast<double>(x.pixels.size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return kInfinity;
  return 10.0 * std::log10(1.0 / mse_value);
}

double psnr(const Frame& x, const Frame& y) { return psnr_from_mse(mse(x, y)); }

int max_ms_ssim_levels(int height, int width) {
  int levels = 0;
  while ((kWindow << levels) <= std::min(height, width)) ++levels;
  return levels;
}

double ssim(const Frame& x, const Frame& y) {
  check_shapes(x, y);
  if (std::min(x.height, x.width) < kWindow) {
    throw std::invalid_argument("frame smaller than the 11x11 SSIM window");
  }
  const auto g = gaussian_taps();
  double total = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    total += ssim_terms(channel_plane(x, c), channel_plane(y, c), g).ssim;
  }
  return total / x.channels;
}

double ms_ssim(const Frame& x, const Frame& y, int levels, std::span<const double> weights) {
  check_shapes(x, y);
  if (levels < 1 || static_cast<size_t>(levels) > weights.size()) {
    throw std::invalid_argument("ms_ssim: levels must be in [1, " +
                                std::to_string(weights.size()) + "]");
  }
  const int max_levels = max_ms_ssim_levels(x.height, x.width);
  if (levels > max_levels) {
    throw std::invalid_argument("ms_ssim: frame " + std::to_string(x.height) + "x" +
                                std::to_string(x.width) + " too small for " +
                                std::to_string(levels) + " levels; max valid levels is " +
                                std::to_string(max_levels));
  }
  double wsum = 0.0;
  for (int j = 0; j < levels; ++j) wsum += weights[j];

  const auto g = gaussian_taps();
  double total = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    Plane a = channel_plane(x, c);
    Plane b = channel_plane(y, c);
    double value = 1.0;
    for (int j = 0; j < levels; ++j) {
      const SsimTerms t = ssim_terms(a, b, g);
      const double term = (j == levels - 1) ? t.ssim : t.cs;
      value *= std::pow(std::max(term, 0.0), weights[j] / wsum);
      if (j + 1 < levels) {
        a = downsample(a);
        b = downsample(b);
      }
    }
    total += value;
  }
  return std::clamp(total / x.channels, 0.0, 1.0);
}

double ms_ssim_db(double d) {
  if (!(d >= 0.0 && d <= 1.0)) {
    throw std::invalid_argument("ms_ssim_db: value outside [0,1]: " + std::to_string(d));
  }
  if (d == 1.0) return kInfinity;
  return -10.0 * std::log10(1.0 - d);
}

QualityReport evaluate_quality(const Gop& reference, const Gop& recon, int levels) {
  if (reference.size() != recon.size()) {
    throw std::invalid_argument("evaluate_quality: GOP sizes differ");
  }
  QualityReport r;
  if (reference.frames.empty()) return r;
  if (levels <= 0) {
    levels = std::min(5, max_ms_ssim_levels(reference.front().height,
                                             reference.front().width));
  }
  double mse_sum = 0.0;
  for (int n = 0; n < reference.size(); ++n) {
    FrameQuality q;
    const double m = mse(reference.frames[n], recon.frames[n]);
    mse_sum += m;
    q.psnr_db = psnr_from_mse(m);
    q.ms_ssim = ms_ssim(reference.frames[n], recon.frames[n], levels);
    q.ms_ssim_db = ms_ssim_db(q.ms_ssim);
    r.ms_ssim += q.ms_ssim;
    r.per_frame.push_back(q);
  }
  const double n = static_cast<double>(reference.size());
  // GOP PSNR from the mean MSE keeps the aggregate finite unless every frame
  // is exact.
  r.psnr_db = psnr_from_mse(mse_sum / n);
  r.ms_ssim /= n;
  r.ms_ssim_db = ms_ssim_db(r.ms_ssim);
  return r;
}

}  // namespace mdvsc
