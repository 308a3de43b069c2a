#include "mdvsc/entropy_model.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdvsc {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Numerically stable softplus and its derivative.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

template <typename T>
HyperEncoder<T>::HyperEncoder(const CodecConfig& cfg, Rng& rng)
    : first_("hyper_enc.conv1", cfg.channel_width, cfg.hyper_width,
             cfg.resample_kernel, 2, rng),
      second_("hyper_enc.conv2", cfg.hyper_width, cfg.hyper_width,
              cfg.resample_kernel, 2, rng) {}

template <typename T>
Tensor<T> HyperEncoder<T>::forward(const Tensor<T>& w) const {
  return second_.forward(leaky_relu(first_.forward(w)));
}

template <typename T>
Tensor<T> HyperEncoder<T>::forward_train(const Tensor<T>& w) {
  saved_w_ = w;
  saved_hidden_ = first_.forward(w);
  return second_.forward(leaky_relu(saved_hidden_));
}

template <typename T>
Tensor<T> HyperEncoder<T>::backward(const Tensor<T>& grad_z) {
  Tensor<T> g = second_.backward(leaky_relu(saved_hidden_), grad_z);
  g = leaky_relu_backward(saved_hidden_, g);
  return first_.backward(saved_w_, g);
}

template <typename T>
void HyperEncoder<T>::collect(std::vector<Param<T>*>& out) {
  first_.collect(out);
  second_.collect(out);
}

template <typename T>
HyperDecoder<T>::HyperDecoder(const CodecConfig& cfg, Rng& rng)
    : first_("hyper_dec.deconv1", cfg.hyper_width, cfg.hyper_width,
             cfg.resample_kernel, rng),
      second_("hyper_dec.deconv2", cfg.hyper_width, cfg.channel_width,
              cfg.resample_kernel, rng) {}

template <typename T>
Tensor<T> HyperDecoder<T>::forward(const Tensor<T>& z, int feature_h,
                                   int feature_w) const {
  const Tensor<T> hidden =
      first_.forward(z, (feature_h + 1) / 2, (feature_w + 1) / 2);
  Tensor<T> sigma = second_.forward(leaky_relu(hidden), feature_h, feature_w);
  for (auto& v : sigma.data) {
    v = static_cast<T>(std::max(softplus(static_cast<double>(v)), kSigmaMin));
  }
  return sigma;
}

template <typename T>
Tensor<T> HyperDecoder<T>::forward_train(const Tensor<T>& z, int feature_h,
                                         int feature_w) {
  saved_z_ = z;
  saved_hidden_ = first_.forward(z, (feature_h + 1) / 2, (feature_w + 1) / 2);
  saved_pre_ = second_.forward(leaky_relu(saved_hidden_), feature_h, feature_w);
  Tensor<T> sigma = saved_pre_;
  for (auto& v : sigma.data) {
    v = static_cast<T>(std::max(softplus(static_cast<double>(v)), kSigmaMin));
  }
  return sigma;
}

template <typename T>
Tensor<T> HyperDecoder<T>::backward(const Tensor<T>& grad_sigma) {
  Tensor<T> g = grad_sigma;
  for (size_t i = 0; i < g.data.size(); ++i) {
    const double pre = static_cast<double>(saved_pre_.data[i]);
    g.data[i] = softplus(pre) < kSigmaMin
                    ? T(0)
                    : static_cast<T>(g.data[i] * sigmoid(pre));
  }
  g = second_.backward(leaky_relu(saved_hidden_), g);
  g = leaky_relu_backward(saved_hidden_, g);
  return first_.backward(saved_z_, g);
}

template <typename T>
void HyperDecoder<T>::collect(std::vector<Param<T>*>& out) {
  first_.collect(out);
  second_.collect(out);
}

double round_half_away(double v) { return std::round(v); }

template <typename T>
void quantize_in_place(std::span<T> values, QuantMode mode, Rng& rng) {
  if (mode == QuantMode::kEval) {
    for (auto& v : values) v = static_cast<T>(round_half_away(static_cast<double>(v)));
    return;
  }
  for (auto& v : values) v = static_cast<T>(static_cast<double>(v) + rng.uniform() - 0.5);
}

std::vector<float> quantize(std::span<const float> values, QuantMode mode, Rng& rng) {
  std::vector<float> out(values.begin(), values.end());
  quantize_in_place(std::span<float>(out), mode, rng);
  return out;
}

LikelihoodGrad likelihood_with_grad(double w, double sigma) {
  // Symmetric in w; evaluating on |w| keeps both CDF terms in the accurate
  // upper tail of erfc.
  const double a = std::abs(w);
  const double upper = (a + 0.5) / sigma;
  const double lower = (a - 0.5) / sigma;
  const double p = 0.5 * (std::erfc(lower * kInvSqrt2) - std::erfc(upper * kInvSqrt2));
  if (!(p > kLikelihoodFloor)) return {kLikelihoodFloor, 0.0, 0.0};
  const double pdf_u = std_normal_pdf(upper);
  const double pdf_l = std_normal_pdf(lower);
  const double dp_da = (pdf_u - pdf_l) / sigma;
  const double dp_dsigma = -(upper * pdf_u - lower * pdf_l) / sigma;
  return {p, w < 0 ? -dp_da : dp_da, dp_dsigma};
}

double likelihood(double w, double sigma) { return likelihood_with_grad(w, sigma).p; }

std::vector<float> likelihood(std::span<const float> w, std::span<const float> sigma) {
  if (w.size() != sigma.size()) throw std::invalid_argument("likelihood: size mismatch");
  std::vector<float> out(w.size());
  for (size_t i = 0; i < w.size(); ++i) {
    out[i] = static_cast<float>(likelihood(w[i], std::max<double>(sigma[i], kSigmaMin)));
  }
  return out;
}

double bits_of(double p) { return -std::log2(p); }

#define MDVSC_INSTANTIATE(T)                                              \
  template class HyperEncoder<T>;                                         \
  template class HyperDecoder<T>;                                         \
  template void quantize_in_place(std::span<T>, QuantMode, Rng&);

MDVSC_INSTANTIATE(float)
MDVSC_INSTANTIATE(double)

#undef MDVSC_INSTANTIATE

}  // namespace mdvsc
