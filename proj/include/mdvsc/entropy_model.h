#ifndef MDVSC_ENTROPY_MODEL_H_
#define MDVSC_ENTROPY_MODEL_H_

#include <span>
#include <vector>

#include "mdvsc/nn.h"
#include "mdvsc/transform_codec.h"

namespace mdvsc {

inline constexpr double kSigmaMin = 0.01;
inline constexpr double kLikelihoodFloor = 1e-9;

enum class QuantMode { kTrain, kEval };

// Hyper latent z for a batch of feature maps (spatially reduced 4x).
struct HyperLatent {
  Tensor<float> z;
  bool quantized = false;
};

// Per-element Gaussian scale, >= kSigmaMin.
using ScaleField = Tensor<float>;
// Per-element bit cost aligned with a feature map.
using EntropyMap = Tensor<float>;

template <typename T>
class HyperEncoder {
 public:
  HyperEncoder() = default;
  HyperEncoder(const CodecConfig& cfg, Rng& rng);
  Tensor<T> forward(const Tensor<T>& w) const;
  Tensor<T> forward_train(const Tensor<T>& w);
  Tensor<T> backward(const Tensor<T>& grad_z);
  void collect(std::vector<Param<T>*>& out);

 private:
  Conv2d<T> first_;
  Conv2d<T> second_;
  Tensor<T> saved_w_;
  Tensor<T> saved_hidden_;
};

// Maps z back to a scale field of the feature shape: two transposed stages,
// softplus, then a floor at kSigmaMin.
template <typename T>
class HyperDecoder {
 public:
  HyperDecoder() = default;
  HyperDecoder(const CodecConfig& cfg, Rng& rng);
  Tensor<T> forward(const Tensor<T>& z, int feature_h, int feature_w) const;
  Tensor<T> forward_train(const Tensor<T>& z, int feature_h, int feature_w);
  Tensor<T> backward(const Tensor<T>& grad_sigma);
  void collect(std::vector<Param<T>*>& out);

 private:
  ConvTranspose2d<T> first_;
  ConvTranspose2d<T> second_;
  Tensor<T> saved_z_;
  Tensor<T> saved_hidden_;
  Tensor<T> saved_pre_;
};

// Round half away from zero.
double round_half_away(double v);

// Train: v + u, u ~ U(-1/2, 1/2). Eval: round_half_away(v).
template <typename T>
void quantize_in_place(std::span<T> values, QuantMode mode, Rng& rng);
std::vector<float> quantize(std::span<const float> values, QuantMode mode, Rng& rng);

// Probability of the unit bin around w under N(0, sigma) convolved with
// U(-1/2, 1/2), floored at kLikelihoodFloor.
double likelihood(double w, double sigma);

struct LikelihoodGrad {
  double p;
  double dp_dw;
  double dp_dsigma;
};
// As likelihood(); derivatives are zero where the floor is active.
LikelihoodGrad likelihood_with_grad(double w, double sigma);

std::vector<float> likelihood(std::span<const float> w, std::span<const float> sigma);

// -log2(p).
double bits_of(double p);

}  // namespace mdvsc

#endif  // MDVSC_ENTROPY_MODEL_H_
