#include "mdvsc/transform_codec.h"

#include <stdexcept>
#include <string>

namespace mdvsc {

int CodecConfig::total_downsample() const { return 1 << (1 + jscc_blocks); }

void CodecConfig::validate() const {
  if (channel_width < 1 || jscc_blocks < 1 || residual_per_block < 0 ||
      resample_kernel < 1 || residual_kernel < 1 || hyper_width < 1 ||
      frame_channels < 1) {
    throw std::invalid_argument("codec config values must be positive");
  }
  if (latent_downsample != 2) {
    throw std::invalid_argument("latent_downsample must be 2 (one stride-2 stage)");
  }
  if (residual_kernel % 2 == 0 || resample_kernel % 2 == 0) {
    throw std::invalid_argument("kernel sizes must be odd");
  }
}

void CodecConfig::check_frame_size(int height, int width) const {
  const int f = total_downsample();
  if (height % f != 0 || width % f != 0) {
    throw std::invalid_argument("frame " + std::to_string(height) + "x" +
                                std::to_string(width) + " not divisible by " +
                                std::to_string(f));
  }
}

template <typename T>
LatentTransformer<T>::LatentTransformer(const CodecConfig& cfg, Rng& rng)
    : stage_("latent", cfg.frame_channels, cfg.channel_width, cfg.resample_kernel,
             cfg.residual_per_block, cfg.residual_kernel, rng) {}

template <typename T>
JsccEncoder<T>::JsccEncoder(const CodecConfig& cfg, Rng& rng) {
  for (int b = 0; b < cfg.jscc_blocks; ++b) {
    stages_.emplace_back("jscc_enc" + std::to_string(b), cfg.channel_width,
                         cfg.channel_width, cfg.resample_kernel,
                         cfg.residual_per_block, cfg.residual_kernel, rng);
  }
}

template <typename T>
Tensor<T> JsccEncoder<T>::forward(const Tensor<T>& latents) const {
  Tensor<T> y = latents;
  for (const auto& s : stages_) y = s.forward(y);
  return y;
}

template <typename T>
Tensor<T> JsccEncoder<T>::forward_train(const Tensor<T>& latents) {
  Tensor<T> y = latents;
  for (auto& s : stages_) y = s.forward_train(y);
  return y;
}

template <typename T>
Tensor<T> JsccEncoder<T>::backward(const Tensor<T>& g) {
  Tensor<T> out = g;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) out = it->backward(out);
  return out;
}

template <typename T>
void JsccEncoder<T>::collect(std::vector<Param<T>*>& out) {
  for (auto& s : stages_) s.collect(out);
}

template <typename T>
JsccDecoder<T>::JsccDecoder(const CodecConfig& cfg, Rng& rng) {
  for (int b = 0; b < cfg.jscc_blocks; ++b) {
    stages_.emplace_back("jscc_dec" + std::to_string(b), cfg.channel_width,
                         cfg.channel_width, cfg.resample_kernel,
                         cfg.residual_per_block, cfg.residual_kernel,
                         /*activate=*/true, rng);
  }
}

template <typename T>
Tensor<T> JsccDecoder<T>::forward(const Tensor<T>& features) const {
  Tensor<T> y = features;
  for (const auto& s : stages_) y = s.forward(y);
  return y;
}

template <typename T>
Tensor<T> JsccDecoder<T>::forward_train(const Tensor<T>& features) {
  Tensor<T> y = features;
  for (auto& s : stages_) y = s.forward_train(y);
  return y;
}

template <typename T>
Tensor<T> JsccDecoder<T>::backward(const Tensor<T>& g) {
  Tensor<T> out = g;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) out = it->backward(out);
  return out;
}

template <typename T>
void JsccDecoder<T>::collect(std::vector<Param<T>*>& out) {
  for (auto& s : stages_) s.collect(out);
}

template <typename T>
LatentInverse<T>::LatentInverse(const CodecConfig& cfg, Rng& rng)
    : stage_("inverse", cfg.channel_width, cfg.frame_channels, cfg.resample_kernel,
             cfg.residual_per_block, cfg.residual_kernel, /*activate=*/false, rng) {}

#define MDVSC_INSTANTIATE(T)          \
  template class LatentTransformer<T>; \
  template class JsccEncoder<T>;       \
  template class JsccDecoder<T>;       \
  template class LatentInverse<T>;

MDVSC_INSTANTIATE(float)
MDVSC_INSTANTIATE(double)

#undef MDVSC_INSTANTIATE

}  // namespace mdvsc
