#ifndef MDVSC_TRANSFORM_CODEC_H_
#define MDVSC_TRANSFORM_CODEC_H_

#include <string>
#include <vector>

#include "mdvsc/nn.h"
#include "mdvsc/tensor.h"

namespace mdvsc {

struct CodecConfig {
  int channel_width = 128;
  int latent_downsample = 2;
  int jscc_blocks = 3;
  int residual_per_block = 3;
  int resample_kernel = 5;
  int residual_kernel = 3;
  int hyper_width = 64;
  int frame_channels = 3;
  // When false the common-feature path is bypassed: common = 0 and only the
  // individual maps carry information.
  bool use_cfe = true;

  // 2^(1 + jscc_blocks).
  int total_downsample() const;
  void validate() const;
  // Throws unless frames of this size can pass through the codec.
  void check_frame_size(int height, int width) const;
};

// Latent per frame: (H/2) x (W/2) x channel_width.
using LatentMap = Tensor<float>;
// Semantic feature per frame: (H/16) x (W/16) x channel_width by default.
using FeatureMap = Tensor<float>;

// f_a: one downsampling convolution and residual blocks.
template <typename T>
class LatentTransformer {
 public:
  LatentTransformer() = default;
  LatentTransformer(const CodecConfig& cfg, Rng& rng);
  Tensor<T> forward(const Tensor<T>& frames) const { return stage_.forward(frames); }
  Tensor<T> forward_train(const Tensor<T>& frames) { return stage_.forward_train(frames); }
  Tensor<T> backward(const Tensor<T>& g) { return stage_.backward(g); }
  void collect(std::vector<Param<T>*>& out) { stage_.collect(out); }

 private:
  DownStage<T> stage_;
};

// g_a: jscc_blocks downsampling stages.
template <typename T>
class JsccEncoder {
 public:
  JsccEncoder() = default;
  JsccEncoder(const CodecConfig& cfg, Rng& rng);
  Tensor<T> forward(const Tensor<T>& latents) const;
  Tensor<T> forward_train(const Tensor<T>& latents);
  Tensor<T> backward(const Tensor<T>& g);
  void collect(std::vector<Param<T>*>& out);

 private:
  std::vector<DownStage<T>> stages_;
};

// g_s: mirror of g_a with transposed convolutions.
template <typename T>
class JsccDecoder {
 public:
  JsccDecoder() = default;
  JsccDecoder(const CodecConfig& cfg, Rng& rng);
  Tensor<T> forward(const Tensor<T>& features) const;
  Tensor<T> forward_train(const Tensor<T>& features);
  Tensor<T> backward(const Tensor<T>& g);
  void collect(std::vector<Param<T>*>& out);

 private:
  std::vector<UpStage<T>> stages_;
};

// f_s: residual blocks then a transposed convolution back to colour space.
// Output is unclamped; callers clamp for evaluation.
template <typename T>
class LatentInverse {
 public:
  LatentInverse() = default;
  LatentInverse(const CodecConfig& cfg, Rng& rng);
  Tensor<T> forward(const Tensor<T>& latents) const { return stage_.forward(latents); }
  Tensor<T> forward_train(const Tensor<T>& latents) { return stage_.forward_train(latents); }
  Tensor<T> backward(const Tensor<T>& g) { return stage_.backward(g); }
  void collect(std::vector<Param<T>*>& out) { stage_.collect(out); }

 private:
  UpStage<T> stage_;
};

}  // namespace mdvsc

#endif  // MDVSC_TRANSFORM_CODEC_H_
