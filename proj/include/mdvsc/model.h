#ifndef MDVSC_MODEL_H_
#define MDVSC_MODEL_H_

#include <cstdint>
#include <vector>

#include "mdvsc/entropy_model.h"
#include "mdvsc/model_division.h"
#include "mdvsc/transform_codec.h"
#include "mdvsc/video_model.h"

namespace mdvsc {

// Every learnable network of the codec.
template <typename T>
struct MdvscNet {
  CodecConfig config;
  LatentTransformer<T> latent;
  JsccEncoder<T> encoder;
  CommonFeatureExtractor<T> cfe;
  HyperEncoder<T> hyper_encoder;
  HyperDecoder<T> hyper_decoder;
  JsccDecoder<T> decoder;
  LatentInverse<T> inverse;

  MdvscNet() = default;
  MdvscNet(const CodecConfig& cfg, uint64_t seed);

  // Stable order; names are unique and used as checkpoint keys.
  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;

  // f_a + g_a + CFE + hyperprior networks.
  size_t transmitter_param_count() const;
  // g_s + f_s.
  size_t receiver_param_count() const;
};

struct ScheduleState {
  double lr_init = 1e-4;
  double lr_min = 1e-6;
  int64_t total_steps = 0;
};

// Learnable parameters, optimizer moments and schedule position.
struct ModelState {
  MdvscNet<float> net;
  std::vector<Tensor<float>> adam_m;
  std::vector<Tensor<float>> adam_v;
  int64_t step = 0;
  ScheduleState schedule;

  static ModelState create(const CodecConfig& cfg, uint64_t seed);
  const CodecConfig& config() const { return net.config; }
};

// --- transform codec --------------------------------------------------------

std::vector<LatentMap> latent_forward(const Gop& gop, const ModelState& state);
std::vector<FeatureMap> jscc_encode(const std::vector<LatentMap>& latents,
                                    const ModelState& state);
std::vector<LatentMap> jscc_decode(const std::vector<FeatureMap>& features,
                                   const ModelState& state);
// Frames clamped to [0,1].
Gop latent_inverse(const std::vector<LatentMap>& latents, const ModelState& state,
                   int64_t gop_id = 0);

// --- model division ---------------------------------------------------------

FeatureMap extract_common(const std::vector<FeatureMap>& features,
                          const ModelState& state);
FeatureSet split(const std::vector<FeatureMap>& features, const ModelState& state);
std::vector<FeatureMap> combine(const FeatureSet& set);

// --- entropy model ----------------------------------------------------------

HyperLatent hyper_encode(const FeatureMap& w, const ModelState& state);
// Target shape defaults to 4x the hyper latent's spatial size.
ScaleField hyper_decode(const HyperLatent& z, const ModelState& state,
                        int feature_h = 0, int feature_w = 0);

struct EntropyMaps {
  EntropyMap common;
  std::vector<EntropyMap> individuals;

  double total_bits() const;
};

// bits = -log2 P(quantize(w) | hyper_decode(quantize(hyper_encode(w)))), with
// w the maps scaled to unit mean power over the transmitted maps.
EntropyMaps entropy_map(const FeatureSet& set, const ModelState& state,
                        QuantMode mode, Rng& rng);

// Batched form over a (maps x C x h x w) tensor; used by the pipeline.
Tensor<float> entropy_bits(const Tensor<float>& maps, const ModelState& state,
                           QuantMode mode, Rng& rng);

// Stacks vectors of single-image tensors and splits them back.
Tensor<float> stack_maps(const std::vector<Tensor<float>>& maps);
std::vector<Tensor<float>> unstack_maps(const Tensor<float>& t);

}  // namespace mdvsc

#endif  // MDVSC_MODEL_H_
