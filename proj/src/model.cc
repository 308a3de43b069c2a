#include "mdvsc/model.h"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mdvsc {
namespace {

template <typename T>
size_t count_params(const std::vector<Param<T>*>& ps) {
  size_t n = 0;
  for (const auto* p : ps) n += p->value.size();
  return n;
}

void require_nonempty(const std::vector<Tensor<float>>& maps, const char* what) {
  if (maps.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
}

}  // namespace

template <typename T>
MdvscNet<T>::MdvscNet(const CodecConfig& cfg, uint64_t seed) : config(cfg) {
  cfg.validate();
  Rng rng(seed);
  latent = LatentTransformer<T>(cfg, rng);
  encoder = JsccEncoder<T>(cfg, rng);
  cfe = CommonFeatureExtractor<T>(cfg, rng);
  hyper_encoder = HyperEncoder<T>(cfg, rng);
  hyper_decoder = HyperDecoder<T>(cfg, rng);
  decoder = JsccDecoder<T>(cfg, rng);
  inverse = LatentInverse<T>(cfg, rng);
}

template <typename T>
std::vector<Param<T>*> MdvscNet<T>::params() {
  std::vector<Param<T>*> out;
  latent.collect(out);
  encoder.collect(out);
  cfe.collect(out);
  hyper_encoder.collect(out);
  hyper_decoder.collect(out);
  decoder.collect(out);
  inverse.collect(out);
  return out;
}

template <typename T>
std::vector<const Param<T>*> MdvscNet<T>::params() const {
  auto mutable_ps = const_cast<MdvscNet<T>*>(this)->params();
  return {mutable_ps.begin(), mutable_ps.end()};
}

template <typename T>
size_t MdvscNet<T>::transmitter_param_count() const {
  auto& self = const_cast<MdvscNet<T>&>(*this);
  std::vector<Param<T>*> ps;
  self.latent.collect(ps);
  self.encoder.collect(ps);
  self.cfe.collect(ps);
  self.hyper_encoder.collect(ps);
  self.hyper_decoder.collect(ps);
  return count_params(ps);
}

template <typename T>
size_t MdvscNet<T>::receiver_param_count() const {
  auto& self = const_cast<MdvscNet<T>&>(*this);
  std::vector<Param<T>*> ps;
  self.decoder.collect(ps);
  self.inverse.collect(ps);
  return count_params(ps);
}

template struct MdvscNet<float>;
template struct MdvscNet<double>;

ModelState ModelState::create(const CodecConfig& cfg, uint64_t seed) {
  ModelState s;
  s.net = MdvscNet<float>(cfg, seed);
  for (const auto* p : s.net.params()) {
    s.adam_m.emplace_back(p->value.n, p->value.c, p->value.h, p->value.w);
    s.adam_v.emplace_back(p->value.n, p->value.c, p->value.h, p->value.w);
  }
  return s;
}

Tensor<float> stack_maps(const std::vector<Tensor<float>>& maps) {
  return concat_images(maps);
}

std::vector<Tensor<float>> unstack_maps(const Tensor<float>& t) {
  std::vector<Tensor<float>> out;
  out.reserve(t.n);
  for (int i = 0; i < t.n; ++i) out.push_back(t.slice(i, 1));
  return out;
}

std::vector<LatentMap> latent_forward(const Gop& gop, const ModelState& state) {
  validate_gop(gop);
  const Frame& f = gop.front();
  if (f.channels != state.config().frame_channels) {
    throw std::invalid_argument("latent_forward: frame has " +
                                std::to_string(f.channels) + " channels, model expects " +
                                std::to_string(state.config().frame_channels));
  }
  if (f.height % 2 != 0 || f.width % 2 != 0) {
    throw std::invalid_argument("latent_forward: frame size must be even");
  }
  return unstack_maps(state.net.latent.forward(gop_to_tensor<float>(gop)));
}

std::vector<FeatureMap> jscc_encode(const std::vector<LatentMap>& latents,
                                    const ModelState& state) {
  require_nonempty(latents, "jscc_encode");
  const Tensor<float> x = stack_maps(latents);
  const int f = 1 << state.config().jscc_blocks;
  if (x.c != state.config().channel_width || x.h % f != 0 || x.w % f != 0) {
    throw std::invalid_argument("jscc_encode: latent shape " + x.shape_string() +
                                " incompatible with codec config");
  }
  return unstack_maps(state.net.encoder.forward(x));
}

std::vector<LatentMap> jscc_decode(const std::vector<FeatureMap>& features,
                                   const ModelState& state) {
  require_nonempty(features, "jscc_decode");
  const Tensor<float> x = stack_maps(features);
  if (x.c != state.config().channel_width) {
    throw std::invalid_argument("jscc_decode: feature shape " + x.shape_string() +
                                " incompatible with codec config");
  }
  return unstack_maps(state.net.decoder.forward(x));
}

Gop latent_inverse(const std::vector<LatentMap>& latents, const ModelState& state,
                   int64_t gop_id) {
  require_nonempty(latents, "latent_inverse");
  const Tensor<float> x = stack_maps(latents);
  if (x.c != state.config().channel_width) {
    throw std::invalid_argument("latent_inverse: latent shape " + x.shape_string() +
                                " incompatible with codec config");
  }
  return tensor_to_gop(state.net.inverse.forward(x), gop_id, /*clamp=*/true);
}

FeatureMap extract_common(const std::vector<FeatureMap>& features,
                          const ModelState& state) {
  require_nonempty(features, "extract_common");
  const Tensor<float> y = stack_maps(features);
  if (!state.config().use_cfe) return Tensor<float>(1, y.c, y.h, y.w);
  return state.net.cfe.forward(y, y.n);
}

FeatureSet split(const std::vector<FeatureMap>& features, const ModelState& state) {
  FeatureSet set;
  set.common = extract_common(features, state);
  set.common_transmitted = state.config().use_cfe;
  const int n = static_cast<int>(features.size());
  set.individuals = unstack_maps(subtract_common(stack_maps(features), set.common, n));
  return set;
}

std::vector<FeatureMap> combine(const FeatureSet& set) {
  validate_feature_set(set);
  return unstack_maps(
      add_common(stack_maps(set.individuals), set.common, set.gop_size()));
}

HyperLatent hyper_encode(const FeatureMap& w, const ModelState& state) {
  if (w.c != state.config().channel_width) {
    throw std::invalid_argument("hyper_encode: feature shape " + w.shape_string() +
                                " incompatible with codec config");
  }
  return {state.net.hyper_encoder.forward(w), false};
}

ScaleField hyper_decode(const HyperLatent& z, const ModelState& state, int feature_h,
                        int feature_w) {
  if (z.z.c != state.config().hyper_width) {
    throw std::invalid_argument("hyper_decode: latent shape " + z.z.shape_string() +
                                " incompatible with codec config");
  }
  if (feature_h <= 0) feature_h = 4 * z.z.h;
  if (feature_w <= 0) feature_w = 4 * z.z.w;
  return state.net.hyper_decoder.forward(z.z, feature_h, feature_w);
}

Tensor<float> entropy_bits(const Tensor<float>& maps, const ModelState& state,
                           QuantMode mode, Rng& rng) {
  HyperLatent z = hyper_encode(maps, state);
  quantize_in_place(std::span<float>(z.z.data), mode, rng);
  z.quantized = true;
  const ScaleField sigma = hyper_decode(z, state, maps.h, maps.w);
  Tensor<float> w = maps;
  quantize_in_place(std::span<float>(w.data), mode, rng);
  Tensor<float> bits(maps.n, maps.c, maps.h, maps.w);
  for (size_t i = 0; i < bits.data.size(); ++i) {
    bits.data[i] = static_cast<float>(bits_of(likelihood(w.data[i], sigma.data[i])));
  }
  return bits;
}

double EntropyMaps::total_bits() const {
  double s = std::accumulate(common.data.begin(), common.data.end(), 0.0);
  for (const auto& m : individuals) s = std::accumulate(m.data.begin(), m.data.end(), s);
  return s;
}

EntropyMaps entropy_map(const FeatureSet& set, const ModelState& state,
                        QuantMode mode, Rng& rng) {
  validate_feature_set(set);
  std::vector<Tensor<float>> maps = set.individuals;
  maps.push_back(set.common);
  // Unit transmit power over the transmitted maps, matching training.
  double energy = 0.0;
  size_t count = 0;
  for (size_t k = 0; k < maps.size(); ++k) {
    if (k + 1 == maps.size() && !set.common_transmitted) break;
    for (float v : maps[k].data) energy += static_cast<double>(v) * v;
    count += maps[k].size();
  }
  const double rms = count ? std::sqrt(energy / static_cast<double>(count)) : 0.0;
  if (rms > 0.0) {
    for (auto& m : maps) {
      for (float& v : m.data) v = static_cast<float>(v / rms);
    }
  }
  std::vector<Tensor<float>> bits =
      unstack_maps(entropy_bits(stack_maps(maps), state, mode, rng));
  EntropyMaps out;
  out.common = std::move(bits.back());
  bits.pop_back();
  out.individuals = std::move(bits);
  return out;
}

}  // namespace mdvsc
