#include "mdvsc/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mdvsc {
namespace {

using Clock = std::chrono::steady_clock;

class StageTimer {
 public:
  explicit StageTimer(double* slot) : slot_(slot), start_(Clock::now()) {}
  ~StageTimer() {
    if (slot_) *slot_ += std::chrono::duration<double>(Clock::now() - start_).count();
  }

 private:
  double* slot_;
  Clock::time_point start_;
};

double* slot(StageTiming* t, double StageTiming::*member) {
  return t ? &(t->*member) : nullptr;
}

// Prefixes "stage: " unless the message already starts with it.
std::string with_tag(const char* stage, const char* what) {
  const std::string tag = std::string(stage) + ": ";
  const std::string msg = what;
  return msg.rfind(tag, 0) == 0 ? msg : tag + msg;
}

template <typename F>
auto tagged(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(with_tag(stage, e.what()));
  } catch (const std::exception& e) {
    throw std::runtime_error(with_tag(stage, e.what()));
  }
}

template <typename T>
T checked_narrow(int64_t v, const char* what) {
  if (v < 0 || v > static_cast<int64_t>(std::numeric_limits<T>::max())) {
    throw std::invalid_argument(std::string(what) + " out of range for the payload header");
  }
  return static_cast<T>(v);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Population variance, shifted by the first sample so equal samples give
// exactly zero.
double variance_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  double sq = 0.0;
  for (double x : v) {
    const double d = x - v.front();
    s += d;
    sq += d * d;
  }
  const double n = static_cast<double>(v.size());
  return std::max(0.0, sq / n - (s / n) * (s / n));
}

}  // namespace

Payload encode_gop(const Gop& gop, const ModelState& state, const Budget& budget,
                   const TransmitOptions& options, Rng& rng, StageTiming* timing) {
  validate_gop(gop);
  budget.validate();
  const int64_t sd = source_dimension(gop);
  std::vector<LatentMap> latents;
  {
    StageTimer t(slot(timing, &StageTiming::latent));
    latents = tagged("latent_forward", [&] { return latent_forward(gop, state); });
  }
  std::vector<FeatureMap> features;
  {
    StageTimer t(slot(timing, &StageTiming::encode));
    features = tagged("jscc_encode", [&] { return jscc_encode(latents, state); });
  }
  FeatureSet set;
  {
    StageTimer t(slot(timing, &StageTiming::split));
    set = tagged("split", [&] { return split(features, state); });
  }
  EntropyMaps entropies;
  {
    StageTimer t(slot(timing, &StageTiming::entropy));
    entropies =
        tagged("entropy_map", [&] { return entropy_map(set, state, QuantMode::kEval, rng); });
  }
  if (options.drop_common_map) set.common_transmitted = false;
  Payload p;
  {
    StageTimer t(slot(timing, &StageTiming::mask));
    p.plan = tagged("build_mask",
                    [&] { return build_mask(entropies, budget, options.policy, set, sd, rng); });
    p.body = tagged("apply_mask", [&] { return apply_mask(set, p.plan); }).symbols;
  }
  const FeatureMap& shape = set.common;
  p.gop_id = checked_narrow<uint32_t>(gop.gop_id, "gop_id");
  p.gop_size = checked_narrow<uint8_t>(gop.size(), "gop_size");
  p.feature_channels = checked_narrow<uint16_t>(shape.c, "feature channels");
  p.feature_height = checked_narrow<uint16_t>(shape.h, "feature height");
  p.feature_width = checked_narrow<uint16_t>(shape.w, "feature width");
  p.power_scale = 1.0f;
  return p;
}

Payload pass_channel(const Payload& payload, const ChannelConfig& channel, Rng& rng) {
  Payload out = payload;
  if (channel.noiseless() || payload.body.empty()) return out;
  const std::span<const float> body(payload.body);
  if (!(mean_power(body) > 0.0)) return out;
  const Normalized<float> unit = power_normalize(body);
  out.body = awgn(std::span<const float>(unit.symbols), channel, rng);
  out.power_scale = static_cast<float>(unit.scale * payload.power_scale);
  return out;
}

Gop decode_payload(const Payload& payload, const ModelState& state, StageTiming* timing) {
  std::vector<LatentMap> latents;
  {
    StageTimer t(slot(timing, &StageTiming::decode));
    SymbolStream stream{payload.body, {}};
    if (payload.power_scale != 1.0f) {
      stream.symbols = denormalize(std::span<const float>(payload.body), payload.power_scale);
    }
    const FeatureSet set = tagged("zero_fill", [&] {
      return zero_fill(stream, payload.plan, payload.feature_channels, payload.feature_height,
                       payload.feature_width);
    });
    const std::vector<FeatureMap> features = tagged("combine", [&] { return combine(set); });
    latents = tagged("jscc_decode", [&] { return jscc_decode(features, state); });
  }
  StageTimer t(slot(timing, &StageTiming::inverse));
  return tagged("latent_inverse",
                [&] { return latent_inverse(latents, state, payload.gop_id); });
}

TransmitResult transmit(const Gop& gop, const ModelState& state, const Budget& budget,
                        const ChannelConfig& channel, const TransmitOptions& options,
                        Rng& rng) {
  TransmitResult r;
  const Payload sent = encode_gop(gop, state, budget, options, rng, &r.timing);
  {
    StageTimer t(&r.timing.channel);
    r.payload = tagged("channel", [&] { return pass_channel(sent, channel, rng); });
  }
  const std::vector<uint8_t> wire = tagged("serialize", [&] { return serialize(r.payload); });
  const Payload received = tagged("deserialize", [&] { return deserialize(wire); });
  r.recon = decode_payload(received, state, &r.timing);
  r.recon.gop_id = gop.gop_id;
  for (int i = 0; i < gop.size(); ++i) r.recon.frames[i].index = gop.frames[i].index;
  r.cbr = cbr_of(received.plan.total_kept, source_dimension(gop));
  r.quality = evaluate_quality(gop, r.recon);
  return r;
}

Gop reconstruct_noiseless(const Gop& gop, const ModelState& state) {
  const FeatureSet set = split(jscc_encode(latent_forward(gop, state), state), state);
  Gop out = latent_inverse(jscc_decode(combine(set), state), state, gop.gop_id);
  for (int i = 0; i < gop.size(); ++i) out.frames[i].index = gop.frames[i].index;
  return out;
}

EvaluationReport evaluate_gops(const std::vector<Gop>& gops, const ModelState& state,
                               const Budget& budget, const ChannelConfig& channel,
                               const TransmitOptions& options) {
  if (gops.empty()) throw std::invalid_argument("evaluate: no GOPs");
  EvaluationReport rep;
  std::vector<double> cbrs, psnrs, msdb, ms;
  for (size_t g = 0; g < gops.size(); ++g) {
    Rng rng = Rng::substream(channel.seed, g);
    TransmitResult r = transmit(gops[g], state, budget, channel, options, rng);
    cbrs.push_back(r.cbr.cbr);
    psnrs.push_back(r.quality.psnr_db);
    msdb.push_back(r.quality.ms_ssim_db);
    ms.push_back(r.quality.ms_ssim);
    rep.quality.per_frame.insert(rep.quality.per_frame.end(), r.quality.per_frame.begin(),
                                 r.quality.per_frame.end());
    rep.per_gop_cbr.push_back(r.cbr);
    rep.per_gop_quality.push_back(std::move(r.quality));
    const StageTiming& t = r.timing;
    rep.timing.latent += t.latent;
    rep.timing.encode += t.encode;
    rep.timing.split += t.split;
    rep.timing.entropy += t.entropy;
    rep.timing.mask += t.mask;
    rep.timing.channel += t.channel;
    rep.timing.decode += t.decode;
    rep.timing.inverse += t.inverse;
  }
  if (gops.size() == 1) {
    rep.quality = rep.per_gop_quality.front();
  } else {
    rep.quality.psnr_db = mean_of(psnrs);
    rep.quality.ms_ssim = mean_of(ms);
    rep.quality.ms_ssim_db = mean_of(msdb);
  }
  rep.cbr_mean = mean_of(cbrs);
  rep.cbr_variance = variance_of(cbrs);
  rep.psnr_variance = variance_of(psnrs);
  rep.ms_ssim_db_variance = variance_of(msdb);
  return rep;
}

EvaluationReport evaluate(const std::vector<Frame>& video, const ModelState& state,
                          const Budget& budget, const ChannelConfig& channel, int gop_size,
                          const TransmitOptions& options) {
  return evaluate_gops(split_into_gops(video, gop_size, PadPolicy::kDropTail), state, budget,
                       channel, options);
}

}  // namespace mdvsc
