#ifndef MDVSC_PIPELINE_H_
#define MDVSC_PIPELINE_H_

#include <cstdint>
#include <vector>

#include "mdvsc/channel.h"
#include "mdvsc/metrics.h"
#include "mdvsc/model.h"
#include "mdvsc/vlc.h"

namespace mdvsc {

// Wall-clock seconds spent in each stage of one transmission.
struct StageTiming {
  double latent = 0.0;   // f_a
  double encode = 0.0;   // g_a
  double split = 0.0;    // common feature extraction
  double entropy = 0.0;  // hyperprior entropy maps
  double mask = 0.0;     // mask planning and symbol selection
  double channel = 0.0;  // power normalization and noise
  double decode = 0.0;   // zero fill, combine, g_s
  double inverse = 0.0;  // f_s

  double transmitter() const { return latent + encode + split + entropy + mask; }
  double receiver() const { return decode + inverse; }
};

struct TransmitOptions {
  DropPolicy policy = DropPolicy::kEntropy;
  // Discards the common map at the transmitter even when the model has a
  // common feature extractor; individuals stay residuals against it.
  bool drop_common_map = false;
};

struct TransmitResult {
  Payload payload;  // as received, after the channel
  Gop recon;
  CbrReport cbr;
  QualityReport quality;
  StageTiming timing;
};

// Transmitter half: source GOP to a clean payload whose body holds the kept
// feature values unscaled (power_scale 1). `rng` feeds the random drop
// policy only.
Payload encode_gop(const Gop& gop, const ModelState& state, const Budget& budget,
                   const TransmitOptions& options, Rng& rng, StageTiming* timing = nullptr);

// Physical layer: normalizes the body to unit mean power, records the scale
// in the header and adds AWGN. A noiseless channel is a diagnostic
// pass-through that leaves the payload untouched.
Payload pass_channel(const Payload& payload, const ChannelConfig& channel, Rng& rng);

// Receiver half: sees only the payload. The body is multiplied by the
// header's power_scale before decoding.
Gop decode_payload(const Payload& payload, const ModelState& state,
                   StageTiming* timing = nullptr);

// Full chain for one GOP. The payload crosses the serialized wire format
// between the two halves. Stage errors are rethrown tagged with the stage.
TransmitResult transmit(const Gop& gop, const ModelState& state, const Budget& budget,
                        const ChannelConfig& channel, const TransmitOptions& options,
                        Rng& rng);

// Noiseless keep-all autoencoder round trip without masking or channel.
Gop reconstruct_noiseless(const Gop& gop, const ModelState& state);

struct EvaluationReport {
  QualityReport quality;  // mean over GOPs; per_frame concatenated
  std::vector<CbrReport> per_gop_cbr;
  std::vector<QualityReport> per_gop_quality;
  double cbr_mean = 0.0;
  double cbr_variance = 0.0;
  double psnr_variance = 0.0;
  double ms_ssim_db_variance = 0.0;
  StageTiming timing;  // summed over GOPs
};

// Splits the video into GOPs (tail dropped) and transmits each one. GOP g
// draws its randomness from Rng::substream(channel.seed, g).
EvaluationReport evaluate(const std::vector<Frame>& video, const ModelState& state,
                          const Budget& budget, const ChannelConfig& channel, int gop_size,
                          const TransmitOptions& options = {});
EvaluationReport evaluate_gops(const std::vector<Gop>& gops, const ModelState& state,
                               const Budget& budget, const ChannelConfig& channel,
                               const TransmitOptions& options = {});

}  // namespace mdvsc

#endif  // MDVSC_PIPELINE_H_
