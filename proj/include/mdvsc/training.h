#ifndef MDVSC_TRAINING_H_
#define MDVSC_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdvsc/data.h"
#include "mdvsc/model.h"

namespace mdvsc {

struct TrainConfig {
  double lambda_rate = 8192.0;
  double lr_init = 1e-4;
  double lr_min = 1e-6;
  int batch_size = 32;
  int gop_size = 6;
  double train_snr_db = 10.0;
  int crop = 256;
  int64_t steps = 100000;
  uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.0;
  // Global gradient-norm clip; 0 disables.
  double grad_clip_norm = 0.0;

  void validate() const;
};

// Loss = lambda * R + D with R in bits per source dimension and D the MSE
// over [0,1] pixels.
struct LossBreakdown {
  double loss = 0.0;
  double rate_bpd = 0.0;
  double distortion = 0.0;
};

// Raised when a step produces a non-finite loss or gradient. last_good_step
// is the number of steps completed before the failing one.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int64_t last_good_step)
      : std::runtime_error(what), last_good_step_(last_good_step) {}
  int64_t last_good_step() const { return last_good_step_; }

 private:
  int64_t last_good_step_;
};

LossBreakdown loss(const Gop& gop, const Gop& recon, const EntropyMaps& entropies,
                   const TrainConfig& config);

// Runs the whole training graph on `frames` (G*gop_size images): latent
// transform, JSCC encode, CFE split, entropy model with additive uniform
// quantization noise, keep-all channel with power normalization and AWGN at
// snr_db, recombination, decode and latent inversion. When compute_gradients
// is set the parameter gradients of the loss are accumulated into the nets'
// Param::grad. Noise is drawn from rng in a fixed order so repeated calls
// with equal rng state are identical.
template <typename T>
LossBreakdown chain_loss(MdvscNet<T>& net, const Tensor<T>& frames, int gop_size,
                         double lambda_rate, double snr_db, Rng& rng,
                         bool compute_gradients, Tensor<T>* recon = nullptr);

template <typename T>
void zero_gradients(MdvscNet<T>& net);

double learning_rate(const ScheduleState& schedule, int64_t step);

// One Adam update of state with the gradients currently stored in the net.
void adam_update(ModelState& state, const TrainConfig& config, double lr);

// One gradient step on a batch of GOPs. Increments state.step.
LossBreakdown train_step(ModelState& state, const std::vector<Gop>& batch,
                         const TrainConfig& config, Rng& rng);

// Batch for a given step of a dataset; depends only on (config.seed, step).
std::vector<Gop> sample_batch(const ClipSource& data, const TrainConfig& config,
                              int64_t step);

struct TrainLogEntry {
  int64_t step;
  double lr;
  LossBreakdown loss;
};

// Trains from state.step up to config.steps, or for at most max_steps steps
// when it is positive. The learning-rate schedule always spans config.steps.
// The callback sees every step.
std::vector<TrainLogEntry> train(ModelState& state, const ClipSource& data,
                                 const TrainConfig& config,
                                 const std::function<void(const TrainLogEntry&)>& on_step = {},
                                 int64_t max_steps = 0);

// Chooses lambda from candidates after a short warmup each. A candidate
// qualifies when lambda*R and D are within 100x of each other; the candidate
// whose ratio is closest to 1 in log scale wins, so qualifiers beat others.
double calibrate_lambda(const std::vector<double>& candidates, const CodecConfig& codec,
                        const ClipSource& data, TrainConfig config, int64_t warmup_steps);

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

// Presets: full-scale settings (256x256 crops, GOP 6, batch 32) and the
// desk-scale toy run.
TrainConfig full_scale_train_config();
TrainConfig toy_train_config();
CodecConfig toy_codec_config();

}  // namespace mdvsc

#endif  // MDVSC_TRAINING_H_
