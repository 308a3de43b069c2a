#include "mdvsc/training.h"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numbers>
#include <span>

namespace mdvsc {
namespace {

bool finite(double v) { return std::isfinite(v); }

// Per-GOP channel noise at unit transmit power: s_hat = s + rms * e. Keeps the
// noise draws so the backward pass can differentiate through the scale.
template <typename T>
struct ChannelTrace {
  std::vector<double> rms;
  Tensor<T> noise_ind;
  Tensor<T> noise_common;
};

template <typename T>
void for_group(Tensor<T>& ind, Tensor<T>& common, int g, int gop_size, bool with_common,
               const auto& fn) {
  const size_t m = ind.image_size();
  fn(std::span<T>(ind.image(g * gop_size), m * gop_size), 0);
  if (with_common) fn(std::span<T>(common.image(g), m), 1);
}

template <typename T>
ChannelTrace<T> noisy_channel(Tensor<T>& ind, Tensor<T>& common, int gop_size,
                              bool with_common, const std::vector<double>& rms,
                              double snr_db, Rng& rng) {
  ChannelTrace<T> trace;
  trace.rms = rms;
  trace.noise_ind = Tensor<T>(ind.n, ind.c, ind.h, ind.w);
  trace.noise_common = Tensor<T>(common.n, common.c, common.h, common.w);
  const bool noiseless = std::isinf(snr_db) && snr_db > 0;
  if (noiseless) return trace;
  const double stddev = std::sqrt(std::pow(10.0, -snr_db / 10.0));
  for (size_t g = 0; g < rms.size(); ++g) {
    for_group(ind, common, static_cast<int>(g), gop_size, with_common,
              [&](std::span<T> s, int which) {
                T* noise = which == 0 ? trace.noise_ind.image(static_cast<int>(g) * gop_size)
                                      : trace.noise_common.image(static_cast<int>(g));
                for (size_t i = 0; i < s.size(); ++i) {
                  const double e = stddev * rng.normal();
                  noise[i] = static_cast<T>(e);
                  s[i] = static_cast<T>(s[i] + rms[g] * e);
                }
              });
  }
  return trace;
}

// Adjoint of s_hat = s + rms(s) * e, in place on the gradient tensors.
template <typename T>
void noisy_channel_backward(const Tensor<T>& ind, const Tensor<T>& common,
                            const ChannelTrace<T>& trace, int gop_size, bool with_common,
                            Tensor<T>& g_ind, Tensor<T>& g_common) {
  const int groups = ind.n / gop_size;
  const size_t m = ind.image_size();
  for (int g = 0; g < groups; ++g) {
    double dot = 0.0;
    const size_t ni = m * gop_size;
    const T* gi = g_ind.image(g * gop_size);
    const T* ei = trace.noise_ind.image(g * gop_size);
    for (size_t i = 0; i < ni; ++i) dot += static_cast<double>(gi[i]) * ei[i];
    size_t count = ni;
    if (with_common) {
      const T* gc = g_common.image(g);
      const T* ec = trace.noise_common.image(g);
      for (size_t i = 0; i < m; ++i) dot += static_cast<double>(gc[i]) * ec[i];
      count += m;
    }
    if (dot == 0.0) continue;
    const double k = dot / (static_cast<double>(count) * trace.rms[g]);
    T* gi_mut = g_ind.image(g * gop_size);
    const T* si = ind.image(g * gop_size);
    for (size_t i = 0; i < ni; ++i) gi_mut[i] = static_cast<T>(gi_mut[i] + k * si[i]);
    if (with_common) {
      T* gc = g_common.image(g);
      const T* sc = common.image(g);
      for (size_t i = 0; i < m; ++i) gc[i] = static_cast<T>(gc[i] + k * sc[i]);
    }
  }
}

// n = s / rms(s) per GOP over the transmitted maps.
template <typename T>
std::vector<double> group_rms(const Tensor<T>& ind, const Tensor<T>& common, int gop_size,
                              bool with_common) {
  const int groups = ind.n / gop_size;
  const size_t m = ind.image_size();
  std::vector<double> out;
  for (int g = 0; g < groups; ++g) {
    double energy = 0.0;
    const T* si = ind.image(g * gop_size);
    for (size_t i = 0; i < m * gop_size; ++i) energy += static_cast<double>(si[i]) * si[i];
    size_t count = m * gop_size;
    if (with_common) {
      const T* sc = common.image(g);
      for (size_t i = 0; i < m; ++i) energy += static_cast<double>(sc[i]) * sc[i];
      count += m;
    }
    const double rms = std::sqrt(energy / static_cast<double>(count));
    // A non-finite rms propagates into the loss and is reported as divergence.
    if (rms == 0.0) throw std::runtime_error("channel: zero-power signal");
    out.push_back(rms);
  }
  return out;
}

// Stacks the normalized transmitted maps: individuals then commons.
template <typename T>
Tensor<T> normalized_maps(const Tensor<T>& ind, const Tensor<T>& common, int gop_size,
                          bool with_common, const std::vector<double>& rms) {
  Tensor<T> out = with_common ? concat_images<T>({ind, common}) : ind;
  const size_t per_group = ind.image_size() * gop_size;
  for (size_t i = 0; i < ind.size(); ++i) {
    out.data[i] = static_cast<T>(out.data[i] / rms[i / per_group]);
  }
  if (with_common) {
    const size_t m = common.image_size();
    for (size_t i = 0; i < common.size(); ++i) {
      T& v = out.data[ind.size() + i];
      v = static_cast<T>(v / rms[i / m]);
    }
  }
  return out;
}

// Adjoint of normalized_maps: g_s = (g_n - n * mean(g_n . n)) / rms, added
// into the per-map gradients.
template <typename T>
void normalized_maps_backward(const Tensor<T>& normalized, const Tensor<T>& g_n,
                              int gop_size, bool with_common, const std::vector<double>& rms,
                              Tensor<T>& g_ind, Tensor<T>& g_common) {
  const size_t m = g_ind.image_size();
  const size_t ni = m * gop_size;
  const size_t ind_total = g_ind.size();
  for (size_t g = 0; g < rms.size(); ++g) {
    double dot = 0.0;
    for (size_t i = 0; i < ni; ++i) {
      const size_t k = g * ni + i;
      dot += static_cast<double>(g_n.data[k]) * normalized.data[k];
    }
    size_t count = ni;
    if (with_common) {
      for (size_t i = 0; i < m; ++i) {
        const size_t k = ind_total + g * m + i;
        dot += static_cast<double>(g_n.data[k]) * normalized.data[k];
      }
      count += m;
    }
    const double mean_dot = dot / static_cast<double>(count);
    for (size_t i = 0; i < ni; ++i) {
      const size_t k = g * ni + i;
      g_ind.data[k] += static_cast<T>((g_n.data[k] - normalized.data[k] * mean_dot) / rms[g]);
    }
    if (with_common) {
      for (size_t i = 0; i < m; ++i) {
        const size_t k = ind_total + g * m + i;
        g_common.data[g * m + i] +=
            static_cast<T>((g_n.data[k] - normalized.data[k] * mean_dot) / rms[g]);
      }
    }
  }
}

template <typename T>
void add_into(Tensor<T>& dst, const T* src) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src[i];
}

Tensor<float> batch_tensor(const std::vector<Gop>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  std::vector<Tensor<float>> parts;
  parts.reserve(batch.size());
  for (const Gop& g : batch) {
    validate_gop(g);
    if (g.size() != batch.front().size()) {
      throw std::invalid_argument("train_step: GOPs in a batch must have equal size");
    }
    parts.push_back(gop_to_tensor<float>(g));
  }
  return concat_images(parts);
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("train config: ") + name + " must be positive");
    }
  };
  positive(lambda_rate, "lambda_rate");
  positive(lr_init, "lr_init");
  positive(lr_min, "lr_min");
  positive(batch_size, "batch_size");
  positive(gop_size, "gop_size");
  positive(static_cast<double>(crop), "crop");
  positive(static_cast<double>(steps), "steps");
  if (crop % 16 != 0) throw std::invalid_argument("train config: crop must be divisible by 16");
  if (lr_min > lr_init) throw std::invalid_argument("train config: lr_min exceeds lr_init");
  if (std::isnan(train_snr_db)) throw std::invalid_argument("train config: train_snr_db is NaN");
  if (grad_clip_norm < 0.0 || weight_decay < 0.0) {
    throw std::invalid_argument("train config: negative grad_clip_norm or weight_decay");
  }
}

LossBreakdown loss(const Gop& gop, const Gop& recon, const EntropyMaps& entropies,
                   const TrainConfig& config) {
  const int64_t sd = source_dimension(gop);
  if (sd == 0) throw std::invalid_argument("loss: zero source dimension");
  LossBreakdown out;
  out.rate_bpd = entropies.total_bits() / static_cast<double>(sd);
  out.distortion = 0.0;
  if (recon.size() != gop.size()) throw std::invalid_argument("loss: GOP size mismatch");
  size_t count = 0;
  for (size_t i = 0; i < gop.frames.size(); ++i) {
    const auto& a = gop.frames[i].pixels;
    const auto& b = recon.frames[i].pixels;
    if (a.size() != b.size()) throw std::invalid_argument("loss: frame shape mismatch");
    for (size_t k = 0; k < a.size(); ++k) {
      const double d = static_cast<double>(a[k]) - b[k];
      out.distortion += d * d;
    }
    count += a.size();
  }
  out.distortion /= static_cast<double>(count);
  out.loss = config.lambda_rate * out.rate_bpd + out.distortion;
  if (!finite(out.loss)) throw std::runtime_error("loss: non-finite value");
  return out;
}

template <typename T>
LossBreakdown chain_loss(MdvscNet<T>& net, const Tensor<T>& frames, int gop_size,
                         double lambda_rate, double snr_db, Rng& rng,
                         bool compute_gradients, Tensor<T>* recon) {
  const CodecConfig& cfg = net.config;
  if (gop_size <= 0 || frames.n == 0 || frames.n % gop_size != 0) {
    throw std::invalid_argument("chain_loss: frame count " + std::to_string(frames.n) +
                                " is not a multiple of the GOP size");
  }
  cfg.check_frame_size(frames.h, frames.w);
  const int groups = frames.n / gop_size;
  const bool with_common = cfg.use_cfe;

  const Tensor<T> latent = net.latent.forward_train(frames);
  const Tensor<T> y = net.encoder.forward_train(latent);
  const Tensor<T> common = with_common ? net.cfe.forward_train(y, gop_size)
                                       : Tensor<T>(groups, y.c, y.h, y.w);
  const Tensor<T> ind = subtract_common(y, common, gop_size);

  // Rate is measured on the unit-power symbols that enter the channel; every
  // transmitted map goes through the hyperprior independently.
  const std::vector<double> rms = group_rms(ind, common, gop_size, with_common);
  const Tensor<T> w_all = normalized_maps(ind, common, gop_size, with_common, rms);
  Tensor<T> z = net.hyper_encoder.forward_train(w_all);
  quantize_in_place(std::span<T>(z.data), QuantMode::kTrain, rng);
  const Tensor<T> sigma = net.hyper_decoder.forward_train(z, w_all.h, w_all.w);
  Tensor<T> w_noisy = w_all;
  quantize_in_place(std::span<T>(w_noisy.data), QuantMode::kTrain, rng);

  const double pixels = static_cast<double>(frames.size());
  const double rate_coef = lambda_rate / pixels;
  Tensor<T> g_w(w_all.n, w_all.c, w_all.h, w_all.w);
  Tensor<T> g_sigma(w_all.n, w_all.c, w_all.h, w_all.w);
  double bits = 0.0;
  for (size_t i = 0; i < w_all.size(); ++i) {
    const LikelihoodGrad lg = likelihood_with_grad(static_cast<double>(w_noisy.data[i]),
                                                   static_cast<double>(sigma.data[i]));
    bits += bits_of(lg.p);
    if (compute_gradients) {
      const double dbits_dp = -1.0 / (lg.p * std::numbers::ln2);
      g_w.data[i] = static_cast<T>(rate_coef * dbits_dp * lg.dp_dw);
      g_sigma.data[i] = static_cast<T>(rate_coef * dbits_dp * lg.dp_dsigma);
    }
  }

  // Channel: unquantized symbols, power-normalized per GOP.
  Tensor<T> ind_rx = ind;
  Tensor<T> common_rx = common;
  const ChannelTrace<T> trace =
      noisy_channel(ind_rx, common_rx, gop_size, with_common, rms, snr_db, rng);

  const Tensor<T> y_rx = add_common(ind_rx, common_rx, gop_size);
  const Tensor<T> latent_rx = net.decoder.forward_train(y_rx);
  const Tensor<T> x_hat = net.inverse.forward_train(latent_rx);

  double sq = 0.0;
  for (size_t i = 0; i < frames.size(); ++i) {
    const double d = static_cast<double>(x_hat.data[i]) - frames.data[i];
    sq += d * d;
  }
  LossBreakdown out;
  out.rate_bpd = bits / pixels;
  out.distortion = sq / pixels;
  out.loss = lambda_rate * out.rate_bpd + out.distortion;
  if (recon) *recon = x_hat;
  if (!compute_gradients || !finite(out.loss)) return out;

  Tensor<T> g_x(x_hat.n, x_hat.c, x_hat.h, x_hat.w);
  for (size_t i = 0; i < frames.size(); ++i) {
    g_x.data[i] = static_cast<T>(2.0 * (static_cast<double>(x_hat.data[i]) - frames.data[i]) /
                                 pixels);
  }
  const Tensor<T> g_latent_rx = net.inverse.backward(g_x);
  const Tensor<T> g_y_rx = net.decoder.backward(g_latent_rx);
  Tensor<T> g_ind = g_y_rx;
  Tensor<T> g_common = with_common ? sum_groups(g_y_rx, gop_size)
                                   : Tensor<T>(groups, y.c, y.h, y.w);
  noisy_channel_backward(ind, common, trace, gop_size, with_common, g_ind, g_common);

  const Tensor<T> g_z = net.hyper_decoder.backward(g_sigma);
  add_into(g_w, net.hyper_encoder.backward(g_z).data.data());
  normalized_maps_backward(w_all, g_w, gop_size, with_common, rms, g_ind, g_common);

  // individuals = Y - broadcast(common).
  Tensor<T> g_y = g_ind;
  if (with_common) {
    const Tensor<T> summed = sum_groups(g_ind, gop_size);
    for (size_t i = 0; i < g_common.size(); ++i) g_common.data[i] -= summed.data[i];
    const Tensor<T> g_from_cfe = net.cfe.backward(g_common);
    add_into(g_y, g_from_cfe.data.data());
  }
  const Tensor<T> g_latent = net.encoder.backward(g_y);
  net.latent.backward(g_latent);
  return out;
}

template <typename T>
void zero_gradients(MdvscNet<T>& net) {
  for (Param<T>* p : net.params()) std::fill(p->grad.data.begin(), p->grad.data.end(), T(0));
}

template LossBreakdown chain_loss(MdvscNet<float>&, const Tensor<float>&, int, double,
                                  double, Rng&, bool, Tensor<float>*);
template LossBreakdown chain_loss(MdvscNet<double>&, const Tensor<double>&, int, double,
                                  double, Rng&, bool, Tensor<double>*);
template void zero_gradients(MdvscNet<float>&);
template void zero_gradients(MdvscNet<double>&);

double learning_rate(const ScheduleState& schedule, int64_t step) {
  if (schedule.total_steps <= 0) return schedule.lr_init;
  const double t = static_cast<double>(std::clamp<int64_t>(step, 0, schedule.total_steps)) /
                   static_cast<double>(schedule.total_steps);
  return schedule.lr_min +
         0.5 * (schedule.lr_init - schedule.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

void adam_update(ModelState& state, const TrainConfig& config, double lr) {
  auto params = state.net.params();
  if (params.size() != state.adam_m.size() || params.size() != state.adam_v.size()) {
    throw std::logic_error("adam_update: optimizer state does not match parameters");
  }
  const double t = static_cast<double>(state.step + 1);
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);

  double scale = 1.0;
  if (config.grad_clip_norm > 0.0) {
    double sq = 0.0;
    for (const Param<float>* p : params) {
      for (float g : p->grad.data) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config.grad_clip_norm) scale = config.grad_clip_norm / norm;
  }

  for (size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k]->value.data;
    const auto& grad = params[k]->grad.data;
    auto& m = state.adam_m[k].data;
    auto& v = state.adam_v[k].data;
    for (size_t i = 0; i < value.size(); ++i) {
      const double g = scale * grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double p = value[i];
      if (config.weight_decay > 0.0) p -= lr * config.weight_decay * p;
      p -= lr * (mi / c1) / (std::sqrt(vi / c2) + config.adam_epsilon);
      value[i] = static_cast<float>(p);
    }
  }
}

LossBreakdown train_step(ModelState& state, const std::vector<Gop>& batch,
                         const TrainConfig& config, Rng& rng) {
  config.validate();
  const Tensor<float> frames = batch_tensor(batch);
  const int gop_size = static_cast<int>(batch.front().size());
  zero_gradients(state.net);
  const LossBreakdown lb = chain_loss(state.net, frames, gop_size, config.lambda_rate,
                                      config.train_snr_db, rng, true);
  if (!finite(lb.loss)) {
    throw TrainingDiverged("training diverged: non-finite loss at step " +
                               std::to_string(state.step),
                           state.step);
  }
  for (const Param<float>* p : state.net.params()) {
    for (float g : p->grad.data) {
      if (!std::isfinite(g)) {
        throw TrainingDiverged("training diverged: non-finite gradient in " + p->name +
                                   " at step " + std::to_string(state.step),
                               state.step);
      }
    }
  }
  adam_update(state, config, learning_rate(state.schedule, state.step));
  ++state.step;
  return lb;
}

std::vector<Gop> sample_batch(const ClipSource& data, const TrainConfig& config,
                              int64_t step) {
  if (config.gop_size != data.gop_size) {
    throw std::invalid_argument("sample_batch: config GOP size " +
                                std::to_string(config.gop_size) + " differs from dataset " +
                                std::to_string(data.gop_size));
  }
  Rng rng = Rng::substream(config.seed, static_cast<uint64_t>(step));
  std::vector<Gop> batch;
  batch.reserve(config.batch_size);
  for (int b = 0; b < config.batch_size; ++b) {
    Gop gop = data.clip(static_cast<int>(rng.below(static_cast<uint64_t>(data.clip_count))));
    const int h = gop.front().height;
    const int w = gop.front().width;
    if (config.crop < h || config.crop < w) {
      const int ch = std::min(config.crop, h);
      const int cw = std::min(config.crop, w);
      const int oy = 2 * static_cast<int>(rng.below(static_cast<uint64_t>((h - ch) / 2 + 1)));
      const int ox = 2 * static_cast<int>(rng.below(static_cast<uint64_t>((w - cw) / 2 + 1)));
      for (Frame& f : gop.frames) {
        Frame c;
        c.height = ch;
        c.width = cw;
        c.channels = f.channels;
        c.index = f.index;
        c.pixels.resize(static_cast<size_t>(ch) * cw * f.channels);
        for (int yy = 0; yy < ch; ++yy) {
          const float* src = f.pixels.data() +
                             (static_cast<size_t>(oy + yy) * w + ox) * f.channels;
          std::copy(src, src + static_cast<size_t>(cw) * f.channels,
                    c.pixels.begin() + static_cast<size_t>(yy) * cw * f.channels);
        }
        f = std::move(c);
      }
    }
    batch.push_back(std::move(gop));
  }
  return batch;
}

std::vector<TrainLogEntry> train(ModelState& state, const ClipSource& data,
                                 const TrainConfig& config,
                                 const std::function<void(const TrainLogEntry&)>& on_step,
                                 int64_t max_steps) {
  config.validate();
  state.schedule = ScheduleState{config.lr_init, config.lr_min, config.steps};
  std::vector<TrainLogEntry> log;
  const uint64_t noise_seed = Rng::splitmix64(config.seed ^ 0x6e6f697365ULL);
  const int64_t end =
      max_steps > 0 ? std::min(config.steps, state.step + max_steps) : config.steps;
  while (state.step < end) {
    const int64_t step = state.step;
    const std::vector<Gop> batch = sample_batch(data, config, step);
    Rng rng = Rng::substream(noise_seed, static_cast<uint64_t>(step));
    const double lr = learning_rate(state.schedule, step);
    const LossBreakdown lb = train_step(state, batch, config, rng);
    log.push_back({step, lr, lb});
    if (on_step) on_step(log.back());
  }
  return log;
}

double calibrate_lambda(const std::vector<double>& candidates, const CodecConfig& codec,
                        const ClipSource& data, TrainConfig config, int64_t warmup_steps) {
  if (candidates.empty()) throw std::invalid_argument("calibrate_lambda: no candidates");
  if (warmup_steps <= 0) throw std::invalid_argument("calibrate_lambda: warmup_steps <= 0");
  double best = candidates.front();
  double best_score = std::numeric_limits<double>::infinity();
  const std::vector<Gop> probe = sample_batch(data, config, -1);
  const Tensor<float> frames = batch_tensor(probe);
  for (double lambda : candidates) {
    config.lambda_rate = lambda;
    config.steps = warmup_steps;
    ModelState state = ModelState::create(codec, config.seed);
    train(state, data, config);
    Rng rng = Rng::substream(config.seed, 0xca1bULL);
    const LossBreakdown lb = chain_loss(state.net, frames, config.gop_size, lambda,
                                        config.train_snr_db, rng, false);
    const double rate_term = lambda * lb.rate_bpd;
    if (!(rate_term > 0.0) || !(lb.distortion > 0.0)) continue;
    const double score = std::abs(std::log(rate_term / lb.distortion));
    if (score < best_score) {
      best_score = score;
      best = lambda;
    }
  }
  return best;
}

// --- checkpoints ------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'D', 'C', 'K'};

class Writer {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    unsigned char raw[sizeof(U)];
    std::memcpy(raw, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    bytes.insert(bytes.end(), raw, raw + sizeof(U));
  }
  void put_floats(const AlignedVector<float>& v) {
    for (float f : v) put(std::bit_cast<uint32_t>(f));
  }
  std::vector<uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : bytes_(b) {}
  template <typename U>
  U get(const char* what) {
    if (pos_ + sizeof(U) > bytes_.size()) {
      throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what +
                               " at byte " + std::to_string(pos_));
    }
    unsigned char raw[sizeof(U)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, raw, sizeof(U));
    return v;
  }
  void get_floats(AlignedVector<float>& v, const char* what) {
    for (float& f : v) f = std::bit_cast<float>(get<uint32_t>(what));
  }
  size_t pos() const { return pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

uint32_t checksum(std::span<const uint8_t> b) {
  return static_cast<uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), b.data(), static_cast<uInt>(b.size())));
}

}  // namespace

// Layout: magic, u32 version, codec config (9 x i32), i64 step, schedule
// (f64, f64, i64), u32 param count, then per parameter u16 name length, name,
// 4 x i32 shape, value, Adam m and Adam v as f32 arrays. A trailing CRC-32
// covers every preceding byte.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  Writer w;
  for (char c : kCheckpointMagic) w.put(static_cast<uint8_t>(c));
  w.put(kCheckpointVersion);
  const CodecConfig& c = state.config();
  for (int v : {c.channel_width, c.latent_downsample, c.jscc_blocks, c.residual_per_block,
                c.resample_kernel, c.residual_kernel, c.hyper_width, c.frame_channels,
                c.use_cfe ? 1 : 0}) {
    w.put(static_cast<int32_t>(v));
  }
  w.put(static_cast<int64_t>(state.step));
  w.put(state.schedule.lr_init);
  w.put(state.schedule.lr_min);
  w.put(static_cast<int64_t>(state.schedule.total_steps));
  const auto params = state.net.params();
  w.put(static_cast<uint32_t>(params.size()));
  for (size_t k = 0; k < params.size(); ++k) {
    const Param<float>& p = *params[k];
    w.put(static_cast<uint16_t>(p.name.size()));
    for (char ch : p.name) w.put(static_cast<uint8_t>(ch));
    for (int d : {p.value.n, p.value.c, p.value.h, p.value.w}) w.put(static_cast<int32_t>(d));
    w.put_floats(p.value.data);
    w.put_floats(state.adam_m[k].data);
    w.put_floats(state.adam_v[k].data);
  }
  w.put(checksum(w.bytes));

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || !std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin())) {
    throw std::runtime_error("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  Reader header(std::span<const uint8_t>(bytes).subspan(4));
  const uint32_t version = header.get<uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: version " + std::to_string(version) +
                             " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 12) throw std::runtime_error("checkpoint: truncated file");
  const std::span<const uint8_t> body(bytes.data(), bytes.size() - 4);
  Reader tail(std::span<const uint8_t>(bytes).subspan(bytes.size() - 4));
  if (tail.get<uint32_t>("checksum") != checksum(body)) {
    throw std::runtime_error("checkpoint: " + path.string() +
                             " is corrupt (checksum mismatch)");
  }

  Reader r(body.subspan(8));
  CodecConfig c;
  c.channel_width = r.get<int32_t>("config");
  c.latent_downsample = r.get<int32_t>("config");
  c.jscc_blocks = r.get<int32_t>("config");
  c.residual_per_block = r.get<int32_t>("config");
  c.resample_kernel = r.get<int32_t>("config");
  c.residual_kernel = r.get<int32_t>("config");
  c.hyper_width = r.get<int32_t>("config");
  c.frame_channels = r.get<int32_t>("config");
  c.use_cfe = r.get<int32_t>("config") != 0;
  c.validate();

  ModelState state = ModelState::create(c, 0);
  state.step = r.get<int64_t>("step");
  state.schedule.lr_init = r.get<double>("schedule");
  state.schedule.lr_min = r.get<double>("schedule");
  state.schedule.total_steps = r.get<int64_t>("schedule");
  auto params = state.net.params();
  const uint32_t count = r.get<uint32_t>("parameter count");
  if (count != params.size()) {
    throw std::runtime_error("checkpoint: holds " + std::to_string(count) +
                             " parameters, model has " + std::to_string(params.size()));
  }
  for (size_t k = 0; k < params.size(); ++k) {
    Param<float>& p = *params[k];
    std::string name(r.get<uint16_t>("name length"), '\0');
    for (char& ch : name) ch = static_cast<char>(r.get<uint8_t>("name"));
    if (name != p.name) {
      throw std::runtime_error("checkpoint: parameter " + std::to_string(k) + " is '" + name +
                               "', expected '" + p.name + "'");
    }
    int32_t dims[4];
    for (int32_t& d : dims) d = r.get<int32_t>("shape");
    if (dims[0] != p.value.n || dims[1] != p.value.c || dims[2] != p.value.h ||
        dims[3] != p.value.w) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    r.get_floats(p.value.data, name.c_str());
    r.get_floats(state.adam_m[k].data, name.c_str());
    r.get_floats(state.adam_v[k].data, name.c_str());
  }
  if (r.pos() != body.size() - 8) {
    throw std::runtime_error("checkpoint: trailing bytes after parameters");
  }
  return state;
}

// --- presets ----------------------------------------------------------------

TrainConfig full_scale_train_config() {
  TrainConfig c;
  c.lambda_rate = 8192.0;
  c.batch_size = 32;
  c.gop_size = 6;
  c.crop = 256;
  return c;
}

TrainConfig toy_train_config() {
  TrainConfig c;
  c.lambda_rate = 1.0;
  c.lr_init = 1e-3;
  c.lr_min = 1e-5;
  c.batch_size = 4;
  c.gop_size = 4;
  c.crop = 64;
  c.steps = 10000;
  c.grad_clip_norm = 1.0;
  return c;
}

CodecConfig toy_codec_config() {
  CodecConfig c;
  c.channel_width = 24;
  c.jscc_blocks = 3;
  c.residual_per_block = 1;
  c.hyper_width = 32;
  return c;
}

}  // namespace mdvsc
