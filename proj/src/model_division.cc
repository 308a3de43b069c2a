#include "mdvsc/model_division.h"

#include <cmath>
#include <stdexcept>

namespace mdvsc {

template <typename T>
CommonFeatureExtractor<T>::CommonFeatureExtractor(const CodecConfig& cfg, Rng& rng)
    : first_("cfe.conv1", 2 * cfg.channel_width, cfg.channel_width,
             cfg.residual_kernel, 1, rng),
      second_("cfe.conv2", cfg.channel_width, cfg.channel_width,
              cfg.residual_kernel, 1, rng) {
  second_.zero_init();
}

template <typename T>
typename CommonFeatureExtractor<T>::Stats CommonFeatureExtractor<T>::statistics(
    const Tensor<T>& features, int gop_size) const {
  if (gop_size < 1 || features.n == 0 || features.n % gop_size != 0) {
    throw std::invalid_argument("CFE: " + std::to_string(features.n) +
                                " maps do not form GOPs of " +
                                std::to_string(gop_size));
  }
  const int groups = features.n / gop_size;
  const size_t m = features.image_size();
  Stats s;
  s.mean = Tensor<T>(groups, features.c, features.h, features.w);
  s.stddev = Tensor<T>(groups, features.c, features.h, features.w);
  s.stacked = Tensor<T>(groups, 2 * features.c, features.h, features.w);
  const T inv_n = T(1) / static_cast<T>(gop_size);
  for (int g = 0; g < groups; ++g) {
    T* mean = s.mean.image(g);
    T* sd = s.stddev.image(g);
    // Accumulated as offsets from the first map so a constant GOP yields its
    // frame map exactly.
    const T* first = features.image(g * gop_size);
    for (int k = 1; k < gop_size; ++k) {
      const T* y = features.image(g * gop_size + k);
      for (size_t i = 0; i < m; ++i) mean[i] += y[i] - first[i];
    }
    for (size_t i = 0; i < m; ++i) mean[i] = first[i] + mean[i] * inv_n;
    for (int k = 0; k < gop_size; ++k) {
      const T* y = features.image(g * gop_size + k);
      for (size_t i = 0; i < m; ++i) {
        const T d = y[i] - mean[i];
        sd[i] += d * d;
      }
    }
    for (size_t i = 0; i < m; ++i) {
      sd[i] = std::sqrt(sd[i] * inv_n + static_cast<T>(kCfeStdEpsilon));
    }
    std::copy(mean, mean + m, s.stacked.image(g));
    std::copy(sd, sd + m, s.stacked.image(g) + m);
  }
  return s;
}

template <typename T>
Tensor<T> CommonFeatureExtractor<T>::forward(const Tensor<T>& features,
                                             int gop_size) const {
  Stats s = statistics(features, gop_size);
  Tensor<T> delta = second_.forward(leaky_relu(first_.forward(s.stacked)));
  for (size_t i = 0; i < delta.data.size(); ++i) delta.data[i] += s.mean.data[i];
  return delta;
}

template <typename T>
Tensor<T> CommonFeatureExtractor<T>::forward_train(const Tensor<T>& features,
                                                   int gop_size) {
  gop_size_ = gop_size;
  saved_features_ = features;
  saved_stats_ = statistics(features, gop_size);
  saved_hidden_ = first_.forward(saved_stats_.stacked);
  Tensor<T> out = second_.forward(leaky_relu(saved_hidden_));
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += saved_stats_.mean.data[i];
  return out;
}

template <typename T>
Tensor<T> CommonFeatureExtractor<T>::backward(const Tensor<T>& grad_common) {
  Tensor<T> g = second_.backward(leaky_relu(saved_hidden_), grad_common);
  g = leaky_relu_backward(saved_hidden_, g);
  const Tensor<T> g_stacked = first_.backward(saved_stats_.stacked, g);

  const Tensor<T>& y = saved_features_;
  const size_t m = y.image_size();
  const int groups = y.n / gop_size_;
  const T inv_n = T(1) / static_cast<T>(gop_size_);
  Tensor<T> gy(y.n, y.c, y.h, y.w);
  for (int gr = 0; gr < groups; ++gr) {
    const T* mean = saved_stats_.mean.image(gr);
    const T* sd = saved_stats_.stddev.image(gr);
    const T* g_mean_net = g_stacked.image(gr);
    const T* g_sd = g_stacked.image(gr) + m;
    const T* g_direct = grad_common.image(gr);
    for (int k = 0; k < gop_size_; ++k) {
      const T* yk = y.image(gr * gop_size_ + k);
      T* out = gy.image(gr * gop_size_ + k);
      for (size_t i = 0; i < m; ++i) {
        // d sd / d y_k = (y_k - mean) / (N * sd); the mean term cancels.
        out[i] = (g_direct[i] + g_mean_net[i]) * inv_n +
                 g_sd[i] * (yk[i] - mean[i]) * inv_n / sd[i];
      }
    }
  }
  return gy;
}

template <typename T>
void CommonFeatureExtractor<T>::collect(std::vector<Param<T>*>& out) {
  first_.collect(out);
  second_.collect(out);
}

void validate_feature_set(const FeatureSet& set) {
  if (set.individuals.empty()) throw std::invalid_argument("feature set has no individual maps");
  for (const auto& ind : set.individuals) {
    if (!ind.same_shape(set.common)) {
      throw std::invalid_argument("feature set maps differ in shape: " +
                                  ind.shape_string() + " vs " +
                                  set.common.shape_string());
    }
  }
}

template <typename T>
Tensor<T> subtract_common(const Tensor<T>& features, const Tensor<T>& common,
                          int gop_size) {
  if (!features.same_image_shape(common) || features.n != common.n * gop_size) {
    throw std::invalid_argument("subtract_common: shape mismatch " +
                                features.shape_string() + " vs " +
                                common.shape_string());
  }
  Tensor<T> out = features;
  const size_t m = features.image_size();
  for (int i = 0; i < features.n; ++i) {
    const T* c = common.image(i / gop_size);
    T* o = out.image(i);
    for (size_t k = 0; k < m; ++k) o[k] -= c[k];
  }
  return out;
}

template <typename T>
Tensor<T> add_common(const Tensor<T>& individuals, const Tensor<T>& common,
                     int gop_size) {
  if (!individuals.same_image_shape(common) || individuals.n != common.n * gop_size) {
    throw std::invalid_argument("add_common: shape mismatch " +
                                individuals.shape_string() + " vs " +
                                common.shape_string());
  }
  Tensor<T> out = individuals;
  const size_t m = individuals.image_size();
  for (int i = 0; i < individuals.n; ++i) {
    const T* c = common.image(i / gop_size);
    T* o = out.image(i);
    for (size_t k = 0; k < m; ++k) o[k] += c[k];
  }
  return out;
}

template <typename T>
Tensor<T> sum_groups(const Tensor<T>& maps, int gop_size) {
  Tensor<T> out(maps.n / gop_size, maps.c, maps.h, maps.w);
  const size_t m = maps.image_size();
  for (int i = 0; i < maps.n; ++i) {
    const T* s = maps.image(i);
    T* o = out.image(i / gop_size);
    for (size_t k = 0; k < m; ++k) o[k] += s[k];
  }
  return out;
}

#define MDVSC_INSTANTIATE(T)                                                     \
  template class CommonFeatureExtractor<T>;                                      \
  template Tensor<T> subtract_common(const Tensor<T>&, const Tensor<T>&, int);  \
  template Tensor<T> add_common(const Tensor<T>&, const Tensor<T>&, int);       \
  template Tensor<T> sum_groups(const Tensor<T>&, int);

MDVSC_INSTANTIATE(float)
MDVSC_INSTANTIATE(double)

#undef MDVSC_INSTANTIATE

}  // namespace mdvsc
