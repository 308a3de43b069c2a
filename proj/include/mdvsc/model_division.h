#ifndef MDVSC_MODEL_DIVISION_H_
#define MDVSC_MODEL_DIVISION_H_

#include <vector>

#include "mdvsc/nn.h"
#include "mdvsc/transform_codec.h"

namespace mdvsc {

// Common feature extractor. The network sees only frame-axis statistics
// (mean and standard deviation) so it is invariant to frame order and to the
// GOP size. Its last layer starts at zero, so initially common == GOP mean.
template <typename T>
class CommonFeatureExtractor {
 public:
  CommonFeatureExtractor() = default;
  CommonFeatureExtractor(const CodecConfig& cfg, Rng& rng);

  // features: (G*N) maps grouped by GOP; returns G common maps.
  Tensor<T> forward(const Tensor<T>& features, int gop_size) const;
  Tensor<T> forward_train(const Tensor<T>& features, int gop_size);
  // Returns the gradient w.r.t. the features given d loss / d common.
  Tensor<T> backward(const Tensor<T>& grad_common);
  void collect(std::vector<Param<T>*>& out);

 private:
  struct Stats {
    Tensor<T> mean;
    Tensor<T> stddev;
    Tensor<T> stacked;  // mean and stddev along the channel axis
  };
  Stats statistics(const Tensor<T>& features, int gop_size) const;

  Conv2d<T> first_;
  Conv2d<T> second_;
  int gop_size_ = 0;
  Tensor<T> saved_features_;
  Stats saved_stats_;
  Tensor<T> saved_hidden_;
};

inline constexpr double kCfeStdEpsilon = 1e-6;

// W_g: one common map plus one individual map per frame. With
// common_transmitted == false the common map is all zero and never sent.
struct FeatureSet {
  FeatureMap common;
  std::vector<FeatureMap> individuals;
  bool common_transmitted = true;

  int gop_size() const { return static_cast<int>(individuals.size()); }
  // Elements per map.
  size_t map_size() const { return common.size(); }
};

void validate_feature_set(const FeatureSet& set);

// Batched helpers shared by the training graph: individuals = Y - common
// broadcast over each group of gop_size frames, and the inverse.
template <typename T>
Tensor<T> subtract_common(const Tensor<T>& features, const Tensor<T>& common,
                          int gop_size);
template <typename T>
Tensor<T> add_common(const Tensor<T>& individuals, const Tensor<T>& common,
                     int gop_size);
// Sums each group of gop_size maps: the adjoint of the broadcast.
template <typename T>
Tensor<T> sum_groups(const Tensor<T>& maps, int gop_size);

}  // namespace mdvsc

#endif  // MDVSC_MODEL_DIVISION_H_
