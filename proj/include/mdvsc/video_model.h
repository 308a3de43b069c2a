#ifndef MDVSC_VIDEO_MODEL_H_
#define MDVSC_VIDEO_MODEL_H_

#include <cstdint>
#include <vector>

#include "mdvsc/tensor.h"

namespace mdvsc {

// One video frame, pixels in [0,1], stored height x width x channels.
struct Frame {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;
  int64_t index = 0;

  Frame() = default;
  Frame(int h, int w, int c, int64_t t = 0)
      : height(h), width(w), channels(c),
        pixels(static_cast<size_t>(h) * w * c, 0.0f), index(t) {}

  float& at(int y, int x, int ch) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + ch];
  }
  float at(int y, int x, int ch) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + ch];
  }
  size_t size() const { return pixels.size(); }
  bool same_shape(const Frame& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Throws unless dims are positive and every pixel is finite and in [0,1].
void validate_frame(const Frame& frame);

// Group of pictures: N peer frames of one shape. No keyframe semantics.
struct Gop {
  std::vector<Frame> frames;
  int64_t gop_id = 0;

  int size() const { return static_cast<int>(frames.size()); }
  const Frame& front() const { return frames.front(); }
};

void validate_gop(const Gop& gop);

enum class PadPolicy { kDropTail, kRepeatLast };

std::vector<Gop> split_into_gops(const std::vector<Frame>& video, int gop_size,
                                 PadPolicy pad_policy = PadPolicy::kDropTail);

// N * H * W * C for the whole GOP.
int64_t source_dimension(const Gop& gop);

// Channel-input symbols of one GOP: individual units 0..N-1, then the common
// unit last.
struct SymbolStream {
  std::vector<float> symbols;
  std::vector<int64_t> per_unit_counts;

  int64_t total() const;
};

struct CbrReport {
  int64_t source_dim = 0;
  int64_t symbol_count = 0;
  double cbr = 0.0;
};

CbrReport cbr_of(const SymbolStream& stream, const Gop& gop);
CbrReport cbr_of(int64_t symbol_count, int64_t source_dim);

// Frames <-> NCHW tensors (n = frame count, c = colour channels).
template <typename T>
Tensor<T> gop_to_tensor(const Gop& gop);
Gop tensor_to_gop(const Tensor<float>& t, int64_t gop_id, bool clamp);

}  // namespace mdvsc

#endif  // MDVSC_VIDEO_MODEL_H_
