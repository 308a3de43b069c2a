#include "mdvsc/video_model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mdvsc {

void validate_frame(const Frame& frame) {
  if (frame.height < 1 || frame.width < 1 || frame.channels < 1) {
    throw std::invalid_argument("frame dimensions must be positive");
  }
  if (frame.pixels.size() !=
      static_cast<size_t>(frame.height) * frame.width * frame.channels) {
    throw std::invalid_argument("frame pixel count does not match dimensions");
  }
  for (float v : frame.pixels) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw std::invalid_argument("frame pixel outside [0,1]: " + std::to_string(v));
    }
  }
}

void validate_gop(const Gop& gop) {
  if (gop.frames.empty()) throw std::invalid_argument("GOP has no frames");
  for (const auto& f : gop.frames) {
    if (!f.same_shape(gop.frames.front())) {
      throw std::invalid_argument("GOP frames differ in shape");
    }
  }
}

std::vector<Gop> split_into_gops(const std::vector<Frame>& video, int gop_size,
                                 PadPolicy pad_policy) {
  if (video.empty()) throw std::invalid_argument("no frames");
  if (gop_size < 1) throw std::invalid_argument("gop_size must be >= 1");
  for (const auto& f : video) {
    if (!f.same_shape(video.front())) {
      throw std::invalid_argument("video frames differ in shape");
    }
  }
  std::vector<Gop> gops;
  const size_t full = video.size() / gop_size;
  for (size_t g = 0; g < full; ++g) {
    Gop gop;
    gop.gop_id = static_cast<int64_t>(g);
    gop.frames.assign(video.begin() + g * gop_size,
                      video.begin() + (g + 1) * gop_size);
    gops.push_back(std::move(gop));
  }
  const size_t rest = video.size() % gop_size;
  if (rest != 0 && pad_policy == PadPolicy::kRepeatLast) {
    Gop gop;
    gop.gop_id = static_cast<int64_t>(full);
    gop.frames.assign(video.end() - rest, video.end());
    while (gop.size() < gop_size) gop.frames.push_back(video.back());
    gops.push_back(std::move(gop));
  }
  return gops;
}

int64_t source_dimension(const Gop& gop) {
  if (gop.frames.empty()) return 0;
  const Frame& f = gop.frames.front();
  return static_cast<int64_t>(gop.size()) * f.height * f.width * f.channels;
}

int64_t SymbolStream::total() const {
  return std::accumulate(per_unit_counts.begin(), per_unit_counts.end(), int64_t{0});
}

CbrReport cbr_of(int64_t symbol_count, int64_t source_dim) {
  if (source_dim <= 0) throw std::invalid_argument("zero source dimension");
  if (symbol_count < 0) throw std::invalid_argument("negative symbol count");
  return {source_dim, symbol_count,
          static_cast<double>(symbol_count) / static_cast<double>(source_dim)};
}

CbrReport cbr_of(const SymbolStream& stream, const Gop& gop) {
  return cbr_of(static_cast<int64_t>(stream.symbols.size()), source_dimension(gop));
}

template <typename T>
Tensor<T> gop_to_tensor(const Gop& gop) {
  validate_gop(gop);
  const Frame& f0 = gop.front();
  Tensor<T> t(gop.size(), f0.channels, f0.height, f0.width);
  for (int n = 0; n < gop.size(); ++n) {
    const Frame& f = gop.frames[n];
    for (int y = 0; y < f.height; ++y) {
      for (int x = 0; x < f.width; ++x) {
        for (int c = 0; c < f.channels; ++c) t.at(n, c, y, x) = static_cast<T>(f.at(y, x, c));
      }
    }
  }
  return t;
}

template Tensor<float> gop_to_tensor<float>(const Gop&);
template Tensor<double> gop_to_tensor<double>(const Gop&);

Gop tensor_to_gop(const Tensor<float>& t, int64_t gop_id, bool clamp) {
  Gop gop;
  gop.gop_id = gop_id;
  for (int n = 0; n < t.n; ++n) {
    Frame f(t.h, t.w, t.c, n);
    for (int y = 0; y < t.h; ++y) {
      for (int x = 0; x < t.w; ++x) {
        for (int c = 0; c < t.c; ++c) {
          float v = t.at(n, c, y, x);
          f.at(y, x, c) = clamp ? std::clamp(v, 0.0f, 1.0f) : v;
        }
      }
    }
    gop.frames.push_back(std::move(f));
  }
  return gop;
}

}  // namespace mdvsc
