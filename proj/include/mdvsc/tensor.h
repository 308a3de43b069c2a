#ifndef MDVSC_TENSOR_H_
#define MDVSC_TENSOR_H_

#include <algorithm>
#include <cstddef>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdvsc {

// Allocates on 64-byte boundaries so vectorized kernels see the same
// alignment on every run, which keeps floating-point results reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Dense NCHW array. n indexes images (frames or feature maps), c channels.
template <typename T>
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  AlignedVector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t size() const { return data.size(); }
  size_t image_size() const { return static_cast<size_t>(c) * h * w; }
  bool empty() const { return data.empty(); }

  T& at(int i, int ch, int y, int x) {
    return data[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
  }
  const T& at(int i, int ch, int y, int x) const {
    return data[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
  }

  T* image(int i) { return data.data() + static_cast<size_t>(i) * image_size(); }
  const T* image(int i) const {
    return data.data() + static_cast<size_t>(i) * image_size();
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool same_image_shape(const Tensor& o) const {
    return c == o.c && h == o.h && w == o.w;
  }

  std::string shape_string() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }

  // Images [first, first + count) as a new tensor.
  Tensor slice(int first, int count) const {
    Tensor out(count, c, h, w);
    std::copy(image(first), image(first) + static_cast<size_t>(count) * image_size(),
              out.data.begin());
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

// Stacks images of equal shape along the n axis.
template <typename T>
Tensor<T> concat_images(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) return {};
  int total = 0;
  for (const auto& p : parts) {
    if (!p.same_image_shape(parts.front())) {
      throw std::invalid_argument("concat_images: shape mismatch " +
                                  p.shape_string() + " vs " +
                                  parts.front().shape_string());
    }
    total += p.n;
  }
  Tensor<T> out(total, parts.front().c, parts.front().h, parts.front().w);
  auto it = out.data.begin();
  for (const auto& p : parts) it = std::copy(p.data.begin(), p.data.end(), it);
  return out;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace mdvsc

#endif  // MDVSC_TENSOR_H_
