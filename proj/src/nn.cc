#include "mdvsc/nn.h"

#include <Eigen/Core>
#include <cmath>

namespace mdvsc {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct Geometry {
  int channels, height, width, kernel, stride, pad, out_height, out_width;
};

Geometry conv_geometry(int channels, int height, int width, int kernel,
                       int stride) {
  const int pad = kernel / 2;
  return {channels,
          height,
          width,
          kernel,
          stride,
          pad,
          (height + 2 * pad - kernel) / stride + 1,
          (width + 2 * pad - kernel) / stride + 1};
}

// cols[(c*k + ky)*k + kx][oy*ow + ox] = img[c][oy*s - p + ky][ox*s - p + kx]
template <typename T>
void im2col(const T* img, const Geometry& g, T* cols) {
  const int out_pixels = g.out_height * g.out_width;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + static_cast<size_t>((c * g.kernel + ky) * g.kernel + kx) *
                            out_pixels;
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * g.out_width;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_width, T(0));
            continue;
          }
          const T* src = img + (static_cast<size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-and-adds columns back into an image.
template <typename T>
void col2im(const T* cols, const Geometry& g, T* img) {
  std::fill(img, img + static_cast<size_t>(g.channels) * g.height * g.width, T(0));
  const int out_pixels = g.out_height * g.out_width;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + static_cast<size_t>((c * g.kernel + ky) * g.kernel + kx) *
                                  out_pixels;
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = img + (static_cast<size_t>(c) * g.height + iy) * g.width;
          const T* src = row + oy * g.out_width;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void init_weights(Param<T>& weight, double fan_in, Rng& rng) {
  const double scale = std::sqrt(1.0 / fan_in);
  for (auto& v : weight.value.data) v = static_cast<T>(scale * rng.normal());
}

}  // namespace

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data) {
    if (v < T(0)) v *= static_cast<T>(kLeakySlope);
  }
  return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& pre, const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (size_t i = 0; i < g.data.size(); ++i) {
    if (pre.data[i] < T(0)) g.data[i] *= static_cast<T>(kLeakySlope);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels,
                  int kernel, int stride, Rng& rng)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      weight_(name + ".weight", out_channels, in_channels, kernel, kernel),
      bias_(name + ".bias", 1, out_channels, 1, 1) {
  init_weights(weight_, static_cast<double>(in_channels) * kernel * kernel, rng);
}

template <typename T>
void Conv2d<T>::zero_init() {
  std::fill(weight_.value.data.begin(), weight_.value.data.end(), T(0));
  std::fill(bias_.value.data.begin(), bias_.value.data.end(), T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  if (x.c != in_channels_) {
    throw std::invalid_argument("conv " + weight_.name + ": expected " +
                                std::to_string(in_channels_) + " channels, got " +
                                x.shape_string());
  }
  const Geometry g = conv_geometry(x.c, x.h, x.w, kernel_, stride_);
  const int pixels = g.out_height * g.out_width;
  const int patch = in_channels_ * kernel_ * kernel_;
  Tensor<T> y(x.n, out_channels_, g.out_height, g.out_width);
  AlignedVector<T> cols(static_cast<size_t>(patch) * pixels);
  ConstMatrixMap<T> wmat(weight_.value.data.data(), out_channels_, patch);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.image(i), g, cols.data());
    MatrixMap<T> out(y.image(i), out_channels_, pixels);
    out.noalias() = wmat * ConstMatrixMap<T>(cols.data(), patch, pixels);
    for (int oc = 0; oc < out_channels_; ++oc) {
      out.row(oc).array() += bias_.value.data[oc];
    }
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  const Geometry g = conv_geometry(x.c, x.h, x.w, kernel_, stride_);
  const int pixels = g.out_height * g.out_width;
  const int patch = in_channels_ * kernel_ * kernel_;
  Tensor<T> gx(x.n, x.c, x.h, x.w);
  AlignedVector<T> cols(static_cast<size_t>(patch) * pixels);
  AlignedVector<T> gcols(cols.size());
  ConstMatrixMap<T> wmat(weight_.value.data.data(), out_channels_, patch);
  MatrixMap<T> gw(weight_.grad.data.data(), out_channels_, patch);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.image(i), g, cols.data());
    ConstMatrixMap<T> gy(grad_out.image(i), out_channels_, pixels);
    gw.noalias() += gy * ConstMatrixMap<T>(cols.data(), patch, pixels).transpose();
    for (int oc = 0; oc < out_channels_; ++oc) {
      bias_.grad.data[oc] += gy.row(oc).sum();
    }
    MatrixMap<T>(gcols.data(), patch, pixels).noalias() = wmat.transpose() * gy;
    col2im(gcols.data(), g, gx.image(i));
  }
  return gx;
}

// ---------------------------------------------------------------------------
// ConvTranspose2d: forward is the data-gradient of a stride-2 conv mapping
// out_channels -> in_channels at twice the resolution.

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int in_channels,
                                    int out_channels, int kernel, Rng& rng)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      weight_(name + ".weight", in_channels, out_channels, kernel, kernel),
      bias_(name + ".bias", 1, out_channels, 1, 1) {
  // Each output pixel receives about k*k/4 taps per input channel.
  init_weights(weight_, static_cast<double>(in_channels) * kernel * kernel / 4.0,
               rng);
}

template <typename T>
void ConvTranspose2d<T>::zero_init() {
  std::fill(weight_.value.data.begin(), weight_.value.data.end(), T(0));
  std::fill(bias_.value.data.begin(), bias_.value.data.end(), T(0));
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, int out_h, int out_w) const {
  if (x.c != in_channels_) {
    throw std::invalid_argument("deconv " + weight_.name + ": expected " +
                                std::to_string(in_channels_) + " channels, got " +
                                x.shape_string());
  }
  if (out_h <= 0) out_h = 2 * x.h;
  if (out_w <= 0) out_w = 2 * x.w;
  const Geometry g = conv_geometry(out_channels_, out_h, out_w, kernel_, 2);
  if (g.out_height != x.h || g.out_width != x.w) {
    throw std::invalid_argument("deconv " + weight_.name + ": output size " +
                                std::to_string(out_h) + "x" + std::to_string(out_w) +
                                " incompatible with input " + x.shape_string());
  }
  const int pixels = x.h * x.w;
  const int patch = out_channels_ * kernel_ * kernel_;
  Tensor<T> y(x.n, out_channels_, out_h, out_w);
  AlignedVector<T> cols(static_cast<size_t>(patch) * pixels);
  ConstMatrixMap<T> wmat(weight_.value.data.data(), in_channels_, patch);
  for (int i = 0; i < x.n; ++i) {
    MatrixMap<T>(cols.data(), patch, pixels).noalias() =
        wmat.transpose() * ConstMatrixMap<T>(x.image(i), in_channels_, pixels);
    col2im(cols.data(), g, y.image(i));
    const size_t plane = static_cast<size_t>(y.h) * y.w;
    for (int oc = 0; oc < out_channels_; ++oc) {
      T* p = y.image(i) + oc * plane;
      const T b = bias_.value.data[oc];
      for (size_t k = 0; k < plane; ++k) p[k] += b;
    }
  }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  const Geometry g = conv_geometry(out_channels_, grad_out.h, grad_out.w, kernel_, 2);
  const int pixels = x.h * x.w;
  const int patch = out_channels_ * kernel_ * kernel_;
  Tensor<T> gx(x.n, x.c, x.h, x.w);
  AlignedVector<T> gcols(static_cast<size_t>(patch) * pixels);
  ConstMatrixMap<T> wmat(weight_.value.data.data(), in_channels_, patch);
  MatrixMap<T> gw(weight_.grad.data.data(), in_channels_, patch);
  const size_t plane = static_cast<size_t>(grad_out.h) * grad_out.w;
  for (int i = 0; i < x.n; ++i) {
    for (int oc = 0; oc < out_channels_; ++oc) {
      const T* p = grad_out.image(i) + oc * plane;
      T s = 0;
      for (size_t k = 0; k < plane; ++k) s += p[k];
      bias_.grad.data[oc] += s;
    }
    im2col(grad_out.image(i), g, gcols.data());
    ConstMatrixMap<T> gc(gcols.data(), patch, pixels);
    ConstMatrixMap<T> xin(x.image(i), in_channels_, pixels);
    gw.noalias() += xin * gc.transpose();
    MatrixMap<T>(gx.image(i), in_channels_, pixels).noalias() = wmat * gc;
  }
  return gx;
}

// ---------------------------------------------------------------------------
// ResidualBlock

template <typename T>
ResidualBlock<T>::ResidualBlock(const std::string& name, int channels,
                                int kernel, Rng& rng)
    : first_(name + ".conv1", channels, channels, kernel, 1, rng),
      second_(name + ".conv2", channels, channels, kernel, 1, rng) {}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y = second_.forward(leaky_relu(first_.forward(x)));
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
  return y;
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward_train(const Tensor<T>& x) {
  saved_input_ = x;
  saved_hidden_ = first_.forward(x);
  Tensor<T> y = second_.forward(leaky_relu(saved_hidden_));
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
  return y;
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = second_.backward(leaky_relu(saved_hidden_), grad_out);
  g = leaky_relu_backward(saved_hidden_, g);
  Tensor<T> gx = first_.backward(saved_input_, g);
  for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += grad_out.data[i];
  return gx;
}

// ---------------------------------------------------------------------------
// DownStage / UpStage

template <typename T>
DownStage<T>::DownStage(const std::string& name, int in_channels,
                        int out_channels, int resample_kernel,
                        int residual_blocks, int residual_kernel, Rng& rng)
    : down_(name + ".down", in_channels, out_channels, resample_kernel, 2, rng) {
  for (int b = 0; b < residual_blocks; ++b) {
    blocks_.emplace_back(name + ".res" + std::to_string(b), out_channels,
                         residual_kernel, rng);
  }
}

template <typename T>
Tensor<T> DownStage<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y = leaky_relu(down_.forward(x));
  for (const auto& b : blocks_) y = b.forward(y);
  return y;
}

template <typename T>
Tensor<T> DownStage<T>::forward_train(const Tensor<T>& x) {
  saved_input_ = x;
  saved_pre_ = down_.forward(x);
  Tensor<T> y = leaky_relu(saved_pre_);
  for (auto& b : blocks_) y = b.forward_train(y);
  return y;
}

template <typename T>
Tensor<T> DownStage<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  g = leaky_relu_backward(saved_pre_, g);
  return down_.backward(saved_input_, g);
}

template <typename T>
void DownStage<T>::collect(std::vector<Param<T>*>& out) {
  down_.collect(out);
  for (auto& b : blocks_) b.collect(out);
}

template <typename T>
UpStage<T>::UpStage(const std::string& name, int in_channels, int out_channels,
                    int resample_kernel, int residual_blocks,
                    int residual_kernel, bool activate, Rng& rng)
    : activate_(activate) {
  for (int b = 0; b < residual_blocks; ++b) {
    blocks_.emplace_back(name + ".res" + std::to_string(b), in_channels,
                         residual_kernel, rng);
  }
  up_ = ConvTranspose2d<T>(name + ".up", in_channels, out_channels,
                           resample_kernel, rng);
}

template <typename T>
Tensor<T> UpStage<T>::forward(const Tensor<T>& x) const {
  Tensor<T> y = x;
  for (const auto& b : blocks_) y = b.forward(y);
  y = up_.forward(y);
  return activate_ ? leaky_relu(y) : y;
}

template <typename T>
Tensor<T> UpStage<T>::forward_train(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& b : blocks_) y = b.forward_train(y);
  saved_up_input_ = y;
  saved_pre_ = up_.forward(y);
  return activate_ ? leaky_relu(saved_pre_) : saved_pre_;
}

template <typename T>
Tensor<T> UpStage<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = activate_ ? leaky_relu_backward(saved_pre_, grad_out) : grad_out;
  g = up_.backward(saved_up_input_, g);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  return g;
}

template <typename T>
void UpStage<T>::collect(std::vector<Param<T>*>& out) {
  for (auto& b : blocks_) b.collect(out);
  up_.collect(out);
}

#define MDVSC_INSTANTIATE(T)                                                   \
  template Tensor<T> leaky_relu(const Tensor<T>&);                            \
  template Tensor<T> leaky_relu_backward(const Tensor<T>&, const Tensor<T>&); \
  template class Conv2d<T>;                                                    \
  template class ConvTranspose2d<T>;                                           \
  template class ResidualBlock<T>;                                             \
  template class DownStage<T>;                                                 \
  template class UpStage<T>;

MDVSC_INSTANTIATE(float)
MDVSC_INSTANTIATE(double)

#undef MDVSC_INSTANTIATE

}  // namespace mdvsc
