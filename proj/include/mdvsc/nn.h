#ifndef MDVSC_NN_H_
#define MDVSC_NN_H_

#include <memory>
#include <string>
#include <vector>

#include "mdvsc/rng.h"
#include "mdvsc/tensor.h"

namespace mdvsc {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string name_, int n, int c, int h, int w)
      : name(std::move(name_)), value(n, c, h, w), grad(n, c, h, w) {}
};

inline constexpr double kLeakySlope = 0.2;

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x);

// Gradient of leaky_relu given its pre-activation input.
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& pre, const Tensor<T>& grad_out);

// Strided convolution with "same"-style padding k/2. For even inputs and
// stride 2 the output is exactly half the input size.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel,
         int stride, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  // Accumulates parameter gradients; returns the input gradient.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& grad_out);

  void zero_init();
  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  int out_channels() const { return out_channels_; }

 private:
  int in_channels_ = 0;
  int out_channels_ = 0;
  int kernel_ = 0;
  int stride_ = 1;
  Param<T> weight_;  // out x in x k x k
  Param<T> bias_;    // 1 x out x 1 x 1
};

// Adjoint of a stride-2 Conv2d. The output size defaults to twice the input;
// any size whose stride-2 convolution yields the input size is accepted.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_channels, int out_channels,
                  int kernel, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, int out_h = 0, int out_w = 0) const;
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& grad_out);

  void zero_init();
  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  int in_channels_ = 0;
  int out_channels_ = 0;
  int kernel_ = 0;
  Param<T> weight_;  // in x out x k x k
  Param<T> bias_;
};

// x + conv(leaky(conv(x))).
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int channels, int kernel, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

  void collect(std::vector<Param<T>*>& out) {
    first_.collect(out);
    second_.collect(out);
  }

 private:
  Conv2d<T> first_;
  Conv2d<T> second_;
  Tensor<T> saved_input_;
  Tensor<T> saved_hidden_;
};

// A resampling layer followed (down) or preceded (up) by residual blocks,
// with a leaky rectifier after the resampling convolution.
template <typename T>
class DownStage {
 public:
  DownStage() = default;
  DownStage(const std::string& name, int in_channels, int out_channels,
            int resample_kernel, int residual_blocks, int residual_kernel,
            Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(std::vector<Param<T>*>& out);

 private:
  Conv2d<T> down_;
  std::vector<ResidualBlock<T>> blocks_;
  Tensor<T> saved_input_;
  Tensor<T> saved_pre_;
};

// Residual blocks then a transposed convolution. When `activate` is false the
// stage output is the raw transposed-convolution result (final layers).
template <typename T>
class UpStage {
 public:
  UpStage() = default;
  UpStage(const std::string& name, int in_channels, int out_channels,
          int resample_kernel, int residual_blocks, int residual_kernel,
          bool activate, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(std::vector<Param<T>*>& out);

 private:
  std::vector<ResidualBlock<T>> blocks_;
  ConvTranspose2d<T> up_;
  bool activate_ = true;
  Tensor<T> saved_up_input_;
  Tensor<T> saved_pre_;
};

}  // namespace mdvsc

#endif  // MDVSC_NN_H_
