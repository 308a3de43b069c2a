#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mdvsc/nn.h"

using namespace mdvsc;

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, Rng& rng) {
  Tensor<double> t(n, c, h, w);
  for (double& v : t.data) v = rng.normal();
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Checks d<r, layer(x)>/dx and /dparams against central differences.
template <typename Forward, typename Backward>
void check_layer(std::vector<Param<double>*> params, Tensor<double> x, const Forward& fwd,
                 const Backward& bwd, Rng& rng) {
  const Tensor<double> y = fwd(x);
  const Tensor<double> r = random_tensor(y.n, y.c, y.h, y.w, rng);
  for (auto* p : params) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
  const Tensor<double> gx = bwd(x, r);
  const double h = 1e-6;
  for (int k = 0; k < 6; ++k) {
    const size_t i = rng.below(x.size());
    const double saved = x.data[i];
    x.data[i] = saved + h;
    const double up = dot(r, fwd(x));
    x.data[i] = saved - h;
    const double down = dot(r, fwd(x));
    x.data[i] = saved;
    CHECK(gx.data[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
  }
  for (auto* p : params) {
    for (int k = 0; k < 4; ++k) {
      const size_t i = rng.below(p->value.size());
      const double saved = p->value.data[i];
      p->value.data[i] = saved + h;
      const double up = dot(r, fwd(x));
      p->value.data[i] = saved - h;
      const double down = dot(r, fwd(x));
      p->value.data[i] = saved;
      CHECK(p->grad.data[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
  }
}

}  // namespace

TEST_CASE("leaky relu and its derivative") {
  Tensor<double> x(1, 1, 1, 4);
  x.data = {-2.0, -0.5, 0.0, 3.0};
  CHECK(std::ranges::equal(leaky_relu(x).data, std::vector<double>{-0.4, -0.1, 0.0, 3.0}));
  Tensor<double> g(1, 1, 1, 4, 1.0);
  CHECK(std::ranges::equal(leaky_relu_backward(x, g).data, std::vector<double>{0.2, 0.2, 1.0, 1.0}));
}

TEST_CASE("convolution shapes") {
  Rng rng(1);
  Conv2d<float> same("c", 3, 5, 3, 1, rng);
  CHECK(same.forward(Tensor<float>(2, 3, 8, 6)).shape_string() == "2x5x8x6");
  Conv2d<float> down("d", 3, 4, 5, 2, rng);
  CHECK(down.forward(Tensor<float>(1, 3, 8, 8)).shape_string() == "1x4x4x4");
  ConvTranspose2d<float> up("u", 4, 2, 5, rng);
  CHECK(up.forward(Tensor<float>(1, 4, 4, 4)).shape_string() == "1x2x8x8");
  CHECK(up.forward(Tensor<float>(1, 4, 1, 1), 2, 2).shape_string() == "1x2x2x2");
  CHECK_THROWS(same.forward(Tensor<float>(1, 2, 8, 8)));
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(2);
  Conv2d<double> conv("c", 3, 4, 3, 1, rng);
  std::vector<Param<double>*> ps;
  conv.collect(ps);
  check_layer(
      ps, random_tensor(2, 3, 5, 6, rng), [&](const Tensor<double>& x) { return conv.forward(x); },
      [&](const Tensor<double>& x, const Tensor<double>& g) { return conv.backward(x, g); }, rng);
}

TEST_CASE("strided conv2d gradients match finite differences") {
  Rng rng(3);
  Conv2d<double> conv("c", 2, 3, 5, 2, rng);
  std::vector<Param<double>*> ps;
  conv.collect(ps);
  check_layer(
      ps, random_tensor(1, 2, 8, 8, rng), [&](const Tensor<double>& x) { return conv.forward(x); },
      [&](const Tensor<double>& x, const Tensor<double>& g) { return conv.backward(x, g); }, rng);
}

TEST_CASE("transposed conv gradients match finite differences") {
  Rng rng(4);
  ConvTranspose2d<double> up("u", 3, 2, 5, rng);
  std::vector<Param<double>*> ps;
  up.collect(ps);
  check_layer(
      ps, random_tensor(2, 3, 3, 4, rng), [&](const Tensor<double>& x) { return up.forward(x); },
      [&](const Tensor<double>& x, const Tensor<double>& g) { return up.backward(x, g); }, rng);
}

TEST_CASE("residual and resampling stages backpropagate correctly") {
  Rng rng(5);
  DownStage<double> down("down", 3, 4, 5, 2, 3, rng);
  std::vector<Param<double>*> ps;
  down.collect(ps);
  check_layer(
      ps, random_tensor(1, 3, 8, 8, rng),
      [&](const Tensor<double>& x) { return down.forward(x); },
      [&](const Tensor<double>& x, const Tensor<double>& g) {
        down.forward_train(x);
        return down.backward(g);
      },
      rng);

  UpStage<double> up("up", 4, 3, 5, 1, 3, true, rng);
  std::vector<Param<double>*> ups;
  up.collect(ups);
  check_layer(
      ups, random_tensor(1, 4, 4, 4, rng), [&](const Tensor<double>& x) { return up.forward(x); },
      [&](const Tensor<double>& x, const Tensor<double>& g) {
        up.forward_train(x);
        return up.backward(g);
      },
      rng);
}

TEST_CASE("forward_train matches forward") {
  Rng rng(6);
  DownStage<float> down("down", 3, 4, 5, 2, 3, rng);
  Tensor<float> x(2, 3, 8, 8);
  for (float& v : x.data) v = static_cast<float>(rng.normal());
  CHECK(down.forward_train(x).data == down.forward(x).data);
}
