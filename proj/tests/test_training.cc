#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "mdvsc/training.h"

using namespace mdvsc;

namespace {

CodecConfig tiny_config(bool use_cfe) {
  CodecConfig c;
  c.channel_width = 4;
  c.jscc_blocks = 1;
  c.residual_per_block = 1;
  c.hyper_width = 3;
  c.use_cfe = use_cfe;
  return c;
}

// Every parameter, including zero-initialized ones, gets a random value so
// no gradient path is trivially zero.
void randomize(MdvscNet<double>& net, uint64_t seed) {
  Rng rng(seed);
  for (Param<double>* p : net.params()) {
    const double s = 1.0 / std::sqrt(static_cast<double>(p->value.image_size()) + 1.0);
    for (double& v : p->value.data) v = s * rng.normal() + (p->value.n == 1 ? 0.02 : 0.0);
  }
}

Tensor<double> random_frames(int n, int h, int w, uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t(n, 3, h, w);
  for (double& v : t.data) v = rng.uniform();
  return t;
}

struct GradCheck {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
};

GradCheck check_gradients(bool use_cfe, double snr_db, double lambda) {
  MdvscNet<double> net(tiny_config(use_cfe), 5);
  randomize(net, 11);
  const Tensor<double> frames = random_frames(4, 8, 8, 3);
  const int gop = 2;
  auto eval = [&](bool grads) {
    Rng rng(99);
    return chain_loss(net, frames, gop, lambda, snr_db, rng, grads).loss;
  };
  zero_gradients(net);
  eval(true);

  GradCheck out;
  Rng pick(7);
  const double h = 1e-6;
  for (Param<double>* p : net.params()) {
    for (int k = 0; k < 3; ++k) {
      const size_t i = pick.below(p->value.size());
      const double saved = p->value.data[i];
      p->value.data[i] = saved + h;
      const double up = eval(false);
      p->value.data[i] = saved - h;
      const double down = eval(false);
      p->value.data[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = p->grad.data[i];
      const double err = std::abs(fd - an) / (1e-6 + std::max(std::abs(fd), std::abs(an)));
      ++out.checked;
      if (err > 1e-3) {
        ++out.failed;
        MESSAGE(p->name << "[" << i << "] fd=" << fd << " analytic=" << an);
      }
      out.worst = std::max(out.worst, err);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences with common features") {
  const GradCheck r = check_gradients(true, 10.0, 0.05);
  CHECK(r.checked > 50);
  CHECK(r.failed == 0);
}

TEST_CASE("analytic gradients match finite differences without common features") {
  const GradCheck r = check_gradients(false, 5.0, 0.5);
  CHECK(r.failed == 0);
}

TEST_CASE("analytic gradients match finite differences over a noiseless channel") {
  const GradCheck r = check_gradients(true, std::numeric_limits<double>::infinity(), 1.0);
  CHECK(r.failed == 0);
}

namespace {

CodecConfig small_codec() {
  CodecConfig c;
  c.channel_width = 8;
  c.residual_per_block = 1;
  c.hyper_width = 4;
  return c;
}

TrainConfig small_train(int64_t steps) {
  TrainConfig t = toy_train_config();
  t.batch_size = 2;
  t.gop_size = 2;
  t.crop = 32;
  t.steps = steps;
  t.seed = 3;
  return t;
}

ToyDataset small_data() {
  return ToyDataset{.seed = 1, .clip_count = 20, .height = 32, .width = 32, .gop_size = 2};
}

std::vector<double> losses(const std::vector<TrainLogEntry>& log) {
  std::vector<double> out;
  for (const auto& e : log) out.push_back(e.loss.loss);
  return out;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& b) {
  std::ofstream os(p, std::ios::binary);
  os.write(b.data(), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("loss combines rate and distortion") {
  Gop gop;
  gop.frames.emplace_back(10, 10, 3, 0);
  EntropyMaps ent;
  ent.common = Tensor<float>(1, 1, 1, 3);
  ent.common.data = {1.0f, 1.0f, 1.0f};  // 3 bits over 300 dimensions
  TrainConfig cfg;
  cfg.lambda_rate = 1.0;
  const LossBreakdown lb = loss(gop, gop, ent, cfg);
  CHECK(lb.rate_bpd == doctest::Approx(0.01));
  CHECK(lb.distortion == 0.0);
  CHECK(lb.loss == doctest::Approx(0.01));

  Gop shifted = gop;
  for (float& v : shifted.frames[0].pixels) v += 0.1f;
  cfg.lambda_rate = 2.0;
  const LossBreakdown lb2 = loss(gop, shifted, ent, cfg);
  CHECK(lb2.distortion == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(lb2.loss == doctest::Approx(0.03).epsilon(1e-5));
}

TEST_CASE("cosine schedule endpoints") {
  const ScheduleState s{1e-4, 1e-6, 1000};
  CHECK(learning_rate(s, 0) == doctest::Approx(1e-4));
  CHECK(learning_rate(s, 1000) == doctest::Approx(1e-6));
  CHECK(learning_rate(s, 500) == doctest::Approx(0.5 * (1e-4 + 1e-6)));
  CHECK(learning_rate(s, 5000) == doctest::Approx(1e-6));
  double previous = 1.0;
  for (int64_t k = 0; k <= 1000; k += 50) {
    CHECK(learning_rate(s, k) <= previous);
    previous = learning_rate(s, k);
  }
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  ModelState state = ModelState::create(small_codec(), 2);
  std::vector<AlignedVector<float>> before;
  for (Param<float>* p : state.net.params()) before.push_back(p->value.data);
  zero_gradients(state.net);
  adam_update(state, small_train(10), 1e-3);
  size_t k = 0;
  for (Param<float>* p : state.net.params()) CHECK(p->value.data == before[k++]);
}

TEST_CASE("training config validation") {
  TrainConfig t = toy_train_config();
  t.lr_min = 1.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = toy_train_config();
  t.crop = 40;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = toy_train_config();
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  CHECK_NOTHROW(full_scale_train_config().validate());
}

TEST_CASE("identically seeded runs give identical loss traces") {
  ModelState a = ModelState::create(small_codec(), 4);
  ModelState b = ModelState::create(small_codec(), 4);
  const auto la = losses(train(a, small_data(), small_train(6)));
  const auto lb = losses(train(b, small_data(), small_train(6)));
  CHECK(la.size() == 6);
  CHECK(la == lb);
  for (size_t k = 0; k < a.net.params().size(); ++k) {
    CHECK(a.net.params()[k]->value.data == b.net.params()[k]->value.data);
  }
}

TEST_CASE("resuming from a checkpoint continues the run exactly") {
  const auto path = temp_file("mdvsc_resume.ckpt");
  ModelState full = ModelState::create(small_codec(), 5);
  const auto all = losses(train(full, small_data(), small_train(6)));

  ModelState first = ModelState::create(small_codec(), 5);
  const auto head = losses(train(first, small_data(), small_train(6), {}, 3));
  CHECK(first.step == 3);
  save_checkpoint(first, path);
  ModelState resumed = load_checkpoint(path);
  CHECK(resumed.step == 3);
  const auto tail = losses(train(resumed, small_data(), small_train(6)));
  CHECK(resumed.step == 6);

  std::vector<double> joined = head;
  joined.insert(joined.end(), tail.begin(), tail.end());
  CHECK(joined == all);
  for (size_t k = 0; k < full.net.params().size(); ++k) {
    CHECK(full.net.params()[k]->value.data == resumed.net.params()[k]->value.data);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const auto path = temp_file("mdvsc_roundtrip.ckpt");
  ModelState s = ModelState::create(small_codec(), 6);
  train(s, small_data(), small_train(2));
  save_checkpoint(s, path);
  const ModelState back = load_checkpoint(path);
  CHECK(back.step == s.step);
  CHECK(back.config().channel_width == 8);
  CHECK(back.schedule.total_steps == 2);
  const auto pa = s.net.params();
  const auto pb = const_cast<ModelState&>(back).net.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t k = 0; k < pa.size(); ++k) {
    CHECK(pa[k]->name == pb[k]->name);
    CHECK(pa[k]->value.data == pb[k]->value.data);
    CHECK(s.adam_m[k].data == back.adam_m[k].data);
    CHECK(s.adam_v[k].data == back.adam_v[k].data);
  }
  const auto second = temp_file("mdvsc_roundtrip2.ckpt");
  save_checkpoint(back, second);
  CHECK(read_bytes(path) == read_bytes(second));
  std::filesystem::remove(second);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint version and corruption errors") {
  const auto path = temp_file("mdvsc_corrupt.ckpt");
  save_checkpoint(ModelState::create(small_codec(), 7), path);
  const std::vector<char> good = read_bytes(path);

  std::vector<char> version = good;
  version[4] = 2;
  write_bytes(path, version);
  try {
    load_checkpoint(path);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  std::vector<char> flipped = good;
  flipped[good.size() / 2] ^= 0x10;
  write_bytes(path, flipped);
  try {
    load_checkpoint(path);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }

  write_bytes(path, std::vector<char>(good.begin(), good.begin() + 10));
  CHECK_THROWS(load_checkpoint(path));
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("a non-finite loss stops training with the failing step") {
  ModelState s = ModelState::create(small_codec(), 8);
  train(s, small_data(), small_train(4), {}, 2);
  s.net.params().front()->value.data[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(s, small_data(), small_train(4));
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.last_good_step() == 2);
    CHECK(std::string(e.what()).find("step 2") != std::string::npos);
  }
}

TEST_CASE("training lowers the loss on a fixed batch") {
  ModelState s = ModelState::create(small_codec(), 9);
  TrainConfig t = small_train(40);
  const auto log = losses(train(s, small_data(), t));
  double head = 0, tail = 0;
  for (int k = 0; k < 5; ++k) {
    head += log[k];
    tail += log[log.size() - 1 - k];
  }
  CHECK(tail < head);
}

TEST_CASE("a frame sequence can feed training") {
  Rng rng(10);
  SceneSpec spec = random_scene(rng, 32, 32, 9);
  const ClipSource source(generate_clip(spec, rng), 2);
  CHECK(source.clip_count == 4);
  CHECK(source.clip(3).frames[1].index == 7);
  ModelState s = ModelState::create(small_codec(), 11);
  CHECK(train(s, source, small_train(2)).size() == 2);
  CHECK_THROWS(ClipSource(std::vector<Frame>(1, Frame(32, 32, 3)), 2));
}

TEST_CASE("lambda calibration picks the most balanced candidate") {
  const ClipSource source(small_data());
  TrainConfig t = small_train(2);
  const double chosen = calibrate_lambda({1e-9, 1.0}, small_codec(), source, t, 2);
  CHECK(chosen == 1.0);
  CHECK(calibrate_lambda({1e-9, 1.0}, small_codec(), source, t, 2) == chosen);
  CHECK_THROWS_AS(calibrate_lambda({}, small_codec(), source, t, 2), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_lambda({1.0}, small_codec(), source, t, 0), std::invalid_argument);
}
