#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mdvsc/harness.h"

using namespace mdvsc;
using namespace mdvsc::harness;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "seed": 2,
  "plots": false,
  "codec": {"channel_width": 8, "residual_per_block": 1, "hyper_width": 4},
  "train": {"batch_size": 2, "gop_size": 2, "crop": 32, "steps": 4,
            "log_every": 2, "checkpoint_every": 2},
  "data": {"clips": 6, "height": 32, "width": 32},
  "eval": {"clips": 2, "height": 32, "width": 32, "cbr": 0.01},
  "sweep": {"cbr_grid": [0.005, 0.01], "snr_grid": [5, "inf"], "drop_grid": [0, 0.5],
            "delta_grid": [-0.1, 0, 0.1], "policy_seeds": 2},
  "jitter": {"gops": 4, "jump_every": 2}
})";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mdvsc_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_config(const fs::path& dir) {
  ExperimentConfig c = parse_config(kTinyConfig);
  c.out = dir;
  c.checkpoint = dir / "tiny.ckpt";
  c.validate();
  return c;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text).validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mdvsc");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

// Trains the shared tiny checkpoint once per process.
const ExperimentConfig& trained_tiny() {
  static const ExperimentConfig config = [] {
    ExperimentConfig c = tiny_config(fresh_dir("shared"));
    cmd_train(c);
    return c;
  }();
  return config;
}

}  // namespace

TEST_CASE("config parsing reads nested sections") {
  const ExperimentConfig c = parse_config(kTinyConfig);
  CHECK(c.seed == 2);
  CHECK(c.train.seed == 2);
  CHECK(c.codec.channel_width == 8);
  CHECK(c.train.steps == 4);
  CHECK(c.checkpoint_every == 2);
  CHECK(c.eval.clips == 2);
  CHECK(c.eval_cbr == doctest::Approx(0.01));
  REQUIRE(c.snr_grid.size() == 2);
  CHECK(std::isinf(c.snr_grid[1]));
  CHECK(c.jump_every == 2);
}

TEST_CASE("unknown config keys are rejected by name") {
  CHECK(config_error(R"({"sede": 1})").find("'sede'") != std::string::npos);
  CHECK(config_error(R"({"train": {"stepz": 1}})").find("'train.stepz'") != std::string::npos);
  CHECK(config_error(R"({"eval": {"snr": 1}})").find("'eval.snr'") != std::string::npos);
}

TEST_CASE("config type and range errors name the key") {
  CHECK(config_error(R"({"train": {"steps": "many"}})").find("train.steps") != std::string::npos);
  CHECK(config_error(R"({"codec": {"use_cfe": 3}})").find("codec.use_cfe") != std::string::npos);
  CHECK(config_error(R"({"eval": {"policy": "largest"}})").find("eval.policy") !=
        std::string::npos);
  CHECK(config_error(R"({"sweep": {"cbr_grid": [2]}})").find("sweep.cbr_grid") !=
        std::string::npos);
  CHECK(config_error(R"({"eval": {"cbr": 0}})").find("eval.cbr") != std::string::npos);
  CHECK(config_error("{not json").find("JSON") != std::string::npos);
  CHECK(config_error(R"({"train": {"steps": 10}})").empty());
}

TEST_CASE("overrides replace nested values") {
  const std::string text = apply_overrides(
      kTinyConfig, {"train.steps=9", "eval.policy=power", "codec.use_cfe=false", "out=a/b"});
  const ExperimentConfig c = parse_config(text);
  CHECK(c.train.steps == 9);
  CHECK(c.policy == DropPolicy::kPower);
  CHECK_FALSE(c.codec.use_cfe);
  CHECK(c.out == fs::path("a/b"));
  CHECK_THROWS_AS(apply_overrides(kTinyConfig, {"novalue"}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(kTinyConfig, {"seed.x=1"}), ConfigError);
  CHECK_THROWS_AS(parse_config(apply_overrides(kTinyConfig, {"train.bogus=1"})), ConfigError);
}

TEST_CASE("the resolved config parses back to the same config") {
  const ExperimentConfig c = parse_config(kTinyConfig);
  const std::string dumped = dump_config(c);
  CHECK(dump_config(parse_config(dumped)) == dumped);
}

TEST_CASE("cli exit codes") {
  const fs::path dir = fresh_dir("cli");
  const fs::path cfg = dir / "tiny.json";
  std::ofstream(cfg) << kTinyConfig;
  CHECK(cli({"train", "--config", (dir / "missing.json").string()}) == 2);
  CHECK(cli({"fly", "--config", cfg.string()}) == 2);
  CHECK(cli({"train"}) == 2);
  CHECK(cli({"train", "--config", cfg.string(), "train.nope=1"}) == 2);
  CHECK(cli({"train", "--config", cfg.string(), "train.steps=-1"}) == 2);
  // A sweep without a trained checkpoint is a runtime failure.
  CHECK(cli({"sweep-cbr", "--config", cfg.string(), "--out", (dir / "o").string(),
             "checkpoint=" + (dir / "none.ckpt").string()}) == 1);
  CHECK(cli({"train", "--config", cfg.string(), "--out", (dir / "t").string(), "--seed", "5",
             "checkpoint=" + (dir / "t.ckpt").string()}) == 0);
  CHECK(fs::exists(dir / "t" / "train_loss.csv"));
  CHECK(fs::exists(dir / "t" / "config_resolved.json"));
  CHECK(parse_config(read_text(dir / "t" / "config_resolved.json")).seed == 5);
}

TEST_CASE("train writes the loss log and resume continues the step counter") {
  const fs::path dir = fresh_dir("resume");
  ExperimentConfig c = tiny_config(dir);
  const CsvTable first = read_csv(cmd_train(c));
  REQUIRE(first.rows.size() == 4);
  CHECK(first.rows.back()[first.column("step")] == "3");
  CHECK(load_checkpoint(c.checkpoint).step == 4);

  c.train.steps = 6;
  c.resume = true;
  const CsvTable resumed = read_csv(cmd_train(c));
  REQUIRE(resumed.rows.size() == 6);
  for (size_t k = 0; k < first.rows.size(); ++k) CHECK(resumed.rows[k] == first.rows[k]);
  CHECK(resumed.rows.back()[resumed.column("step")] == "5");
  CHECK(load_checkpoint(c.checkpoint).step == 6);
}

TEST_CASE("sweeps are byte-identical across runs") {
  const ExperimentConfig& base = trained_tiny();
  const auto run = [&](const std::string& name) {
    ExperimentConfig c = base;
    c.out = fresh_dir(name);
    return read_text(cmd_sweep_cbr(c)) + read_text(cmd_sweep_snr(c)) +
           read_text(cmd_sweep_drop(c));
  };
  const std::string a = run("repeat_a");
  CHECK(!a.empty());
  CHECK(a == run("repeat_b"));
}

TEST_CASE("cbr and snr sweeps have one row per grid point") {
  ExperimentConfig c = trained_tiny();
  c.out = fresh_dir("grids");
  const CsvTable cbr = read_csv(cmd_sweep_cbr(c));
  REQUIRE(cbr.rows.size() == 2);
  for (const auto& row : cbr.rows) {
    CHECK(row[cbr.column("within_one_symbol")] == "1");
    CHECK(row[cbr.column("cbr_with_mask")] == row[cbr.column("achieved_cbr")]);
  }
  c.mask_bits_per_symbol = 1.0;
  c.out = fresh_dir("mask");
  const CsvTable charged = read_csv(cmd_sweep_cbr(c));
  CHECK(std::stod(charged.rows[0][charged.column("cbr_with_mask")]) >
        std::stod(charged.rows[0][charged.column("achieved_cbr")]));

  const CsvTable snr = read_csv(cmd_sweep_snr(c));
  REQUIRE(snr.rows.size() == 2);
  CHECK(snr.rows[1][snr.column("snr_db")] == "inf");
  CHECK(snr.rows[1][snr.column("finite")] == "1");

  c.cbr_grid = {0.008};
  c.out = fresh_dir("single");
  CHECK(read_csv(cmd_sweep_cbr(c)).rows.size() == 1);
}

TEST_CASE("drop, balance, ablation and jitter outputs") {
  ExperimentConfig c = trained_tiny();
  c.out = fresh_dir("others");
  const CsvTable drop = read_csv(cmd_sweep_drop(c));
  CHECK(drop.rows.size() == 2);
  CHECK(drop.rows[0][drop.column("psnr_loss_db")] == "0");

  const CsvTable balance = read_csv(cmd_sweep_balance(c));
  CHECK(balance.rows.size() == 6);
  CHECK(balance.column("group_kept_constant") >= 0);

  const CsvTable ablate = read_csv(cmd_ablate(c));
  CHECK(ablate.rows.size() > 0);
  CHECK(ablate.column("variant") >= 0);

  const CsvTable jitter = read_csv(cmd_jitter(c));
  CHECK(jitter.rows.size() == 4);
  CHECK(jitter.rows[1][jitter.column("kind")] == "jump");
  const CsvTable summary = read_csv(c.out / "jitter_summary.csv");
  REQUIRE(summary.rows.size() == 1);
  CHECK(summary.rows[0][summary.column("cbr_variance")] == "0");
  CHECK(summary.rows[0][summary.column("all_finite")] == "1");
}

TEST_CASE("csv reader") {
  const fs::path dir = fresh_dir("csv");
  std::ofstream(dir / "t.csv") << "a,b\n1,2\n3,\n";
  const CsvTable t = read_csv(dir / "t.csv");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][t.column("b")].empty());
  CHECK_THROWS(t.column("zz"));
  CHECK_THROWS(read_csv(dir / "missing.csv"));
}

TEST_CASE("shipped configs parse and validate") {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(MDVSC_SOURCE_DIR) / "configs")) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()).validate());
    ++count;
  }
  CHECK(count >= 3);
  const ExperimentConfig toy = load_config(fs::path(MDVSC_SOURCE_DIR) / "configs" / "toy.json");
  ExperimentConfig preset;
  preset.seed = toy.seed;
  preset.train.seed = toy.seed;
  // The toy config file mirrors the built-in toy presets.
  CHECK(toy.codec.channel_width == preset.codec.channel_width);
  CHECK(toy.codec.hyper_width == preset.codec.hyper_width);
  CHECK(toy.train.steps == preset.train.steps);
  CHECK(toy.train.lambda_rate == preset.train.lambda_rate);
  CHECK(toy.train.batch_size == preset.train.batch_size);
  CHECK(toy.train.lr_init == preset.train.lr_init);
}
