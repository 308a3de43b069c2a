#ifndef MDVSC_HARNESS_H_
#define MDVSC_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdvsc/training.h"
#include "mdvsc/vlc.h"

namespace mdvsc::harness {

// Invalid or unknown configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Where GOPs come from: the seeded synthetic preset or a frame directory.
struct DataSource {
  std::string preset = "toy";  // "toy" or "frames"
  std::string path;            // frame directory when preset == "frames"
  uint64_t seed = 0;
  int clips = 2000;
  int height = 64;
  int width = 64;
};

struct ExperimentConfig {
  std::string command;
  std::filesystem::path out = "out";
  uint64_t seed = 0;
  std::filesystem::path checkpoint = "toy.ckpt";
  // Optional model trained with the common feature path bypassed.
  std::filesystem::path no_cfe_checkpoint;
  bool resume = false;
  bool plots = true;
  int64_t log_every = 100;
  int64_t checkpoint_every = 1000;

  CodecConfig codec = toy_codec_config();
  TrainConfig train = toy_train_config();
  DataSource data;
  DataSource eval{.preset = "toy", .path = "", .seed = 777, .clips = 16, .height = 64, .width = 64};

  double eval_snr_db = 15.0;
  double eval_cbr = 0.01;
  DropPolicy policy = DropPolicy::kEntropy;
  // When positive, sweep-cbr also reports the CBR with the mask bitmap sent
  // in-band at this many bits per channel symbol.
  double mask_bits_per_symbol = 0.0;

  std::vector<double> cbr_grid{0.005, 0.010, 0.015, 0.020, 0.025, 0.030};
  std::vector<double> snr_grid{0.0, 5.0, 10.0, 15.0, 20.0};
  std::vector<double> drop_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> delta_grid{-0.3, -0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2, 0.3};
  int policy_seeds = 5;
  double policy_drop_ratio = 0.5;

  int jitter_gops = 50;
  // Every k-th GOP of the jitter video is a jump GOP; 0 disables.
  int jump_every = 10;

  void validate() const;
};

// Parses a JSON document. Unknown keys and type errors throw ConfigError
// naming the offending key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies "a.b=value" overrides to a JSON document. The value is read as
// JSON when it parses, otherwise as a string.
std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides);

// The resolved configuration, as JSON.
std::string dump_config(const ExperimentConfig& config);

// Commands. Each writes its CSV (and an SVG plot when enabled) into
// config.out and returns the CSV path.
std::filesystem::path cmd_train(const ExperimentConfig& config);
std::filesystem::path cmd_sweep_cbr(const ExperimentConfig& config);
std::filesystem::path cmd_sweep_snr(const ExperimentConfig& config);
std::filesystem::path cmd_sweep_drop(const ExperimentConfig& config);
std::filesystem::path cmd_sweep_balance(const ExperimentConfig& config);
std::filesystem::path cmd_ablate(const ExperimentConfig& config);
std::filesystem::path cmd_jitter(const ExperimentConfig& config);

// Evaluation GOPs described by config.eval.
std::vector<Gop> eval_gops(const ExperimentConfig& config);

// CLI entry point; returns the process exit code.
int run_cli(int argc, char** argv);

// Minimal CSV reader for the harness outputs: header row then data rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace mdvsc::harness

#endif  // MDVSC_HARNESS_H_
