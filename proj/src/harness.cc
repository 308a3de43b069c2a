#include "mdvsc/harness.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdvsc/data.h"
#include "mdvsc/pipeline.h"

namespace mdvsc::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config parsing ---------------------------------------------------------

std::string join_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

[[noreturn]] void bad_type(const std::string& key, const char* expected) {
  throw ConfigError("config key '" + key + "' must be " + expected);
}

double as_double(const json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "infinity") return kInfinity;
  }
  bad_type(key, "a number");
}

int64_t as_int(const json& v, const std::string& key) {
  if (v.is_number_integer()) return v.get<int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<int64_t>(d);
  }
  bad_type(key, "an integer");
}

int as_small_int(const json& v, const std::string& key) {
  const int64_t i = as_int(v, key);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    bad_type(key, "a 32-bit integer");
  }
  return static_cast<int>(i);
}

uint64_t as_seed(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<uint64_t>();
  const int64_t i = as_int(v, key);
  if (i < 0) bad_type(key, "a non-negative integer");
  return static_cast<uint64_t>(i);
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad_type(key, "true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) bad_type(key, "a string");
  return v.get<std::string>();
}

std::vector<double> as_grid(const json& v, const std::string& key) {
  if (!v.is_array() || v.empty()) bad_type(key, "a non-empty list of numbers");
  std::vector<double> out;
  for (size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_double(v[i], key + "[" + std::to_string(i) + "]"));
  }
  return out;
}

using Handler = std::function<void(const json&, const std::string&)>;

void read_object(const json& j, const std::string& prefix,
                 const std::map<std::string, Handler>& handlers) {
  if (!j.is_object()) {
    throw ConfigError(prefix.empty() ? "config must be a JSON object"
                                     : "config key '" + prefix + "' must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    const std::string full = join_key(prefix, key);
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError("unknown config key '" + full + "'");
    it->second(value, full);
  }
}

void read_source(const json& j, const std::string& prefix, DataSource& s) {
  read_object(j, prefix,
              {{"preset", [&](const json& v, const std::string& k) { s.preset = as_string(v, k); }},
               {"path", [&](const json& v, const std::string& k) { s.path = as_string(v, k); }},
               {"seed", [&](const json& v, const std::string& k) { s.seed = as_seed(v, k); }},
               {"clips", [&](const json& v, const std::string& k) { s.clips = as_small_int(v, k); }},
               {"height", [&](const json& v, const std::string& k) { s.height = as_small_int(v, k); }},
               {"width", [&](const json& v, const std::string& k) { s.width = as_small_int(v, k); }}});
}

void read_codec(const json& j, CodecConfig& c) {
  auto int_field = [](int& f) {
    return [&f](const json& v, const std::string& k) { f = as_small_int(v, k); };
  };
  read_object(j, "codec",
              {{"channel_width", int_field(c.channel_width)},
               {"latent_downsample", int_field(c.latent_downsample)},
               {"jscc_blocks", int_field(c.jscc_blocks)},
               {"residual_per_block", int_field(c.residual_per_block)},
               {"resample_kernel", int_field(c.resample_kernel)},
               {"residual_kernel", int_field(c.residual_kernel)},
               {"hyper_width", int_field(c.hyper_width)},
               {"frame_channels", int_field(c.frame_channels)},
               {"use_cfe", [&](const json& v, const std::string& k) { c.use_cfe = as_bool(v, k); }}});
}

void read_train(const json& j, ExperimentConfig& cfg) {
  TrainConfig& t = cfg.train;
  auto dbl = [](double& f) {
    return [&f](const json& v, const std::string& k) { f = as_double(v, k); };
  };
  read_object(
      j, "train",
      {{"lambda_rate", dbl(t.lambda_rate)},
       {"lr_init", dbl(t.lr_init)},
       {"lr_min", dbl(t.lr_min)},
       {"batch_size", [&](const json& v, const std::string& k) { t.batch_size = as_small_int(v, k); }},
       {"gop_size", [&](const json& v, const std::string& k) { t.gop_size = as_small_int(v, k); }},
       {"snr_db", dbl(t.train_snr_db)},
       {"crop", [&](const json& v, const std::string& k) { t.crop = as_small_int(v, k); }},
       {"steps", [&](const json& v, const std::string& k) { t.steps = as_int(v, k); }},
       {"adam_beta1", dbl(t.adam_beta1)},
       {"adam_beta2", dbl(t.adam_beta2)},
       {"adam_epsilon", dbl(t.adam_epsilon)},
       {"weight_decay", dbl(t.weight_decay)},
       {"grad_clip_norm", dbl(t.grad_clip_norm)},
       {"log_every", [&](const json& v, const std::string& k) { cfg.log_every = as_int(v, k); }},
       {"checkpoint_every",
        [&](const json& v, const std::string& k) { cfg.checkpoint_every = as_int(v, k); }}});
}

DropPolicy as_policy(const json& v, const std::string& key) {
  const std::string name = as_string(v, key);
  try {
    return parse_policy(name);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': unknown drop policy '" + name + "'");
  }
}

json grid_json(const std::vector<double>& grid) {
  json a = json::array();
  for (double v : grid) {
    if (std::isinf(v)) {
      a.push_back(v > 0 ? "inf" : "-inf");
    } else {
      a.push_back(v);
    }
  }
  return a;
}

json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

json source_json(const DataSource& s) {
  return {{"preset", s.preset}, {"path", s.path},     {"seed", s.seed},
          {"clips", s.clips},   {"height", s.height}, {"width", s.width}};
}

// --- output helpers ---------------------------------------------------------

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header, bool append = false)
      : path_(path) {
    const bool existed = append && fs::exists(path);
    os_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!os_) throw std::runtime_error("cannot write " + path.string());
    if (!existed) row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }
  void flush() { os_.flush(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ofstream os_;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

// Line chart with linear axes. Non-finite points are skipped.
void write_svg_plot(const fs::path& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<Series>& series) {
  constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 160, kTop = 40, kBottom = 60;
  double x0 = kInfinity, x1 = -kInfinity, y0 = kInfinity, y1 = -kInfinity;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x0 == x1) x0 -= 0.5, x1 += 0.5;
  if (y0 == y1) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << escape_xml(title) << "</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0;
    const double yv = y0 + (y1 - y0) * i / 5.0;
    os << "<line x1=\"" << px(xv) << "\" y1=\"" << kTop + ph << "\" x2=\"" << px(xv)
       << "\" y2=\"" << kTop + ph + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 18
       << "\" text-anchor=\"middle\">" << fmt(std::round(xv * 1e4) / 1e4) << "</text>\n";
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << kLeft
       << "\" y2=\"" << py(yv) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
       << fmt(std::round(yv * 1e3) / 1e3) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">"
     << escape_xml(xlabel) << "</text>\n";
  os << "<text transform=\"translate(16," << kTop + ph / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(ylabel) << "</text>\n";
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    os << "\"/>\n";
    if (s.x.size() <= 64) {
      for (size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\""
           << color << "\"/>\n";
      }
    }
    const double ly = kTop + 14 + 18 * static_cast<double>(si);
    os << "<line x1=\"" << kW - kRight + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
       << kW - kRight + 32 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kW - kRight + 38 << "\" y=\"" << ly << "\">" << escape_xml(s.name)
       << "</text>\n";
  }
  os << "</svg>\n";
}

void prepare_out(const ExperimentConfig& config) {
  fs::create_directories(config.out);
  std::ofstream os(config.out / "config_resolved.json");
  if (!os) throw std::runtime_error("cannot write into " + config.out.string());
  os << dump_config(config) << '\n';
}

ModelState load_model(const fs::path& path) {
  if (path.empty()) throw std::runtime_error("no checkpoint path configured");
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

uint64_t channel_seed(const ExperimentConfig& config, uint64_t salt) {
  return Rng::splitmix64(config.seed ^ Rng::splitmix64(0x63686e6cULL + salt));
}

EvaluationReport run_eval(const std::vector<Gop>& gops, const ModelState& state,
                          const Budget& budget, double snr_db, uint64_t seed,
                          const TransmitOptions& options) {
  ChannelConfig ch;
  ch.snr_db = snr_db;
  ch.seed = seed;
  return evaluate_gops(gops, state, budget, ch, options);
}

Budget global_budget(double cbr) {
  Budget b;
  b.target_cbr = cbr;
  return b;
}

std::vector<std::string> quality_cells(const QualityReport& q) {
  return {fmt(q.psnr_db), fmt(q.ms_ssim), fmt(q.ms_ssim_db)};
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

int64_t kept_symbols(const EvaluationReport& r) { return r.per_gop_cbr.front().symbol_count; }

bool finite_quality(const QualityReport& q) {
  return std::isfinite(q.psnr_db) && std::isfinite(q.ms_ssim) && std::isfinite(q.ms_ssim_db);
}

}  // namespace

// --- config -----------------------------------------------------------------

void ExperimentConfig::validate() const {
  try {
    codec.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const DataSource* s : {&data, &eval}) {
    const char* which = s == &data ? "data" : "eval";
    if (s->preset != "toy" && s->preset != "frames") {
      throw ConfigError(std::string("config key '") + which +
                        ".preset' must be \"toy\" or \"frames\"");
    }
    if (s->preset == "frames" && s->path.empty()) {
      throw ConfigError(std::string("config key '") + which + ".path' is required for frames");
    }
    if (s->preset == "toy" && (s->clips < 1 || s->height < 1 || s->width < 1)) {
      throw ConfigError(std::string("config section '") + which +
                        "' needs positive clips, height and width");
    }
  }
  if (cbr_grid.empty() || snr_grid.empty() || drop_grid.empty() || delta_grid.empty()) {
    throw ConfigError("sweep grids must be non-empty");
  }
  for (double c : cbr_grid) {
    if (!(c > 0.0 && c <= 1.0)) throw ConfigError("config key 'sweep.cbr_grid' needs values in (0,1]");
  }
  for (double r : drop_grid) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("config key 'sweep.drop_grid' needs values in [0,1]");
  }
  if (!(eval_cbr > 0.0 && eval_cbr <= 1.0)) throw ConfigError("config key 'eval.cbr' must be in (0,1]");
  if (!(mask_bits_per_symbol >= 0.0 && std::isfinite(mask_bits_per_symbol))) {
    throw ConfigError("config key 'eval.mask_bits_per_symbol' must be a finite value >= 0");
  }
  if (policy_seeds < 1) throw ConfigError("config key 'sweep.policy_seeds' must be positive");
  if (!(policy_drop_ratio >= 0.0 && policy_drop_ratio <= 1.0)) {
    throw ConfigError("config key 'sweep.policy_drop_ratio' must be in [0,1]");
  }
  if (jitter_gops < 1) throw ConfigError("config key 'jitter.gops' must be positive");
  if (jump_every < 0) throw ConfigError("config key 'jitter.jump_every' must be >= 0");
  if (log_every < 1) throw ConfigError("config key 'train.log_every' must be positive");
  if (checkpoint_every < 1) throw ConfigError("config key 'train.checkpoint_every' must be positive");
  if (out.empty()) throw ConfigError("config key 'out' must not be empty");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  read_object(
      j, "",
      {{"command", [&](const json& v, const std::string& k) { cfg.command = as_string(v, k); }},
       {"out", [&](const json& v, const std::string& k) { cfg.out = as_string(v, k); }},
       {"seed", [&](const json& v, const std::string& k) { cfg.seed = as_seed(v, k); }},
       {"checkpoint", [&](const json& v, const std::string& k) { cfg.checkpoint = as_string(v, k); }},
       {"no_cfe_checkpoint",
        [&](const json& v, const std::string& k) { cfg.no_cfe_checkpoint = as_string(v, k); }},
       {"resume", [&](const json& v, const std::string& k) { cfg.resume = as_bool(v, k); }},
       {"plots", [&](const json& v, const std::string& k) { cfg.plots = as_bool(v, k); }},
       {"codec", [&](const json& v, const std::string&) { read_codec(v, cfg.codec); }},
       {"train", [&](const json& v, const std::string&) { read_train(v, cfg); }},
       {"data", [&](const json& v, const std::string& k) { read_source(v, k, cfg.data); }},
       {"eval",
        [&](const json& v, const std::string& k) {
          DataSource& s = cfg.eval;
          read_object(
              v, k,
              {{"preset", [&](const json& x, const std::string& kk) { s.preset = as_string(x, kk); }},
               {"path", [&](const json& x, const std::string& kk) { s.path = as_string(x, kk); }},
               {"seed", [&](const json& x, const std::string& kk) { s.seed = as_seed(x, kk); }},
               {"clips", [&](const json& x, const std::string& kk) { s.clips = as_small_int(x, kk); }},
               {"height", [&](const json& x, const std::string& kk) { s.height = as_small_int(x, kk); }},
               {"width", [&](const json& x, const std::string& kk) { s.width = as_small_int(x, kk); }},
               {"snr_db", [&](const json& x, const std::string& kk) { cfg.eval_snr_db = as_double(x, kk); }},
               {"cbr", [&](const json& x, const std::string& kk) { cfg.eval_cbr = as_double(x, kk); }},
               {"policy", [&](const json& x, const std::string& kk) { cfg.policy = as_policy(x, kk); }},
               {"mask_bits_per_symbol",
                [&](const json& x, const std::string& kk) { cfg.mask_bits_per_symbol = as_double(x, kk); }}});
        }},
       {"sweep",
        [&](const json& v, const std::string& k) {
          read_object(
              v, k,
              {{"cbr_grid", [&](const json& x, const std::string& kk) { cfg.cbr_grid = as_grid(x, kk); }},
               {"snr_grid", [&](const json& x, const std::string& kk) { cfg.snr_grid = as_grid(x, kk); }},
               {"drop_grid", [&](const json& x, const std::string& kk) { cfg.drop_grid = as_grid(x, kk); }},
               {"delta_grid", [&](const json& x, const std::string& kk) { cfg.delta_grid = as_grid(x, kk); }},
               {"policy_seeds",
                [&](const json& x, const std::string& kk) { cfg.policy_seeds = as_small_int(x, kk); }},
               {"policy_drop_ratio",
                [&](const json& x, const std::string& kk) { cfg.policy_drop_ratio = as_double(x, kk); }}});
        }},
       {"jitter", [&](const json& v, const std::string& k) {
          read_object(
              v, k,
              {{"gops", [&](const json& x, const std::string& kk) { cfg.jitter_gops = as_small_int(x, kk); }},
               {"jump_every",
                [&](const json& x, const std::string& kk) { cfg.jump_every = as_small_int(x, kk); }}});
        }}});
  cfg.train.seed = cfg.seed;
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const std::string& o : overrides) {
    const size_t eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + o + "' is not of the form key=value");
    }
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    json* node = &j;
    std::stringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) path.push_back(part);
    for (size_t i = 0; i < path.size(); ++i) {
      if (path[i].empty()) throw ConfigError("override key '" + key + "' has an empty part");
      if (!node->is_object()) {
        throw ConfigError("override key '" + key + "' descends into a non-object");
      }
      node = &(*node)[path[i]];
    }
    *node = value;
  }
  return j.dump();
}

std::string dump_config(const ExperimentConfig& c) {
  const TrainConfig& t = c.train;
  json j = {
      {"command", c.command},
      {"out", c.out.string()},
      {"seed", c.seed},
      {"checkpoint", c.checkpoint.string()},
      {"no_cfe_checkpoint", c.no_cfe_checkpoint.string()},
      {"resume", c.resume},
      {"plots", c.plots},
      {"codec",
       {{"channel_width", c.codec.channel_width},
        {"latent_downsample", c.codec.latent_downsample},
        {"jscc_blocks", c.codec.jscc_blocks},
        {"residual_per_block", c.codec.residual_per_block},
        {"resample_kernel", c.codec.resample_kernel},
        {"residual_kernel", c.codec.residual_kernel},
        {"hyper_width", c.codec.hyper_width},
        {"frame_channels", c.codec.frame_channels},
        {"use_cfe", c.codec.use_cfe}}},
      {"train",
       {{"lambda_rate", t.lambda_rate},
        {"lr_init", t.lr_init},
        {"lr_min", t.lr_min},
        {"batch_size", t.batch_size},
        {"gop_size", t.gop_size},
        {"snr_db", number_json(t.train_snr_db)},
        {"crop", t.crop},
        {"steps", t.steps},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_epsilon", t.adam_epsilon},
        {"weight_decay", t.weight_decay},
        {"grad_clip_norm", t.grad_clip_norm},
        {"log_every", c.log_every},
        {"checkpoint_every", c.checkpoint_every}}},
      {"data", source_json(c.data)},
      {"sweep",
       {{"cbr_grid", grid_json(c.cbr_grid)},
        {"snr_grid", grid_json(c.snr_grid)},
        {"drop_grid", grid_json(c.drop_grid)},
        {"delta_grid", grid_json(c.delta_grid)},
        {"policy_seeds", c.policy_seeds},
        {"policy_drop_ratio", c.policy_drop_ratio}}},
      {"jitter", {{"gops", c.jitter_gops}, {"jump_every", c.jump_every}}},
  };
  json e = source_json(c.eval);
  e["snr_db"] = number_json(c.eval_snr_db);
  e["cbr"] = c.eval_cbr;
  e["policy"] = policy_name(c.policy);
  e["mask_bits_per_symbol"] = c.mask_bits_per_symbol;
  j["eval"] = e;
  return j.dump(2);
}

// --- data -------------------------------------------------------------------

std::vector<Gop> eval_gops(const ExperimentConfig& config) {
  const DataSource& s = config.eval;
  const int gop = config.train.gop_size;
  std::vector<Gop> gops;
  if (s.preset == "frames") {
    gops = split_into_gops(read_frames(s.path), gop, PadPolicy::kDropTail);
    if (gops.empty()) throw std::runtime_error("eval frames do not fill one GOP");
    if (s.clips > 0 && static_cast<size_t>(s.clips) < gops.size()) gops.resize(s.clips);
  } else {
    const ToyDataset data{.seed = s.seed,
                          .clip_count = s.clips,
                          .height = s.height,
                          .width = s.width,
                          .gop_size = gop};
    for (int i = 0; i < s.clips; ++i) gops.push_back(data.clip(i));
  }
  return gops;
}

namespace {

ClipSource training_source(const ExperimentConfig& config) {
  const DataSource& s = config.data;
  if (s.preset == "frames") return ClipSource(read_frames(s.path), config.train.gop_size);
  return ClipSource(ToyDataset{.seed = s.seed,
                               .clip_count = s.clips,
                               .height = s.height,
                               .width = s.width,
                               .gop_size = config.train.gop_size});
}

}  // namespace

// --- commands ---------------------------------------------------------------

fs::path cmd_train(const ExperimentConfig& config) {
  prepare_out(config);
  const ClipSource source = training_source(config);
  ModelState state;
  if (config.resume && fs::exists(config.checkpoint)) {
    state = load_checkpoint(config.checkpoint);
    log_line("resuming from " + config.checkpoint.string() + " at step " +
             std::to_string(state.step));
  } else {
    state = ModelState::create(config.codec, config.seed);
  }
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  const fs::path csv_path = config.out / "train_loss.csv";
  CsvWriter csv(csv_path, {"step", "lr", "loss", "rate_bpd", "distortion"},
                config.resume && state.step > 0);
  std::vector<double> steps, losses;
  double window = 0.0;
  int64_t in_window = 0;
  try {
    train(state, source, tc, [&](const TrainLogEntry& e) {
      csv.row({std::to_string(e.step), fmt(e.lr), fmt(e.loss.loss), fmt(e.loss.rate_bpd),
               fmt(e.loss.distortion)});
      steps.push_back(static_cast<double>(e.step));
      losses.push_back(e.loss.loss);
      window += e.loss.loss;
      ++in_window;
      if ((e.step + 1) % config.log_every == 0 || e.step + 1 == tc.steps) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "step %lld/%lld lr %.3g mean loss %.6g",
                      static_cast<long long>(e.step + 1), static_cast<long long>(tc.steps), e.lr,
                      window / static_cast<double>(in_window));
        log_line(buf);
        window = 0.0;
        in_window = 0;
      }
      if ((e.step + 1) % config.checkpoint_every == 0) {
        csv.flush();
        save_checkpoint(state, config.checkpoint);
      }
    });
  } catch (const TrainingDiverged& e) {
    csv.flush();
    throw std::runtime_error(std::string(e.what()) + " (completed steps " +
                             std::to_string(e.last_good_step()) +
                             "; the checkpoint holds the last periodic save)");
  }
  csv.flush();
  save_checkpoint(state, config.checkpoint);
  if (config.plots && !steps.empty()) {
    Series raw{"loss", steps, losses};
    Series smooth{"mean of 100", {}, {}};
    double acc = 0.0;
    for (size_t i = 0; i < losses.size(); ++i) {
      acc += losses[i];
      if (i >= 100) acc -= losses[i - 100];
      smooth.x.push_back(steps[i]);
      smooth.y.push_back(acc / static_cast<double>(std::min<size_t>(i + 1, 100)));
    }
    write_svg_plot(config.out / "train_loss.svg", "Training loss", "step", "loss",
                   {raw, smooth});
  }
  return csv_path;
}

fs::path cmd_sweep_cbr(const ExperimentConfig& config) {
  prepare_out(config);
  const ModelState state = load_model(config.checkpoint);
  const std::vector<Gop> gops = eval_gops(config);
  const int64_t sd = source_dimension(gops.front());
  const fs::path path = config.out / "sweep_cbr.csv";
  CsvWriter csv(path, {"target_cbr", "achieved_cbr", "symbols", "source_dim",
                       "within_one_symbol", "feasible", "cbr_with_mask", "psnr_db", "ms_ssim",
                       "ms_ssim_db"});
  const int ds = state.config().total_downsample();
  const size_t map_size = static_cast<size_t>(gops.front().front().height / ds) *
                          static_cast<size_t>(gops.front().front().width / ds) *
                          static_cast<size_t>(state.config().channel_width);
  const double overhead =
      mask_overhead_symbols(gops.front().size(), map_size, config.mask_bits_per_symbol);
  Series psnr{"PSNR (dB)", {}, {}}, msdb{"MS-SSIM (dB)", {}, {}};
  TransmitOptions opt;
  opt.policy = config.policy;
  for (double cbr : config.cbr_grid) {
    const EvaluationReport r =
        run_eval(gops, state, global_budget(cbr), config.eval_snr_db, channel_seed(config, 1), opt);
    const int64_t kept = kept_symbols(r);
    const int64_t wanted = static_cast<int64_t>(std::floor(cbr * static_cast<double>(sd) + 1e-7));
    const bool within = std::abs(r.cbr_mean - cbr) <= 1.0 / static_cast<double>(sd);
    std::vector<std::string> row{fmt(cbr), fmt(r.cbr_mean), std::to_string(kept),
                                 std::to_string(sd), within ? "1" : "0",
                                 kept == wanted ? "1" : "0",
                                 fmt(r.cbr_mean + overhead / static_cast<double>(sd))};
    for (auto& c : quality_cells(r.quality)) row.push_back(c);
    csv.row(row);
    psnr.x.push_back(r.cbr_mean);
    psnr.y.push_back(r.quality.psnr_db);
    msdb.x.push_back(r.cbr_mean);
    msdb.y.push_back(r.quality.ms_ssim_db);
    log_line("cbr " + fmt(cbr) + " psnr " + fmt(r.quality.psnr_db));
  }
  if (config.plots) {
    write_svg_plot(config.out / "sweep_cbr.svg", "Quality vs CBR (SNR " + fmt(config.eval_snr_db) + " dB)",
                   "CBR", "dB", {psnr, msdb});
  }
  return path;
}

fs::path cmd_sweep_snr(const ExperimentConfig& config) {
  prepare_out(config);
  const ModelState state = load_model(config.checkpoint);
  const std::vector<Gop> gops = eval_gops(config);
  const fs::path path = config.out / "sweep_snr.csv";
  CsvWriter csv(path, {"snr_db", "target_cbr", "achieved_cbr", "finite", "psnr_db", "ms_ssim",
                       "ms_ssim_db"});
  Series psnr{"PSNR (dB)", {}, {}}, msdb{"MS-SSIM (dB)", {}, {}};
  TransmitOptions opt;
  opt.policy = config.policy;
  for (double snr : config.snr_grid) {
    const EvaluationReport r =
        run_eval(gops, state, global_budget(config.eval_cbr), snr, channel_seed(config, 2), opt);
    std::vector<std::string> row{fmt(snr), fmt(config.eval_cbr), fmt(r.cbr_mean),
                                 finite_quality(r.quality) ? "1" : "0"};
    for (auto& c : quality_cells(r.quality)) row.push_back(c);
    csv.row(row);
    psnr.x.push_back(snr);
    psnr.y.push_back(r.quality.psnr_db);
    msdb.x.push_back(snr);
    msdb.y.push_back(r.quality.ms_ssim_db);
    log_line("snr " + fmt(snr) + " psnr " + fmt(r.quality.psnr_db));
  }
  if (config.plots) {
    write_svg_plot(config.out / "sweep_snr.svg", "Quality vs SNR (CBR " + fmt(config.eval_cbr) + ")",
                   "SNR (dB)", "dB", {psnr, msdb});
  }
  return path;
}

fs::path cmd_sweep_drop(const ExperimentConfig& config) {
  prepare_out(config);
  const ModelState state = load_model(config.checkpoint);
  const std::vector<Gop> gops = eval_gops(config);
  TransmitOptions opt;
  opt.policy = config.policy;
  const uint64_t seed = channel_seed(config, 3);
  const EvaluationReport base =
      run_eval(gops, state, drop_ratio_budget(0.0), config.eval_snr_db, seed, opt);
  const fs::path path = config.out / "sweep_drop.csv";
  CsvWriter csv(path, {"drop_ratio", "symbols", "achieved_cbr", "psnr_db", "ms_ssim",
                       "ms_ssim_db", "psnr_loss_db", "knee"});
  Series psnr{"PSNR (dB)", {}, {}}, msdb{"MS-SSIM (dB)", {}, {}};
  bool knee_found = false;
  for (double ratio : config.drop_grid) {
    const EvaluationReport r =
        ratio == 0.0 ? base
                     : run_eval(gops, state, drop_ratio_budget(ratio), config.eval_snr_db, seed, opt);
    const double loss = base.quality.psnr_db - r.quality.psnr_db;
    const bool knee = !knee_found && loss > 1.0;
    knee_found = knee_found || knee;
    std::vector<std::string> row{fmt(ratio), std::to_string(kept_symbols(r)), fmt(r.cbr_mean)};
    for (auto& c : quality_cells(r.quality)) row.push_back(c);
    row.push_back(fmt(loss));
    row.push_back(knee ? "1" : "0");
    csv.row(row);
    psnr.x.push_back(ratio);
    psnr.y.push_back(r.quality.psnr_db);
    msdb.x.push_back(ratio);
    msdb.y.push_back(r.quality.ms_ssim_db);
    log_line("drop " + fmt(ratio) + " psnr " + fmt(r.quality.psnr_db));
  }
  if (config.plots) {
    write_svg_plot(config.out / "sweep_drop.svg", "Quality vs drop ratio", "drop ratio", "dB",
                   {psnr, msdb});
  }
  return path;
}

fs::path cmd_sweep_balance(const ExperimentConfig& config) {
  prepare_out(config);
  const ModelState state = load_model(config.checkpoint);
  const std::vector<Gop> gops = eval_gops(config);
  const int n = gops.front().size();
  const int64_t sd = source_dimension(gops.front());
  const int ds = state.config().total_downsample();
  const size_t map_size = static_cast<size_t>(gops.front().front().height / ds) *
                          static_cast<size_t>(gops.front().front().width / ds) *
                          static_cast<size_t>(state.config().channel_width);
  TransmitOptions opt;
  opt.policy = config.policy;
  const uint64_t seed = channel_seed(config, 4);
  const fs::path path = config.out / "sweep_balance.csv";
  CsvWriter csv(path, {"target_cbr", "delta_individual", "drop_common", "drop_individual",
                       "feasible", "kept_symbols", "achieved_cbr", "group_kept_constant",
                       "psnr_db", "ms_ssim", "ms_ssim_db"});
  std::vector<Series> plot;
  for (double cbr : config.cbr_grid) {
    std::vector<std::vector<std::string>> rows;
    std::vector<int64_t> kept;
    Series s{"CBR " + fmt(cbr), {}, {}};
    std::string base_error;
    Budget base;
    try {
      base = balanced_split_budget(cbr, sd, n, map_size);
    } catch (const std::invalid_argument& e) {
      base_error = e.what();
    }
    for (double delta : config.delta_grid) {
      Budget b;
      bool feasible = base_error.empty();
      if (feasible) {
        try {
          b = trade_budget(base, delta, n);
        } catch (const std::invalid_argument&) {
          feasible = false;
        }
      }
      if (!feasible) {
        rows.push_back({fmt(cbr), fmt(delta), "", "", "0", "", "", "", "", "", ""});
        continue;
      }
      const EvaluationReport r = run_eval(gops, state, b, config.eval_snr_db, seed, opt);
      kept.push_back(kept_symbols(r));
      std::vector<std::string> row{fmt(cbr), fmt(delta), fmt(b.drop_common),
                                   fmt(b.drop_individual), "1", std::to_string(kept.back()),
                                   fmt(r.cbr_mean), ""};
      for (auto& c : quality_cells(r.quality)) row.push_back(c);
      rows.push_back(row);
      s.x.push_back(delta);
      s.y.push_back(r.quality.psnr_db);
      log_line("cbr " + fmt(cbr) + " delta " + fmt(delta) + " psnr " + fmt(r.quality.psnr_db));
    }
    const bool constant =
        std::all_of(kept.begin(), kept.end(), [&](int64_t k) { return k == kept.front(); });
    for (auto& row : rows) {
      if (row[4] == "1") row[7] = constant ? "1" : "0";
      csv.row(row);
    }
    plot.push_back(s);
  }
  if (config.plots) {
    write_svg_plot(config.out / "sweep_balance.svg", "PSNR vs individual drop shift",
                   "delta dr(i)", "PSNR (dB)", plot);
  }
  return path;
}

fs::path cmd_ablate(const ExperimentConfig& config) {
  prepare_out(config);
  const ModelState state = load_model(config.checkpoint);
  ModelState no_cfe;
  const bool has_no_cfe = !config.no_cfe_checkpoint.empty();
  if (has_no_cfe) no_cfe = load_model(config.no_cfe_checkpoint);
  const std::vector<Gop> gops = eval_gops(config);
  const fs::path path = config.out / "ablate.csv";
  CsvWriter csv(path, {"budget_kind", "budget", "variant", "seeds", "achieved_cbr", "psnr_db",
                       "ms_ssim", "ms_ssim_db"});
  const DropPolicy policies[] = {DropPolicy::kEntropy, DropPolicy::kPower, DropPolicy::kRandom,
                                 DropPolicy::kInvEntropy, DropPolicy::kInvPower};
  auto emit = [&](const char* kind, double budget, const std::string& variant, int seeds,
                  double cbr, const QualityReport& q) {
    std::vector<std::string> row{kind, fmt(budget), variant, std::to_string(seeds), fmt(cbr)};
    for (auto& c : quality_cells(q)) row.push_back(c);
    csv.row(row);
  };
  std::map<std::string, Series> series;
  const uint64_t seed = channel_seed(config, 5);
  for (double cbr : config.cbr_grid) {
    const Budget b = global_budget(cbr);
    std::map<DropPolicy, EvaluationReport> by_policy;
    for (DropPolicy p : policies) {
      TransmitOptions opt;
      opt.policy = p;
      by_policy[p] = run_eval(gops, state, b, config.eval_snr_db, seed, opt);
    }
    const EvaluationReport& baseline = by_policy[DropPolicy::kEntropy];
    emit("cbr", cbr, "baseline", 1, baseline.cbr_mean, baseline.quality);
    series["baseline"].name = "baseline";
    series["baseline"].x.push_back(cbr);
    series["baseline"].y.push_back(baseline.quality.psnr_db);

    TransmitOptions drop_common;
    drop_common.drop_common_map = true;
    const EvaluationReport nc = run_eval(gops, state, b, config.eval_snr_db, seed, drop_common);
    emit("cbr", cbr, "no_cfe", 1, nc.cbr_mean, nc.quality);
    series["no_cfe"].name = "no_cfe";
    series["no_cfe"].x.push_back(cbr);
    series["no_cfe"].y.push_back(nc.quality.psnr_db);
    if (has_no_cfe) {
      const EvaluationReport t = run_eval(gops, no_cfe, b, config.eval_snr_db, seed, {});
      emit("cbr", cbr, "no_cfe_trained", 1, t.cbr_mean, t.quality);
      series["no_cfe_trained"].name = "no_cfe_trained";
      series["no_cfe_trained"].x.push_back(cbr);
      series["no_cfe_trained"].y.push_back(t.quality.psnr_db);
    }
    for (DropPolicy p : policies) {
      const EvaluationReport& r = by_policy[p];
      emit("cbr", cbr, policy_name(p), 1, r.cbr_mean, r.quality);
    }
    log_line("ablate cbr " + fmt(cbr) + " baseline " + fmt(baseline.quality.psnr_db) +
             " no_cfe " + fmt(nc.quality.psnr_db));
  }
  const Budget dr = drop_ratio_budget(config.policy_drop_ratio);
  for (DropPolicy p : policies) {
    QualityReport mean;
    double cbr = 0.0;
    for (int s = 0; s < config.policy_seeds; ++s) {
      TransmitOptions opt;
      opt.policy = p;
      const EvaluationReport r = run_eval(gops, state, dr, config.eval_snr_db,
                                          channel_seed(config, 100 + static_cast<uint64_t>(s)), opt);
      mean.psnr_db += r.quality.psnr_db / config.policy_seeds;
      mean.ms_ssim += r.quality.ms_ssim / config.policy_seeds;
      mean.ms_ssim_db += r.quality.ms_ssim_db / config.policy_seeds;
      cbr += r.cbr_mean / config.policy_seeds;
    }
    emit("drop_ratio", config.policy_drop_ratio, policy_name(p), config.policy_seeds, cbr, mean);
    log_line(std::string("ablate drop ratio policy ") + policy_name(p) + " psnr " +
             fmt(mean.psnr_db));
  }
  if (config.plots) {
    std::vector<Series> plot;
    for (auto& [name, s] : series) plot.push_back(s);
    write_svg_plot(config.out / "ablate.svg", "Common feature ablation", "CBR", "PSNR (dB)", plot);
  }
  return path;
}

fs::path cmd_jitter(const ExperimentConfig& config) {
  prepare_out(config);
  const ModelState state = load_model(config.checkpoint);
  const int gop = config.train.gop_size;
  const DataSource& src = config.eval;
  std::vector<Gop> gops;
  std::vector<bool> jump;
  if (src.preset == "frames") {
    gops = split_into_gops(read_frames(src.path), gop, PadPolicy::kDropTail);
    if (static_cast<int>(gops.size()) > config.jitter_gops) gops.resize(config.jitter_gops);
    jump.assign(gops.size(), false);
  } else {
    Rng rng(Rng::splitmix64(src.seed ^ 0x6a6974746572ULL));
    const SceneSpec scene = random_scene(rng, src.height, src.width, config.jitter_gops * gop);
    gops = split_into_gops(generate_clip(scene, rng), gop, PadPolicy::kDropTail);
    jump.assign(gops.size(), false);
    for (size_t g = 0; g < gops.size(); ++g) {
      if (config.jump_every > 0 && (g + 1) % static_cast<size_t>(config.jump_every) == 0) {
        std::vector<SceneSpec> specs;
        for (int k = 0; k < gop; ++k) specs.push_back(random_scene(rng, src.height, src.width, gop));
        Gop j = make_jump_gop(specs, rng, gop);
        j.gop_id = gops[g].gop_id;
        gops[g] = std::move(j);
        jump[g] = true;
      }
    }
  }
  TransmitOptions opt;
  opt.policy = config.policy;
  const EvaluationReport r = run_eval(gops, state, global_budget(config.eval_cbr),
                                      config.eval_snr_db, channel_seed(config, 6), opt);
  const fs::path path = config.out / "jitter.csv";
  CsvWriter csv(path, {"gop", "kind", "symbols", "cbr", "finite", "psnr_db", "ms_ssim",
                       "ms_ssim_db"});
  Series cbr_s{"CBR x 1000", {}, {}}, psnr_s{"PSNR (dB)", {}, {}};
  bool all_finite = true;
  for (size_t g = 0; g < gops.size(); ++g) {
    const QualityReport& q = r.per_gop_quality[g];
    const bool finite = finite_quality(q);
    all_finite = all_finite && finite;
    std::vector<std::string> row{std::to_string(g), jump[g] ? "jump" : "normal",
                                 std::to_string(r.per_gop_cbr[g].symbol_count),
                                 fmt(r.per_gop_cbr[g].cbr), finite ? "1" : "0"};
    for (auto& c : quality_cells(q)) row.push_back(c);
    csv.row(row);
    cbr_s.x.push_back(static_cast<double>(g));
    cbr_s.y.push_back(1000.0 * r.per_gop_cbr[g].cbr);
    psnr_s.x.push_back(static_cast<double>(g));
    psnr_s.y.push_back(q.psnr_db);
  }
  CsvWriter summary(config.out / "jitter_summary.csv",
                    {"gops", "cbr_mean", "cbr_variance", "psnr_mean", "psnr_variance",
                     "ms_ssim_db_mean", "ms_ssim_db_variance", "all_finite"});
  summary.row({std::to_string(gops.size()), fmt(r.cbr_mean), fmt(r.cbr_variance),
               fmt(r.quality.psnr_db), fmt(r.psnr_variance), fmt(r.quality.ms_ssim_db),
               fmt(r.ms_ssim_db_variance), all_finite ? "1" : "0"});
  log_line("jitter cbr variance " + fmt(r.cbr_variance) + " psnr variance " +
           fmt(r.psnr_variance));
  if (config.plots) {
    write_svg_plot(config.out / "jitter.svg", "Per-GOP CBR and quality", "GOP", "value",
                   {cbr_s, psnr_s});
  }
  return path;
}

// --- CLI --------------------------------------------------------------------

int run_cli(int argc, char** argv) {
  static const std::map<std::string, fs::path (*)(const ExperimentConfig&)> kCommands = {
      {"train", cmd_train},           {"sweep-cbr", cmd_sweep_cbr},
      {"sweep-snr", cmd_sweep_snr},   {"sweep-drop", cmd_sweep_drop},
      {"sweep-balance", cmd_sweep_balance}, {"ablate", cmd_ablate},
      {"jitter", cmd_jitter}};
  CLI::App app{"Model-division video semantic communication harness", "mdvsc"};
  std::string command;
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
  std::vector<std::string> names;
  for (const auto& [name, fn] : kCommands) names.push_back(name);
  app.add_option("command", command, "Command to run")->required()->check(CLI::IsMember(names));
  app.add_option("--config", config_path, "JSON config file")->required();
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", out, "Output directory");
  app.add_option("overrides", overrides, "Config overrides of the form key.path=value");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  ExperimentConfig config;
  try {
    std::ifstream is(config_path);
    if (!is) throw ConfigError("cannot read config file " + config_path);
    std::stringstream ss;
    ss << is.rdbuf();
    config = parse_config(apply_overrides(ss.str(), overrides));
    if (seed) {
      config.seed = *seed;
      config.train.seed = *seed;
    }
    if (out) config.out = *out;
    config.command = command;
    config.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  }
  try {
    const fs::path csv = kCommands.at(command)(config);
    std::cout << csv.string() << std::endl;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}

// --- CSV reading --------------------------------------------------------------

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::runtime_error("CSV has no column '" + name + "'");
  return static_cast<int>(it - header.begin());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

}  // namespace mdvsc::harness
