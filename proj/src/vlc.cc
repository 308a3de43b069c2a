#include "mdvsc/vlc.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mdvsc {
namespace {

// Guards floor() against representation error when a product is meant to be
// an exact integer.
constexpr double kCountEpsilon = 1e-7;

int64_t floor_count(double x) {
  return static_cast<int64_t>(std::floor(x + kCountEpsilon));
}

void check_ratio(double r, const char* what) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " outside [0,1]: " + std::to_string(r));
  }
}

// Scores per map, maps ordered individuals then common.
std::vector<std::vector<double>> score_maps(const EntropyMaps& entropies,
                                            const FeatureSet& values, DropPolicy policy,
                                            Rng& rng) {
  const int n = values.gop_size();
  const size_t m = values.map_size();
  std::vector<std::vector<double>> scores(n + 1, std::vector<double>(m));
  for (int k = 0; k <= n; ++k) {
    const Tensor<float>& bits = k < n ? entropies.individuals[k] : entropies.common;
    const Tensor<float>& vals = k < n ? values.individuals[k] : values.common;
    if (bits.size() != m || vals.size() != m) {
      throw std::invalid_argument("build_mask: entropy maps not aligned with values");
    }
    for (size_t i = 0; i < m; ++i) {
      double s = 0.0;
      switch (policy) {
        case DropPolicy::kEntropy:
        case DropPolicy::kInvEntropy:
          s = bits.data[i];
          break;
        case DropPolicy::kPower:
        case DropPolicy::kInvPower:
          s = static_cast<double>(vals.data[i]) * vals.data[i];
          break;
        case DropPolicy::kRandom:
          s = rng.uniform();
          break;
      }
      if (policy == DropPolicy::kInvEntropy || policy == DropPolicy::kInvPower) s = -s;
      scores[k][i] = s;
    }
  }
  return scores;
}

// Higher score first, then lower flat index.
struct Ranked {
  double score;
  int64_t flat;
  bool operator<(const Ranked& o) const {
    return score > o.score || (score == o.score && flat < o.flat);
  }
};

std::vector<int32_t> ranked_indices(const std::vector<double>& scores) {
  std::vector<int32_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int32_t>(i);
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  return order;
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<uint8_t>((v >> s) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float f) {
  put_u32(out, std::bit_cast<uint32_t>(f));
}

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  void need(size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw std::runtime_error("payload truncated at offset " + std::to_string(pos_) +
                               " reading " + what + " (need " + std::to_string(n) +
                               " bytes, have " + std::to_string(bytes_.size() - pos_) + ")");
    }
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  uint16_t u16(const char* what) {
    need(2, what);
    const uint16_t v = static_cast<uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::span<const uint8_t> take(size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  size_t offset() const { return pos_; }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

void Budget::validate() const {
  if (target_cbr < 0.0) throw std::invalid_argument("negative budget");
  if (!(target_cbr > 0.0 && target_cbr <= 1.0)) {
    throw std::invalid_argument("target_cbr outside (0,1]: " + std::to_string(target_cbr));
  }
  check_ratio(drop_common, "drop_common");
  check_ratio(drop_individual, "drop_individual");
}

Budget drop_ratio_budget(double ratio) {
  Budget b;
  b.mode = BudgetMode::kSplit;
  b.target_cbr = 1.0;
  b.drop_common = ratio;
  b.drop_individual = ratio;
  b.validate();
  return b;
}

Budget balanced_split_budget(double target_cbr, int64_t source_dim, int gop_size,
                             size_t map_size) {
  Budget b;
  b.mode = BudgetMode::kSplit;
  b.target_cbr = target_cbr;
  const double available = static_cast<double>(gop_size + 1) * static_cast<double>(map_size);
  const double keep = static_cast<double>(floor_count(target_cbr * source_dim));
  const double ratio = std::clamp(1.0 - keep / available, 0.0, 1.0);
  b.drop_common = ratio;
  b.drop_individual = ratio;
  b.validate();
  return b;
}

Budget trade_budget(const Budget& budget, double delta_individual, int gop_size) {
  Budget out = budget;
  out.drop_individual = budget.drop_individual + delta_individual;
  out.drop_common = budget.drop_common - gop_size * delta_individual;
  // Ratios within representation error of a bound are snapped onto it.
  for (double* r : {&out.drop_individual, &out.drop_common}) {
    if (*r < 0.0 && *r > -1e-12) *r = 0.0;
    if (*r > 1.0 && *r < 1.0 + 1e-12) *r = 1.0;
  }
  if (!(out.drop_individual >= 0.0 && out.drop_individual <= 1.0 &&
        out.drop_common >= 0.0 && out.drop_common <= 1.0)) {
    throw std::invalid_argument("infeasible trade: dr(c)=" + std::to_string(out.drop_common) +
                                " dr(i)=" + std::to_string(out.drop_individual));
  }
  out.trade_t = budget.trade_t + delta_individual;
  return out;
}

const char* policy_name(DropPolicy p) {
  switch (p) {
    case DropPolicy::kEntropy: return "entropy";
    case DropPolicy::kPower: return "power";
    case DropPolicy::kRandom: return "random";
    case DropPolicy::kInvEntropy: return "inv_entropy";
    case DropPolicy::kInvPower: return "inv_power";
  }
  return "?";
}

DropPolicy parse_policy(const std::string& name) {
  for (DropPolicy p : {DropPolicy::kEntropy, DropPolicy::kPower, DropPolicy::kRandom,
                       DropPolicy::kInvEntropy, DropPolicy::kInvPower}) {
    if (name == policy_name(p)) return p;
  }
  throw std::invalid_argument("unknown drop policy: " + name);
}

MaskPlan MaskPlan::keep_all(int gop_size, int32_t map_size, bool include_common) {
  MaskPlan plan;
  plan.map_size = map_size;
  plan.kept.resize(gop_size + 1);
  for (int k = 0; k <= gop_size; ++k) {
    if (k == gop_size && !include_common) continue;
    plan.kept[k].resize(map_size);
    for (int32_t i = 0; i < map_size; ++i) plan.kept[k][i] = i;
    plan.total_kept += map_size;
  }
  return plan;
}

MaskPlan MaskPlan::empty(int gop_size, int32_t map_size) {
  MaskPlan plan;
  plan.map_size = map_size;
  plan.kept.resize(gop_size + 1);
  return plan;
}

void MaskPlan::validate() const {
  if (kept.size() < 2) throw std::invalid_argument("mask plan needs N+1 >= 2 maps");
  int64_t total = 0;
  for (const auto& list : kept) {
    for (size_t i = 0; i < list.size(); ++i) {
      if (list[i] < 0 || list[i] >= map_size) {
        throw std::out_of_range("mask index " + std::to_string(list[i]) + " out of range " +
                                std::to_string(map_size));
      }
      if (i > 0 && list[i] <= list[i - 1]) {
        throw std::invalid_argument("mask indices must be unique and sorted");
      }
    }
    total += static_cast<int64_t>(list.size());
  }
  if (total != total_kept) throw std::invalid_argument("mask total_kept mismatch");
}

int64_t requested_symbols(const Budget& budget, int64_t source_dim, int gop_size,
                          size_t map_size, bool common_transmitted) {
  const int64_t cbr_cap = floor_count(budget.target_cbr * static_cast<double>(source_dim));
  if (budget.mode == BudgetMode::kGlobalTopK) return cbr_cap;
  const double m = static_cast<double>(map_size);
  double wanted = gop_size * (1.0 - budget.drop_individual) * m;
  if (common_transmitted) wanted += (1.0 - budget.drop_common) * m;
  return std::min(floor_count(wanted), cbr_cap);
}

MaskPlan build_mask(const EntropyMaps& entropies, const Budget& budget, DropPolicy policy,
                    const FeatureSet& values, int64_t source_dim, Rng& rng) {
  budget.validate();
  validate_feature_set(values);
  if (static_cast<int>(entropies.individuals.size()) != values.gop_size()) {
    throw std::invalid_argument("build_mask: entropy map count differs from GOP size");
  }
  const int n = values.gop_size();
  const int32_t m = static_cast<int32_t>(values.map_size());
  const int pool_maps = values.common_transmitted ? n + 1 : n;
  const auto scores = score_maps(entropies, values, policy, rng);

  MaskPlan plan = MaskPlan::empty(n, m);
  const int64_t available = static_cast<int64_t>(pool_maps) * m;
  int64_t want = requested_symbols(budget, source_dim, n, m, values.common_transmitted);
  if (want > available) {
    plan.capped = true;
    want = available;
  }

  if (budget.mode == BudgetMode::kGlobalTopK) {
    std::vector<Ranked> all;
    all.reserve(available);
    for (int k = 0; k < pool_maps; ++k) {
      for (int32_t i = 0; i < m; ++i) {
        all.push_back({scores[k][i], static_cast<int64_t>(k) * m + i});
      }
    }
    std::nth_element(all.begin(), all.begin() + want, all.end());
    for (int64_t j = 0; j < want; ++j) {
      plan.kept[all[j].flat / m].push_back(static_cast<int32_t>(all[j].flat % m));
    }
  } else {
    std::vector<std::vector<int32_t>> order(pool_maps);
    std::vector<int64_t> count(pool_maps);
    int64_t total = 0;
    for (int k = 0; k < pool_maps; ++k) {
      order[k] = ranked_indices(scores[k]);
      const double ratio = k < n ? budget.drop_individual : budget.drop_common;
      count[k] = std::clamp<int64_t>(floor_count((1.0 - ratio) * m), 0, m);
      total += count[k];
    }
    // Remainders go to the map whose next candidate scores highest; excess is
    // taken from the map whose last kept element scores lowest.
    while (total < want) {
      int best = -1;
      for (int k = 0; k < pool_maps; ++k) {
        if (count[k] >= m) continue;
        if (best < 0 || scores[k][order[k][count[k]]] > scores[best][order[best][count[best]]]) {
          best = k;
        }
      }
      ++count[best];
      ++total;
    }
    while (total > want) {
      int worst = -1;
      for (int k = 0; k < pool_maps; ++k) {
        if (count[k] == 0) continue;
        if (worst < 0 ||
            scores[k][order[k][count[k] - 1]] < scores[worst][order[worst][count[worst] - 1]]) {
          worst = k;
        }
      }
      --count[worst];
      --total;
    }
    for (int k = 0; k < pool_maps; ++k) {
      plan.kept[k].assign(order[k].begin(), order[k].begin() + count[k]);
    }
  }
  for (auto& list : plan.kept) {
    std::sort(list.begin(), list.end());
    plan.total_kept += static_cast<int64_t>(list.size());
  }
  return plan;
}

SymbolStream apply_mask(const FeatureSet& set, const MaskPlan& plan) {
  validate_feature_set(set);
  plan.validate();
  if (plan.gop_size() != set.gop_size() ||
      static_cast<size_t>(plan.map_size) != set.map_size()) {
    throw std::invalid_argument("apply_mask: plan does not match feature set");
  }
  SymbolStream s;
  s.symbols.reserve(plan.total_kept);
  for (int k = 0; k <= set.gop_size(); ++k) {
    const Tensor<float>& map = k < set.gop_size() ? set.individuals[k] : set.common;
    for (int32_t i : plan.kept[k]) s.symbols.push_back(map.data[i]);
    s.per_unit_counts.push_back(static_cast<int64_t>(plan.kept[k].size()));
  }
  return s;
}

FeatureSet zero_fill(const SymbolStream& stream, const MaskPlan& plan, int channels,
                     int height, int width, bool common_transmitted) {
  plan.validate();
  if (static_cast<int64_t>(stream.symbols.size()) != plan.total_kept) {
    throw std::invalid_argument("zero_fill: stream has " +
                                std::to_string(stream.symbols.size()) +
                                " symbols, plan expects " + std::to_string(plan.total_kept));
  }
  if (static_cast<int64_t>(channels) * height * width != plan.map_size) {
    throw std::invalid_argument("zero_fill: shape does not match plan map size");
  }
  FeatureSet set;
  set.common_transmitted = common_transmitted;
  set.common = Tensor<float>(1, channels, height, width);
  size_t pos = 0;
  const int n = plan.gop_size();
  for (int k = 0; k <= n; ++k) {
    Tensor<float> map(1, channels, height, width);
    for (int32_t i : plan.kept[k]) map.data[i] = stream.symbols[pos++];
    if (k < n) {
      set.individuals.push_back(std::move(map));
    } else {
      set.common = std::move(map);
    }
  }
  return set;
}

bool Payload::operator==(const Payload& o) const {
  return gop_id == o.gop_id && gop_size == o.gop_size &&
         feature_channels == o.feature_channels && feature_height == o.feature_height &&
         feature_width == o.feature_width &&
         std::bit_cast<uint32_t>(power_scale) == std::bit_cast<uint32_t>(o.power_scale) &&
         plan == o.plan && body.size() == o.body.size() &&
         (body.empty() ||
          std::memcmp(body.data(), o.body.data(), body.size() * sizeof(float)) == 0);
}

size_t mask_bitmap_bytes(int gop_size, size_t map_size) {
  return (static_cast<size_t>(gop_size + 1) * map_size + 7) / 8;
}

double mask_overhead_symbols(int gop_size, size_t map_size, double bits_per_symbol) {
  if (!(bits_per_symbol >= 0.0) || !std::isfinite(bits_per_symbol)) {
    throw std::invalid_argument("mask_overhead_symbols: bits_per_symbol must be >= 0");
  }
  if (bits_per_symbol == 0.0) return 0.0;
  return static_cast<double>(static_cast<size_t>(gop_size + 1) * map_size) / bits_per_symbol;
}

std::vector<uint8_t> serialize(const Payload& p) {
  p.plan.validate();
  if (p.gop_size == 0 || p.plan.gop_size() != p.gop_size ||
      static_cast<size_t>(p.plan.map_size) != p.map_size()) {
    throw std::invalid_argument("serialize: header does not match mask plan");
  }
  if (static_cast<int64_t>(p.body.size()) != p.plan.total_kept) {
    throw std::invalid_argument("serialize: body length differs from total_kept");
  }
  std::vector<uint8_t> out;
  const size_t m = p.map_size();
  const size_t bitmap = mask_bitmap_bytes(p.gop_size, m);
  out.reserve(kPayloadHeaderBytes + bitmap + 4 * p.body.size());
  for (char c : {'M', 'D', 'V', 'S'}) out.push_back(static_cast<uint8_t>(c));
  out.push_back(Payload::kVersion);
  put_u32(out, p.gop_id);
  out.push_back(p.gop_size);
  put_u16(out, p.feature_channels);
  put_u16(out, p.feature_height);
  put_u16(out, p.feature_width);
  put_f32(out, p.power_scale);
  const size_t bitmap_start = out.size();
  out.resize(out.size() + bitmap, 0);
  for (int k = 0; k <= p.gop_size; ++k) {
    for (int32_t i : p.plan.kept[k]) {
      const size_t bit = static_cast<size_t>(k) * m + static_cast<size_t>(i);
      out[bitmap_start + bit / 8] |= static_cast<uint8_t>(1u << (bit % 8));
    }
  }
  for (float f : p.body) put_f32(out, f);
  return out;
}

Payload deserialize(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), "MDVS", 4) != 0) {
    throw std::runtime_error("payload corrupt at offset 0: bad magic");
  }
  const uint8_t version = r.u8("version");
  if (version != Payload::kVersion) {
    throw std::runtime_error("payload corrupt at offset 4: unsupported version " +
                             std::to_string(version));
  }
  Payload p;
  p.gop_id = r.u32("gop_id");
  const size_t n_offset = r.offset();
  p.gop_size = r.u8("gop_size");
  if (p.gop_size == 0) {
    throw std::runtime_error("payload corrupt at offset " + std::to_string(n_offset) +
                             ": GOP size 0");
  }
  p.feature_channels = r.u16("feature_channels");
  p.feature_height = r.u16("feature_height");
  p.feature_width = r.u16("feature_width");
  p.power_scale = r.f32("power_scale");
  const size_t m = p.map_size();
  if (m == 0 || m > static_cast<size_t>(INT32_MAX)) {
    throw std::runtime_error("payload corrupt at offset 10: feature map size " +
                             std::to_string(m));
  }
  const auto bitmap = r.take(mask_bitmap_bytes(p.gop_size, m), "mask bitmap");
  p.plan = MaskPlan::empty(p.gop_size, static_cast<int32_t>(m));
  const size_t bits = static_cast<size_t>(p.gop_size + 1) * m;
  for (size_t bit = 0; bit < bits; ++bit) {
    if (bitmap[bit / 8] & (1u << (bit % 8))) {
      p.plan.kept[bit / m].push_back(static_cast<int32_t>(bit % m));
    }
  }
  for (size_t bit = bits; bit < bitmap.size() * 8; ++bit) {
    if (bitmap[bit / 8] & (1u << (bit % 8))) {
      throw std::runtime_error("payload corrupt at offset " +
                               std::to_string(kPayloadHeaderBytes + bit / 8) +
                               ": padding bits set");
    }
  }
  for (const auto& list : p.plan.kept) p.plan.total_kept += static_cast<int64_t>(list.size());
  const size_t body_offset = r.offset();
  if (r.remaining() != 4 * static_cast<size_t>(p.plan.total_kept)) {
    throw std::runtime_error("payload corrupt at offset " + std::to_string(body_offset) +
                             ": body has " + std::to_string(r.remaining()) +
                             " bytes, mask implies " + std::to_string(4 * p.plan.total_kept));
  }
  p.body.reserve(p.plan.total_kept);
  for (int64_t i = 0; i < p.plan.total_kept; ++i) p.body.push_back(r.f32("body"));
  return p;
}

}  // namespace mdvsc
