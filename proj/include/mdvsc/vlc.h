#ifndef MDVSC_VLC_H_
#define MDVSC_VLC_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdvsc/model.h"
#include "mdvsc/rng.h"
#include "mdvsc/video_model.h"

namespace mdvsc {

enum class BudgetMode { kGlobalTopK, kSplit };

// How many symbols of W_g to keep.
//  kGlobalTopK: K = floor(target_cbr * source_dim) best elements across all
//               transmitted maps.
//  kSplit:      (1 - drop_common) * M of the common map and
//               (1 - drop_individual) * M of each individual map, with the
//               total capped by target_cbr.
struct Budget {
  double target_cbr = 1.0;
  BudgetMode mode = BudgetMode::kGlobalTopK;
  double drop_common = 0.0;
  double drop_individual = 0.0;
  // Accumulated trade applied through trade_budget.
  double trade_t = 0.0;

  void validate() const;
};

// Equal drop ratio for every map.
Budget drop_ratio_budget(double ratio);

// Split budget whose common and individual drop ratios are equal and whose
// kept count equals floor(target_cbr * source_dim).
Budget balanced_split_budget(double target_cbr, int64_t source_dim, int gop_size,
                             size_t map_size);

// dr(i) += delta, dr(c) -= gop_size * delta: moves budget between the
// common map and the individual maps with the total kept count unchanged.
Budget trade_budget(const Budget& budget, double delta_individual, int gop_size);

enum class DropPolicy { kEntropy, kPower, kRandom, kInvEntropy, kInvPower };

const char* policy_name(DropPolicy p);
DropPolicy parse_policy(const std::string& name);

// Kept flat indices per map, ordered individuals[0..N-1] then common.
struct MaskPlan {
  std::vector<std::vector<int32_t>> kept;
  int64_t total_kept = 0;
  int32_t map_size = 0;
  // True when the budget asked for more symbols than exist.
  bool capped = false;

  int gop_size() const { return static_cast<int>(kept.size()) - 1; }
  const std::vector<int32_t>& common() const { return kept.back(); }
  static MaskPlan keep_all(int gop_size, int32_t map_size, bool include_common = true);
  static MaskPlan empty(int gop_size, int32_t map_size);
  void validate() const;
  bool operator==(const MaskPlan& o) const {
    return kept == o.kept && total_kept == o.total_kept && map_size == o.map_size;
  }
};

// Requested kept symbols before capping, for reporting.
int64_t requested_symbols(const Budget& budget, int64_t source_dim, int gop_size,
                          size_t map_size, bool common_transmitted);

MaskPlan build_mask(const EntropyMaps& entropies, const Budget& budget,
                    DropPolicy policy, const FeatureSet& values, int64_t source_dim,
                    Rng& rng);

SymbolStream apply_mask(const FeatureSet& set, const MaskPlan& plan);

// Receiver-side inverse of apply_mask: dropped positions become 0.
FeatureSet zero_fill(const SymbolStream& stream, const MaskPlan& plan, int channels,
                     int height, int width, bool common_transmitted = true);

// Everything the receiver gets for one GOP.
struct Payload {
  static constexpr uint8_t kVersion = 1;

  uint32_t gop_id = 0;
  uint8_t gop_size = 0;
  uint16_t feature_channels = 0;
  uint16_t feature_height = 0;
  uint16_t feature_width = 0;
  // Multiplier that restores feature scale from the body symbols.
  float power_scale = 1.0f;
  MaskPlan plan;
  std::vector<float> body;

  size_t map_size() const {
    return static_cast<size_t>(feature_channels) * feature_height * feature_width;
  }
  bool operator==(const Payload& o) const;
};

// magic "MDVS", version u8, gop_id u32, N u8, feature dims 3 x u16,
// power_scale f32, mask bitmap over (N+1)*M bits (LSB first), body f32[].
// All little-endian.
std::vector<uint8_t> serialize(const Payload& payload);
Payload deserialize(std::span<const uint8_t> bytes);

inline constexpr size_t kPayloadHeaderBytes = 4 + 1 + 4 + 1 + 3 * 2 + 4;

size_t mask_bitmap_bytes(int gop_size, size_t map_size);

// Channel symbols needed to carry the (N+1)*M-bit mask in-band at
// bits_per_symbol bits per symbol. Zero bits_per_symbol means the mask rides
// the error-free control channel and costs nothing.
double mask_overhead_symbols(int gop_size, size_t map_size, double bits_per_symbol);

}  // namespace mdvsc

#endif  // MDVSC_VLC_H_
