#ifndef MDVSC_DATA_H_
#define MDVSC_DATA_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "mdvsc/rng.h"
#include "mdvsc/video_model.h"

namespace mdvsc {

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

struct MovingShape {
  enum class Kind { kRect, kDisc };
  Kind kind = Kind::kRect;
  // Top-left corner (rect) or centre (disc) at frame 0.
  int x = 0;
  int y = 0;
  // Rect extent, or disc radius in `width`.
  int width = 8;
  int height = 8;
  int vx = 0;
  int vy = 0;
  std::array<uint8_t, 3> color{255, 255, 255};
};

// Synthetic clip description. Geometry is integer-only so clips are
// bit-identical across platforms. Shapes wrap around the canvas edges.
struct SceneSpec {
  int height = 64;
  int width = 64;
  uint64_t background_seed = 0;
  // Coarse grid cells of the smooth background texture.
  int background_cells = 4;
  bool has_overlay = true;
  Rect overlay;
  std::vector<MovingShape> shapes;
  int frame_count = 4;
  // Std-dev of per-pixel Gaussian noise, on [0,1] pixel values. Never applied
  // inside the overlay.
  double noise_level = 0.0;
};

// Random scene with a logo overlay in the lower right corner.
SceneSpec random_scene(Rng& rng, int height, int width, int frame_count);

std::vector<Frame> generate_clip(const SceneSpec& spec, Rng& rng);

// One frame per spec, cycling through specs until gop_size frames (default:
// one per spec).
Gop make_jump_gop(const std::vector<SceneSpec>& specs, Rng& rng, int gop_size = 0);

// Preset collection of seeded clips; clip i is derived from (seed, i) only.
struct ToyDataset {
  uint64_t seed = 0;
  int clip_count = 2000;
  int height = 64;
  int width = 64;
  int gop_size = 4;

  SceneSpec spec(int index) const;
  Gop clip(int index) const;
};

// Indexed GOP collection that training samples from.
struct ClipSource {
  int clip_count = 0;
  int gop_size = 0;
  std::function<Gop(int)> clip;

  ClipSource(const ToyDataset& data);  // NOLINT: implicit by design
  // Consecutive non-overlapping GOPs of a frame sequence; the tail is dropped.
  ClipSource(std::vector<Frame> frames, int gop_size);
};

// Frame directory: frame_%06d.ppm (binary PPM, 8-bit RGB), ordered by the
// number in the file name.
std::vector<Frame> read_frames(const std::filesystem::path& dir);
void write_frames(const std::vector<Frame>& frames, const std::filesystem::path& dir);

Frame read_ppm(const std::filesystem::path& file);
void write_ppm(const Frame& frame, const std::filesystem::path& file);

// Raw planar fast path: 16-byte header ("MDVR", u32 height, u32 width,
// u16 channels, u8 dtype (0 = u8, 1 = f32), u8 reserved), then
// channel-planar samples. Little-endian.
enum class RawDtype : uint8_t { kU8 = 0, kF32 = 1 };
void write_raw_frame(const Frame& frame, const std::filesystem::path& file, RawDtype dtype);
Frame read_raw_frame(const std::filesystem::path& file);

}  // namespace mdvsc

#endif  // MDVSC_DATA_H_
