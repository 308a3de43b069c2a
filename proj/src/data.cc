#include "mdvsc/data.h"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mdvsc {
namespace {

namespace fs = std::filesystem;

int wrap(int v, int n) { return ((v % n) + n) % n; }

// Smooth texture: random colours on a coarse grid, bilinearly interpolated
// in fixed point.
std::vector<uint8_t> background(const SceneSpec& spec) {
  const int cells = std::max(1, spec.background_cells);
  Rng rng(spec.background_seed);
  std::vector<std::array<int, 3>> grid((cells + 1) * (cells + 1));
  for (auto& g : grid) {
    for (int c = 0; c < 3; ++c) g[c] = 40 + static_cast<int>(rng.below(176));
  }
  std::vector<uint8_t> img(static_cast<size_t>(spec.height) * spec.width * 3);
  for (int y = 0; y < spec.height; ++y) {
    const int gy = y * cells / spec.height;
    const int fy = (y * cells * 256 / spec.height) - gy * 256;
    for (int x = 0; x < spec.width; ++x) {
      const int gx = x * cells / spec.width;
      const int fx = (x * cells * 256 / spec.width) - gx * 256;
      const auto& a = grid[gy * (cells + 1) + gx];
      const auto& b = grid[gy * (cells + 1) + gx + 1];
      const auto& c = grid[(gy + 1) * (cells + 1) + gx];
      const auto& d = grid[(gy + 1) * (cells + 1) + gx + 1];
      for (int ch = 0; ch < 3; ++ch) {
        const int top = a[ch] * (256 - fx) + b[ch] * fx;
        const int bottom = c[ch] * (256 - fx) + d[ch] * fx;
        const int v = (top * (256 - fy) + bottom * fy + (1 << 15)) >> 16;
        img[(static_cast<size_t>(y) * spec.width + x) * 3 + ch] = static_cast<uint8_t>(v);
      }
    }
  }
  return img;
}

void draw_shape(std::vector<uint8_t>& img, const SceneSpec& spec, const MovingShape& s,
                int t) {
  const int ox = s.x + t * s.vx;
  const int oy = s.y + t * s.vy;
  auto put = [&](int y, int x) {
    const size_t p = (static_cast<size_t>(wrap(y, spec.height)) * spec.width +
                      wrap(x, spec.width)) * 3;
    for (int c = 0; c < 3; ++c) img[p + c] = s.color[c];
  };
  if (s.kind == MovingShape::Kind::kRect) {
    for (int dy = 0; dy < s.height; ++dy) {
      for (int dx = 0; dx < s.width; ++dx) put(oy + dy, ox + dx);
    }
  } else {
    const int r = s.width;
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy <= r * r) put(oy + dy, ox + dx);
      }
    }
  }
}

// Bordered checker "logo".
void draw_overlay(std::vector<uint8_t>& img, const SceneSpec& spec) {
  const Rect& o = spec.overlay;
  for (int y = o.y; y < o.y + o.height; ++y) {
    for (int x = o.x; x < o.x + o.width; ++x) {
      if (y < 0 || x < 0 || y >= spec.height || x >= spec.width) continue;
      const bool border = y - o.y < 2 || x - o.x < 2 || o.y + o.height - 1 - y < 2 ||
                          o.x + o.width - 1 - x < 2;
      const bool check = (((y - o.y) / 3) + ((x - o.x) / 3)) % 2 == 0;
      const uint8_t v = border ? 250 : (check ? 230 : 20);
      const size_t p = (static_cast<size_t>(y) * spec.width + x) * 3;
      img[p] = v;
      img[p + 1] = border ? 40 : v;
      img[p + 2] = border ? 40 : v;
    }
  }
}

bool in_rect(const Rect& r, int y, int x) {
  return y >= r.y && y < r.y + r.height && x >= r.x && x < r.x + r.width;
}

Frame to_frame(const std::vector<uint8_t>& img, int h, int w, int64_t index) {
  Frame f(h, w, 3, index);
  for (size_t i = 0; i < img.size(); ++i) f.pixels[i] = static_cast<float>(img[i]) / 255.0f;
  return f;
}

// Trailing integer of a file stem, e.g. "frame_000010" -> 10.
bool frame_number(const fs::path& p, long long& out) {
  const std::string stem = p.stem().string();
  size_t end = stem.size();
  size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
  if (begin == end) return false;
  out = std::stoll(stem.substr(begin));
  return true;
}

void write_u32(std::ostream& os, uint32_t v) {
  for (int s = 0; s < 32; s += 8) os.put(static_cast<char>((v >> s) & 0xff));
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  for (int s = 0; s < 32; s += 8) v |= static_cast<uint32_t>(static_cast<uint8_t>(is.get())) << s;
  return v;
}

}  // namespace

SceneSpec random_scene(Rng& rng, int height, int width, int frame_count) {
  SceneSpec s;
  s.height = height;
  s.width = width;
  s.frame_count = frame_count;
  s.background_seed = rng.next_u64();
  s.background_cells = 2 + static_cast<int>(rng.below(4));
  const int logo = std::max(4, std::min(height, width) / 6);
  s.overlay = {width - logo - 2, height - logo - 2, logo, logo};
  const int count = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < count; ++i) {
    MovingShape m;
    m.kind = rng.below(2) == 0 ? MovingShape::Kind::kRect : MovingShape::Kind::kDisc;
    const int extent = std::max(3, std::min(height, width) / 8);
    m.width = m.kind == MovingShape::Kind::kRect
                  ? extent + static_cast<int>(rng.below(extent))
                  : extent / 2 + static_cast<int>(rng.below(extent / 2 + 1));
    m.height = extent + static_cast<int>(rng.below(extent));
    m.x = static_cast<int>(rng.below(width));
    m.y = static_cast<int>(rng.below(height));
    m.vx = static_cast<int>(rng.below(7)) - 3;
    m.vy = static_cast<int>(rng.below(7)) - 3;
    for (auto& c : m.color) c = static_cast<uint8_t>(rng.below(256));
    s.shapes.push_back(m);
  }
  return s;
}

std::vector<Frame> generate_clip(const SceneSpec& spec, Rng& rng) {
  if (spec.height < 1 || spec.width < 1 || spec.frame_count < 0) {
    throw std::invalid_argument("scene spec has invalid dimensions");
  }
  const std::vector<uint8_t> base = background(spec);
  std::vector<Frame> frames;
  frames.reserve(spec.frame_count);
  for (int t = 0; t < spec.frame_count; ++t) {
    std::vector<uint8_t> img = base;
    for (const auto& s : spec.shapes) draw_shape(img, spec, s, t);
    Frame f = to_frame(img, spec.height, spec.width, t);
    if (spec.noise_level > 0.0) {
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          for (int c = 0; c < 3; ++c) {
            const double noise = spec.noise_level * rng.normal();
            if (spec.has_overlay && in_rect(spec.overlay, y, x)) continue;
            float& v = f.at(y, x, c);
            v = static_cast<float>(std::clamp(v + noise, 0.0, 1.0));
          }
        }
      }
    }
    if (spec.has_overlay) {
      std::vector<uint8_t> logo(img.size());
      draw_overlay(logo, spec);
      const Rect& o = spec.overlay;
      for (int y = std::max(0, o.y); y < std::min(spec.height, o.y + o.height); ++y) {
        for (int x = std::max(0, o.x); x < std::min(spec.width, o.x + o.width); ++x) {
          for (int c = 0; c < 3; ++c) {
            f.at(y, x, c) =
                static_cast<float>(logo[(static_cast<size_t>(y) * spec.width + x) * 3 + c]) /
                255.0f;
          }
        }
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

Gop make_jump_gop(const std::vector<SceneSpec>& specs, Rng& rng, int gop_size) {
  if (specs.empty()) throw std::invalid_argument("make_jump_gop: no scene specs");
  if (gop_size <= 0) gop_size = static_cast<int>(specs.size());
  Gop gop;
  for (int k = 0; k < gop_size; ++k) {
    SceneSpec spec = specs[k % specs.size()];
    // Frame k of scene (k mod S), so a repeated spec behaves like a normal clip.
    spec.frame_count = k + 1;
    std::vector<Frame> clip = generate_clip(spec, rng);
    Frame f = std::move(clip.back());
    f.index = k;
    gop.frames.push_back(std::move(f));
  }
  validate_gop(gop);
  return gop;
}

SceneSpec ToyDataset::spec(int index) const {
  Rng rng = Rng::substream(seed, static_cast<uint64_t>(index));
  return random_scene(rng, height, width, gop_size);
}

Gop ToyDataset::clip(int index) const {
  Rng rng = Rng::substream(seed ^ 0x5eedULL, static_cast<uint64_t>(index));
  Gop gop;
  gop.gop_id = index;
  gop.frames = generate_clip(spec(index), rng);
  return gop;
}

ClipSource::ClipSource(const ToyDataset& data)
    : clip_count(data.clip_count), gop_size(data.gop_size),
      clip([data](int index) { return data.clip(index); }) {}

ClipSource::ClipSource(std::vector<Frame> frames, int gop)
    : clip_count(gop > 0 ? static_cast<int>(frames.size()) / gop : 0), gop_size(gop) {
  if (gop < 1) throw std::invalid_argument("clip source: GOP size must be positive");
  if (clip_count == 0) {
    throw std::invalid_argument("clip source: " + std::to_string(frames.size()) +
                                " frames do not fill one GOP of " + std::to_string(gop));
  }
  auto shared = std::make_shared<const std::vector<Frame>>(std::move(frames));
  clip = [shared, gop](int index) {
    Gop g;
    g.gop_id = index;
    g.frames.assign(shared->begin() + static_cast<ptrdiff_t>(index) * gop,
                    shared->begin() + static_cast<ptrdiff_t>(index + 1) * gop);
    return g;
  };
}

Frame read_ppm(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  std::string magic;
  is >> magic;
  if (magic != "P6") throw std::runtime_error(file.string() + ": not a binary PPM");
  auto next_int = [&]() {
    int v = 0;
    while (true) {
      is >> std::ws;
      if (is.peek() == '#') {
        std::string line;
        std::getline(is, line);
        continue;
      }
      break;
    }
    if (!(is >> v)) throw std::runtime_error(file.string() + ": bad PPM header");
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w < 1 || h < 1 || maxval != 255) {
    throw std::runtime_error(file.string() + ": unsupported PPM (need 8-bit RGB)");
  }
  is.get();
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw std::runtime_error(file.string() + ": truncated pixel data");
  }
  return to_frame(raw, h, w, 0);
}

void write_ppm(const Frame& frame, const fs::path& file) {
  if (frame.channels != 3) throw std::invalid_argument("PPM output needs 3 channels");
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << "P6\n" << frame.width << " " << frame.height << "\n255\n";
  std::vector<uint8_t> raw(frame.pixels.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(static_cast<double>(frame.pixels[i]), 0.0, 1.0);
    raw[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

std::vector<Frame> read_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::map<long long, fs::path> ordered;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
    long long number = 0;
    if (!frame_number(entry.path(), number)) continue;
    if (!ordered.emplace(number, entry.path()).second) {
      throw std::runtime_error("duplicate frame number " + std::to_string(number) + " in " +
                               dir.string());
    }
  }
  if (ordered.empty()) throw std::runtime_error("no frames in " + dir.string());
  std::vector<Frame> frames;
  for (const auto& [number, path] : ordered) {
    Frame f = read_ppm(path);
    f.index = number;
    frames.push_back(std::move(f));
  }
  std::string offenders;
  size_t i = 0;
  for (const auto& entry : ordered) {
    const fs::path& path = entry.second;
    const Frame& f = frames[i++];
    if (!f.same_shape(frames.front())) {
      offenders += " " + path.filename().string() + "(" + std::to_string(f.width) + "x" +
                   std::to_string(f.height) + ")";
    }
  }
  if (!offenders.empty()) {
    throw std::runtime_error("mixed resolutions, expected " +
                             std::to_string(frames.front().width) + "x" +
                             std::to_string(frames.front().height) + ":" + offenders);
  }
  return frames;
}

void write_frames(const std::vector<Frame>& frames, const fs::path& dir) {
  fs::create_directories(dir);
  for (size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.ppm", i);
    write_ppm(frames[i], dir / name);
  }
}

void write_raw_frame(const Frame& frame, const fs::path& file, RawDtype dtype) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os.write("MDVR", 4);
  write_u32(os, static_cast<uint32_t>(frame.height));
  write_u32(os, static_cast<uint32_t>(frame.width));
  os.put(static_cast<char>(frame.channels & 0xff));
  os.put(static_cast<char>((frame.channels >> 8) & 0xff));
  os.put(static_cast<char>(dtype));
  os.put(0);
  for (int c = 0; c < frame.channels; ++c) {
    for (int y = 0; y < frame.height; ++y) {
      for (int x = 0; x < frame.width; ++x) {
        const float v = frame.at(y, x, c);
        if (dtype == RawDtype::kU8) {
          os.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
        } else {
          write_u32(os, std::bit_cast<uint32_t>(v));
        }
      }
    }
  }
}

Frame read_raw_frame(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != "MDVR") {
    throw std::runtime_error(file.string() + ": bad raw frame magic");
  }
  const uint32_t h = read_u32(is);
  const uint32_t w = read_u32(is);
  const int c = static_cast<uint8_t>(is.get()) | (static_cast<uint8_t>(is.get()) << 8);
  const int dtype = is.get();
  is.get();
  if (!is || h == 0 || w == 0 || c == 0 || (dtype != 0 && dtype != 1)) {
    throw std::runtime_error(file.string() + ": bad raw frame header");
  }
  Frame f(static_cast<int>(h), static_cast<int>(w), c);
  for (int ch = 0; ch < c; ++ch) {
    for (uint32_t y = 0; y < h; ++y) {
      for (uint32_t x = 0; x < w; ++x) {
        float v;
        if (dtype == 0) {
          v = static_cast<float>(static_cast<uint8_t>(is.get())) / 255.0f;
        } else {
          v = std::bit_cast<float>(read_u32(is));
        }
        f.at(static_cast<int>(y), static_cast<int>(x), ch) = v;
      }
    }
  }
  if (!is) throw std::runtime_error(file.string() + ": truncated raw frame");
  return f;
}

}  // namespace mdvsc
