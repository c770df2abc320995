#ifndef MRSEG_SYNTHVID_HPP
#define MRSEG_SYNTHVID_HPP

/// \file synthvid.hpp
/// \brief Deterministic synthetic videos: one textured shape moving over a
/// procedural background, with exact per-frame masks, plus the on-disk
/// dataset layout
///
///     root/manifest.json
///     root/video_0000/frame_0000.ppm   (P6)
///     root/video_0000/mask_0000.pgm    (P5, values 0 / 255)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrseg/errors.hpp"
#include "mrseg/netpbm.hpp"
#include "mrseg/rng.hpp"
#include "mrseg/tensor.hpp"

namespace mrseg {

enum class ShapeKind { kDisc, kRectangle, kTriangle };

inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kDisc: return "disc";
    case ShapeKind::kRectangle: return "rectangle";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "disc";
}

inline ShapeKind shape_from_string(const std::string& s) {
  if (s == "disc") return ShapeKind::kDisc;
  if (s == "rectangle") return ShapeKind::kRectangle;
  if (s == "triangle") return ShapeKind::kTriangle;
  throw FormatError("unknown shape kind '" + s + "'");
}

using Rgb = std::array<double, 3>;

struct Vec2 {
  double x = 0.0, y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct VideoSpec {
  std::uint64_t seed = 0;  ///< drives background noise
  std::size_t frames = 12;
  std::size_t width = 64;
  std::size_t height = 64;

  ShapeKind shape = ShapeKind::kDisc;
  double radius = 12.0;  ///< circumradius in pixels
  double aspect = 0.7;   ///< rectangle half-extents radius*(aspect, sqrt(1-aspect^2))
  Vec2 position;         ///< center at t = 0
  Vec2 velocity;         ///< px / frame
  double angle = 0.0;    ///< radians at t = 0
  double angular_velocity = 0.0;

  Rgb object_color{0.9, 0.2, 0.2};
  double stripe_period = 6.0;
  double stripe_contrast = 0.3;

  Rgb background_a{0.2, 0.2, 0.2};
  Rgb background_b{0.6, 0.6, 0.6};
  double noise_cell = 8.0;   ///< lattice spacing of the value noise, px
  double grain = 0.05;       ///< amplitude of per-pixel static grain

  double photometric_drift = 0.0;  ///< brightness added per frame

  friend bool operator==(const VideoSpec&, const VideoSpec&) = default;

  /// Center positions must keep this margin from every border.
  double margin() const { return radius + 1.0; }

  void validate() const {
    if (frames == 0) throw ConfigError("video needs at least one frame");
    if (width == 0 || height == 0 || width % 8 != 0 || height % 8 != 0)
      throw ConfigError("frame size " + std::to_string(width) + "x" + std::to_string(height) +
                        " must be positive and divisible by 8");
    if (!(radius > 0.0)) throw ConfigError("shape radius must be positive");
    if (2.0 * margin() > static_cast<double>(std::min(width, height)))
      throw ConfigError("shape of radius " + std::to_string(radius) + " does not fit in a " +
                        std::to_string(width) + "x" + std::to_string(height) + " frame");
    if (!(aspect > 0.0 && aspect < 1.0)) throw ConfigError("rectangle aspect must be in (0,1)");
    if (!(noise_cell > 0.0) || !(stripe_period > 0.0))
      throw ConfigError("noise cell and stripe period must be positive");
    const auto inside = [&](double p, std::size_t extent) {
      return p >= margin() && p <= static_cast<double>(extent) - margin();
    };
    if (!inside(position.x, width) || !inside(position.y, height))
      throw ConfigError("initial position puts the shape outside the frame");
  }
};

struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  ///< 0 or 1, row-major

  Mask() = default;
  Mask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}
  std::uint8_t& at(std::size_t x, std::size_t y) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return bits[y * width + x]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  bool empty() const { return bits.empty(); }

  friend bool operator==(const Mask&, const Mask&) = default;
};

struct Frame {
  Tensor3 image;  ///< 3 x H x W, values k/255
  Mask mask;

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Video {
  std::string id;
  VideoSpec spec;
  std::vector<Frame> frames;
};

/// Folds p into [lo, hi] by mirror reflection at the walls.
inline double reflect_into(double p, double lo, double hi) {
  const double len = hi - lo;
  if (len <= 0.0) return lo;
  double u = std::fmod(p - lo, 2.0 * len);
  if (u < 0.0) u += 2.0 * len;
  return lo + (u > len ? 2.0 * len - u : u);
}

struct Pose {
  Vec2 center;
  double angle = 0.0;
};

inline Pose pose_at(const VideoSpec& spec, std::size_t t) {
  const double ft = static_cast<double>(t);
  const double m = spec.margin();
  return {{reflect_into(spec.position.x + spec.velocity.x * ft, m, static_cast<double>(spec.width) - m),
           reflect_into(spec.position.y + spec.velocity.y * ft, m, static_cast<double>(spec.height) - m)},
          spec.angle + spec.angular_velocity * ft};
}

namespace detail {

/// Inside test in shape-local coordinates (u, v), origin at the center.
inline bool shape_contains(const VideoSpec& s, double u, double v) {
  switch (s.shape) {
    case ShapeKind::kDisc:
      return u * u + v * v <= s.radius * s.radius;
    case ShapeKind::kRectangle: {
      const double hx = s.radius * s.aspect;
      const double hy = s.radius * std::sqrt(1.0 - s.aspect * s.aspect);
      return std::abs(u) <= hx && std::abs(v) <= hy;
    }
    case ShapeKind::kTriangle: {
      // Equilateral, circumradius r: three half-planes at distance r/2.
      for (int k = 0; k < 3; ++k) {
        const double a = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * k / 3.0;
        if (u * std::cos(a) + v * std::sin(a) < -s.radius / 2.0) return false;
      }
      return true;
    }
  }
  return false;
}

inline double quantize(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

class ValueNoise {
 public:
  ValueNoise(const VideoSpec& s)
      : cell_(s.noise_cell),
        nx_(static_cast<std::size_t>(std::ceil(s.width / s.noise_cell)) + 2),
        ny_(static_cast<std::size_t>(std::ceil(s.height / s.noise_cell)) + 2),
        lattice_(nx_ * ny_),
        grain_(s.width * s.height) {
    Rng rng(mix_seed(s.seed, 0));
    for (double& v : lattice_) v = rng.uniform();
    for (double& v : grain_) v = rng.uniform(-1.0, 1.0);
  }

  double at(std::size_t x, std::size_t y) const {
    const double fx = (x + 0.5) / cell_, fy = (y + 0.5) / cell_;
    const std::size_t ix = static_cast<std::size_t>(fx), iy = static_cast<std::size_t>(fy);
    const double tx = smoothstep(fx - ix), ty = smoothstep(fy - iy);
    const auto l = [&](std::size_t i, std::size_t j) { return lattice_[j * nx_ + i]; };
    const double top = l(ix, iy) * (1 - tx) + l(ix + 1, iy) * tx;
    const double bot = l(ix, iy + 1) * (1 - tx) + l(ix + 1, iy + 1) * tx;
    return top * (1 - ty) + bot * ty;
  }
  double grain(std::size_t x, std::size_t y, std::size_t width) const { return grain_[y * width + x]; }

 private:
  double cell_;
  std::size_t nx_, ny_;
  std::vector<double> lattice_;
  std::vector<double> grain_;
};

}  // namespace detail

inline std::vector<Frame> generate_video(const VideoSpec& spec) {
  spec.validate();
  const detail::ValueNoise noise(spec);
  const std::size_t w = spec.width, h = spec.height;
  std::vector<Frame> frames;
  frames.reserve(spec.frames);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const Pose pose = pose_at(spec, t);
    const double ca = std::cos(pose.angle), sa = std::sin(pose.angle);
    const double drift = spec.photometric_drift * static_cast<double>(t);
    Frame f{Tensor3(3, h, w), Mask(w, h)};
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = x + 0.5 - pose.center.x, dy = y + 0.5 - pose.center.y;
        const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
        const bool inside = detail::shape_contains(spec, u, v);
        f.mask.at(x, y) = inside ? 1 : 0;
        Rgb c;
        if (inside) {
          const double stripe = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * u / spec.stripe_period);
          const double gain = 1.0 - spec.stripe_contrast + spec.stripe_contrast * stripe;
          for (int k = 0; k < 3; ++k) c[k] = spec.object_color[k] * gain;
        } else {
          const double n = noise.at(x, y);
          const double g = spec.grain * noise.grain(x, y, w);
          for (int k = 0; k < 3; ++k)
            c[k] = spec.background_a[k] * (1.0 - n) + spec.background_b[k] * n + g;
        }
        for (std::size_t k = 0; k < 3; ++k) f.image(k, y, x) = detail::quantize(c[k] + drift);
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

/// Draws a complete VideoSpec from a seed: shape, size, motion and palette.
inline VideoSpec random_video_spec(std::uint64_t seed, std::size_t frames, std::size_t width,
                                   std::size_t height) {
  Rng rng(mix_seed(seed, 1));
  VideoSpec s;
  s.seed = seed;
  s.frames = frames;
  s.width = width;
  s.height = height;
  s.shape = static_cast<ShapeKind>(rng.below(3));
  const double side = static_cast<double>(std::min(width, height));
  s.radius = side * rng.uniform(0.22, 0.34);
  s.aspect = rng.uniform(0.55, 0.85);
  const double m = s.margin();
  s.position = {rng.uniform(m, width - m), rng.uniform(m, height - m)};
  const double speed = rng.uniform(0.5, 2.5) * side / 64.0;
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  s.velocity = {speed * std::cos(heading), speed * std::sin(heading)};
  s.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  s.angular_velocity = rng.uniform(-0.15, 0.15);

  // Saturated object hue, low-saturation background palette.
  const double hue = rng.uniform(0.0, 1.0);
  for (int k = 0; k < 3; ++k) {
    const double phase = 2.0 * std::numbers::pi * (hue + k / 3.0);
    s.object_color[k] = std::clamp(0.55 + 0.45 * std::cos(phase), 0.0, 1.0);
  }
  s.stripe_period = rng.uniform(4.0, 10.0);
  s.stripe_contrast = rng.uniform(0.1, 0.4);
  const double base = rng.uniform(0.15, 0.55);
  for (int k = 0; k < 3; ++k) {
    s.background_a[k] = std::clamp(base + rng.uniform(-0.1, 0.1), 0.0, 1.0);
    s.background_b[k] = std::clamp(base + 0.3 + rng.uniform(-0.1, 0.1), 0.0, 1.0);
  }
  s.noise_cell = rng.uniform(6.0, 16.0);
  s.grain = rng.uniform(0.0, 0.06);
  s.photometric_drift = rng.uniform(-0.01, 0.01);
  return s;
}

inline std::vector<Video> generate_dataset(std::uint64_t seed, std::size_t videos,
                                           std::size_t frames, std::size_t width,
                                           std::size_t height) {
  std::vector<Video> out;
  out.reserve(videos);
  for (std::size_t i = 0; i < videos; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "video_%04zu", i);
    VideoSpec spec = random_video_spec(mix_seed(seed, 1000 + i), frames, width, height);
    out.push_back({id, spec, generate_video(spec)});
  }
  return out;
}

/// Average-pools each factor x factor cell to a soft target in [0,1];
/// returns (H/f * W/f) x 1 in flatten() order.
inline Matrix pool_mask(const Mask& mask, std::size_t factor = 8) {
  if (factor == 0 || mask.width % factor != 0 || mask.height % factor != 0)
    throw DimensionError("mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                         " not divisible by pooling factor " + std::to_string(factor));
  const std::size_t pw = mask.width / factor, ph = mask.height / factor;
  Matrix out(pw * ph, 1);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t cy = 0; cy < ph; ++cy)
    for (std::size_t cx = 0; cx < pw; ++cx) {
      std::size_t on = 0;
      for (std::size_t y = 0; y < factor; ++y)
        for (std::size_t x = 0; x < factor; ++x) on += mask.at(cx * factor + x, cy * factor + y);
      out(cy * pw + cx, 0) = static_cast<double>(on) * inv;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Disk I/O

inline nlohmann::json to_json(const VideoSpec& s) {
  const auto v2 = [](const Vec2& v) { return nlohmann::json::array({v.x, v.y}); };
  return {{"seed", s.seed},
          {"frames", s.frames},
          {"width", s.width},
          {"height", s.height},
          {"shape", to_string(s.shape)},
          {"radius", s.radius},
          {"aspect", s.aspect},
          {"position", v2(s.position)},
          {"velocity", v2(s.velocity)},
          {"angle", s.angle},
          {"angular_velocity", s.angular_velocity},
          {"object_color", s.object_color},
          {"stripe_period", s.stripe_period},
          {"stripe_contrast", s.stripe_contrast},
          {"background_a", s.background_a},
          {"background_b", s.background_b},
          {"noise_cell", s.noise_cell},
          {"grain", s.grain},
          {"photometric_drift", s.photometric_drift}};
}

inline VideoSpec spec_from_json(const nlohmann::json& j) {
  try {
    VideoSpec s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.frames = j.at("frames").get<std::size_t>();
    s.width = j.at("width").get<std::size_t>();
    s.height = j.at("height").get<std::size_t>();
    s.shape = shape_from_string(j.at("shape").get<std::string>());
    s.radius = j.at("radius").get<double>();
    s.aspect = j.at("aspect").get<double>();
    s.position = {j.at("position").at(0).get<double>(), j.at("position").at(1).get<double>()};
    s.velocity = {j.at("velocity").at(0).get<double>(), j.at("velocity").at(1).get<double>()};
    s.angle = j.at("angle").get<double>();
    s.angular_velocity = j.at("angular_velocity").get<double>();
    s.object_color = j.at("object_color").get<Rgb>();
    s.stripe_period = j.at("stripe_period").get<double>();
    s.stripe_contrast = j.at("stripe_contrast").get<double>();
    s.background_a = j.at("background_a").get<Rgb>();
    s.background_b = j.at("background_b").get<Rgb>();
    s.noise_cell = j.at("noise_cell").get<double>();
    s.grain = j.at("grain").get<double>();
    s.photometric_drift = j.at("photometric_drift").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed video spec in manifest: ") + e.what());
  }
}

inline std::string indexed_name(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.%s", stem, i, ext);
  return buf;
}

inline void write_image(const std::filesystem::path& path, const Tensor3& img) {
  if (img.channels() != 3) throw DimensionError("PPM needs a 3-channel image, got " + img.shape());
  netpbm::Image8 out{img.width(), img.height(), 3, {}};
  out.pixels.resize(img.size());
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.pixels[(y * img.width() + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(img(c, y, x), 0.0, 1.0) * 255.0));
  netpbm::write(path, out);
}

inline Tensor3 read_image(const std::filesystem::path& path) {
  const netpbm::Image8 in = netpbm::read(path);
  if (in.channels != 3) throw FormatError(path.string() + " is not a PPM (P6) image");
  Tensor3 img(3, in.height, in.width);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img(c, y, x) = in.pixels[(y * in.width + x) * 3 + c] / 255.0;
  return img;
}

inline void write_mask(const std::filesystem::path& path, const Mask& m) {
  netpbm::Image8 out{m.width, m.height, 1, {}};
  out.pixels.resize(m.bits.size());
  for (std::size_t i = 0; i < m.bits.size(); ++i) out.pixels[i] = m.bits[i] ? 255 : 0;
  netpbm::write(path, out);
}

inline Mask read_mask(const std::filesystem::path& path) {
  const netpbm::Image8 in = netpbm::read(path);
  if (in.channels != 1) throw FormatError(path.string() + " is not a PGM (P5) mask");
  Mask m(in.width, in.height);
  for (std::size_t i = 0; i < in.pixels.size(); ++i) {
    const auto v = in.pixels[i];
    if (v != 0 && v != 255)
      throw FormatError("malformed mask " + path.string() + ": value " + std::to_string(v) +
                        " at pixel " + std::to_string(i) + " is not 0 or 255");
    m.bits[i] = v ? 1 : 0;
  }
  return m;
}

inline void write_video_dir(const std::filesystem::path& dir, const std::vector<Frame>& frames) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    write_image(dir / indexed_name("frame", t, "ppm"), frames[t].image);
    write_mask(dir / indexed_name("mask", t, "pgm"), frames[t].mask);
  }
}

/// Reads frame_####.ppm in order, with mask_####.pgm where present (missing
/// masks are left empty).
inline std::vector<Frame> read_video_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<Frame> frames;
  for (std::size_t t = 0;; ++t) {
    const auto fp = dir / indexed_name("frame", t, "ppm");
    if (!std::filesystem::exists(fp)) break;
    Frame f;
    f.image = read_image(fp);
    const auto mp = dir / indexed_name("mask", t, "pgm");
    if (std::filesystem::exists(mp)) {
      f.mask = read_mask(mp);
      if (f.mask.width != f.image.width() || f.mask.height != f.image.height())
        throw FormatError("mask size differs from frame size in " + mp.string());
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

inline void write_dataset(const std::vector<Video>& videos, const std::filesystem::path& root) {
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  nlohmann::json manifest;
  manifest["videos"] = nlohmann::json::array();
  for (const auto& v : videos) {
    write_video_dir(root / v.id, v.frames);
    manifest["videos"].push_back({{"id", v.id}, {"frames", v.frames.size()}, {"spec", to_json(v.spec)}});
  }
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + root.string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("manifest write failed in " + root.string());
}

inline std::vector<Video> read_dataset(const std::filesystem::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw IoError("cannot open " + (root / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  std::vector<Video> videos;
  for (const auto& entry : manifest.value("videos", nlohmann::json::array())) {
    Video v;
    v.id = entry.at("id").get<std::string>();
    v.spec = spec_from_json(entry.at("spec"));
    v.frames = read_video_dir(root / v.id);
    const auto expected = entry.at("frames").get<std::size_t>();
    if (v.frames.size() != expected)
      throw FormatError("manifest lists " + std::to_string(expected) + " frames for " + v.id +
                        " but " + std::to_string(v.frames.size()) + " are on disk");
    for (std::size_t t = 0; t < v.frames.size(); ++t)
      if (v.frames[t].mask.empty())
        throw FormatError("missing " + indexed_name("mask", t, "pgm") + " in " + v.id);
    videos.push_back(std::move(v));
  }
  return videos;
}

}  // namespace mrseg

#endif  // MRSEG_SYNTHVID_HPP
