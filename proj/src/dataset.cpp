#include "dsvit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dsvit/errors.hpp"
#include "dsvit/metrics.hpp"
#include "dsvit/random.hpp"
#include "dsvit/text.hpp"

namespace fs = std::filesystem;

namespace dsvit {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Color {
  double r, g, b;
};

// Float canvas with a per-glyph mask used for the local motion.
struct Canvas {
  std::size_t h, w;
  std::vector<double> rgb;  // h*w*3

  Canvas(std::size_t h_, std::size_t w_) : h(h_), w(w_), rgb(h_ * w_ * 3, 0.0) {}
  void paint(std::size_t y, std::size_t x, Color c) {
    double* p = &rgb[(y * w + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
};

using Mask = std::vector<unsigned char>;

Color jitter(Color c, Rng& rng, double amount) {
  return {std::clamp(c.r + rng.uniform(-amount, amount), 0.0, 1.0),
          std::clamp(c.g + rng.uniform(-amount, amount), 0.0, 1.0),
          std::clamp(c.b + rng.uniform(-amount, amount), 0.0, 1.0)};
}

void paint_background(Canvas& canvas, Rng& rng) {
  double cx = (static_cast<double>(canvas.w) - 1.0) / 2.0 + rng.uniform(-4.0, 4.0);
  double cy = (static_cast<double>(canvas.h) - 1.0) / 2.0 + rng.uniform(-4.0, 4.0);
  double rmax = std::hypot(static_cast<double>(canvas.w), static_cast<double>(canvas.h)) / 2.0;
  Color tint{rng.uniform(0.85, 1.0), rng.uniform(0.8, 0.95), rng.uniform(0.7, 0.9)};
  for (std::size_t y = 0; y < canvas.h; ++y) {
    for (std::size_t x = 0; x < canvas.w; ++x) {
      double r = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy) / rmax;
      double base = 0.25 + 0.45 * std::min(r, 1.0) + rng.uniform(-0.05, 0.05);
      canvas.paint(y, x, {base * tint.r, base * tint.g, base * tint.b});
    }
  }
}

struct Glyph {
  Mask mask;
  double cx = 0.0, cy = 0.0;  // motion center
};

template <typename Inside>
Glyph draw(Canvas& canvas, Color color, double cx, double cy, Inside inside) {
  Glyph g{Mask(canvas.h * canvas.w, 0), cx, cy};
  for (std::size_t y = 0; y < canvas.h; ++y) {
    for (std::size_t x = 0; x < canvas.w; ++x) {
      if (inside(static_cast<double>(x), static_cast<double>(y))) {
        canvas.paint(y, x, color);
        g.mask[y * canvas.w + x] = 1;
      }
    }
  }
  return g;
}

// DE: squashed elliptical outline of the pipe wall.
Glyph draw_deformation(Canvas& c, Rng& rng) {
  double cx = c.w / 2.0 + rng.uniform(-4, 4), cy = c.h / 2.0 + rng.uniform(-4, 4);
  double a = c.w * rng.uniform(0.28, 0.40);
  double b = a * rng.uniform(0.45, 0.65);
  double thick = rng.uniform(0.10, 0.16);
  Color col = jitter({0.60, 0.12, 0.08}, rng, 0.06);
  return draw(c, col, cx, cy, [&](double x, double y) {
    double q = std::hypot((x - cx) / a, (y - cy) / b);
    return std::abs(q - 1.0) < thick;
  });
}

// FS: offset joint ring with a gap.
Glyph draw_joint(Canvas& c, Rng& rng) {
  double ox = rng.uniform(4, 8) * (rng.bernoulli(0.5) ? 1 : -1);
  double oy = rng.uniform(4, 8) * (rng.bernoulli(0.5) ? 1 : -1);
  double cx = c.w / 2.0 + ox, cy = c.h / 2.0 + oy;
  double radius = c.w * rng.uniform(0.18, 0.28);
  double gap_at = rng.uniform(-kPi, kPi);
  Color col = jitter({0.12, 0.20, 0.65}, rng, 0.06);
  return draw(c, col, cx, cy, [&](double x, double y) {
    double r = std::hypot(x - cx, y - cy);
    if (std::abs(r - radius) > 1.6) return false;
    double d = std::remainder(std::atan2(y - cy, x - cx) - gap_at, 2.0 * kPi);
    return std::abs(d) > 0.55;
  });
}

// AF: sediment band along the bottom with a wavy top edge.
Glyph draw_deposit(Canvas& c, Rng& rng) {
  double depth = c.h * rng.uniform(0.14, 0.24);
  double phase = rng.uniform(0, 2 * kPi);
  double amp = rng.uniform(1.0, 2.5);
  Color col = jitter({0.78, 0.66, 0.22}, rng, 0.06);
  double top_base = static_cast<double>(c.h) - depth;
  return draw(c, col, c.w / 2.0, c.h - depth / 2.0, [&](double x, double y) {
    return y >= top_base + amp * std::sin(phase + x * 0.25);
  });
}

// GR: branch opening as a dark disc near a side wall.
Glyph draw_branch(Canvas& c, Rng& rng) {
  double radius = c.w * rng.uniform(0.09, 0.14);
  bool left = rng.bernoulli(0.5);
  double cx = left ? radius + rng.uniform(1, 4) : c.w - 1 - radius - rng.uniform(1, 4);
  double cy = c.h * rng.uniform(0.3, 0.6);
  Color col = jitter({0.05, 0.06, 0.05}, rng, 0.03);
  return draw(c, col, cx, cy, [&](double x, double y) { return std::hypot(x - cx, y - cy) <= radius; });
}

// OK: bright rectangular patch of new material.
Glyph draw_patch(Canvas& c, Rng& rng) {
  double pw = c.w * rng.uniform(0.14, 0.22), ph = c.h * rng.uniform(0.14, 0.22);
  double x0 = rng.uniform(2, c.w - pw - 2), y0 = rng.uniform(2, c.h * 0.7 - ph);
  Color col = jitter({0.95, 0.95, 0.88}, rng, 0.04);
  return draw(c, col, x0 + pw / 2, y0 + ph / 2, [&](double x, double y) {
    return x >= x0 && x < x0 + pw && y >= y0 && y < y0 + ph;
  });
}

// Local motion of each glyph class, relative to the glyph center.
void add_local_motion(FlowField& flow, const Glyph& g, int cls, Rng& rng) {
  double gain = rng.uniform(0.8, 1.2);
  for (std::size_t y = 0; y < flow.height; ++y) {
    for (std::size_t x = 0; x < flow.width; ++x) {
      std::size_t i = flow.index(y, x);
      if (!g.mask[i]) continue;
      double rx = static_cast<double>(x) - g.cx, ry = static_cast<double>(y) - g.cy;
      double u = 0.0, v = 0.0;
      switch (cls) {
        case 0: u = 0.15 * rx; v = 0.15 * ry; break;     // expansion
        case 1: u = -0.2 * ry; v = 0.2 * rx; break;      // rotation
        case 2: u = 3.0; v = 1.0; break;                 // drift
        case 3: u = 0.35 * ry; v = -0.35 * rx; break;    // counter-rotation
        case 4: u = -3.0; v = 2.0; break;                // shear drift
      }
      flow.dx[i] += gain * u;
      flow.dy[i] += gain * v;
    }
  }
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::nearbyint(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string format_id(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return buf;
}

void check_data_config(const DataConfig& cfg) {
  if (cfg.height < 16 || cfg.width < 16) throw ConfigError("synthetic images must be at least 16x16");
  if (cfg.max_glyphs > 5) throw ConfigError("data.max_glyphs cannot exceed 5");
  for (double r : cfg.class_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("class rates must lie in [0, 1]");
  }
}

}  // namespace

LabelVector sample_labels(const DataConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    LabelVector y{};
    std::size_t count = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      y[c] = rng.bernoulli(cfg.class_rates[c]) ? 1 : 0;
      count += static_cast<std::size_t>(y[c]);
    }
    if (count <= cfg.max_glyphs) return y;
  }
  throw ConfigError("class rates almost never satisfy data.max_glyphs");
}

SyntheticSample synthesize_sample(const DataConfig& cfg, std::uint64_t sample_seed) {
  check_data_config(cfg);
  Rng rng(sample_seed);
  SyntheticSample s;
  s.labels = sample_labels(cfg, rng);

  Canvas canvas(cfg.height, cfg.width);
  paint_background(canvas, rng);
  FlowParams camera;
  camera.kind = FlowKind::translation;
  camera.tx = rng.uniform(-0.75, 0.75);
  camera.ty = rng.uniform(-0.75, 0.75);
  camera.noise_std = 0.05;
  camera.max_displacement = cfg.max_displacement;
  s.flow = synth_flow(camera, cfg.height, cfg.width, rng.next());

  // Painter's order: deposits first so other glyphs sit on top.
  static constexpr int kOrder[5] = {2, 0, 1, 3, 4};
  for (int cls : kOrder) {
    if (!s.labels[static_cast<std::size_t>(cls)]) continue;
    Glyph g;
    switch (cls) {
      case 0: g = draw_deformation(canvas, rng); break;
      case 1: g = draw_joint(canvas, rng); break;
      case 2: g = draw_deposit(canvas, rng); break;
      case 3: g = draw_branch(canvas, rng); break;
      case 4: g = draw_patch(canvas, rng); break;
    }
    add_local_motion(s.flow, g, cls, rng);
  }
  for (std::size_t i = 0; i < s.flow.dx.size(); ++i) {
    s.flow.dx[i] = std::clamp(s.flow.dx[i], -cfg.max_displacement, cfg.max_displacement);
    s.flow.dy[i] = std::clamp(s.flow.dy[i], -cfg.max_displacement, cfg.max_displacement);
  }
  s.flow = quantize_to_float(s.flow);
  s.motion = encode_flow_image(s.flow);

  s.rgb = RgbImage(cfg.height, cfg.width);
  for (std::size_t i = 0; i < canvas.rgb.size(); ++i) s.rgb.pixels[i] = to_byte(canvas.rgb[i]);
  return s;
}

std::string DatasetManifest::rgb_path(const ManifestEntry& e) const {
  return (fs::path(root) / e.split / "rgb" / (e.id + ".png")).string();
}

std::string DatasetManifest::motion_path(const ManifestEntry& e) const {
  return (fs::path(root) / e.split / "motion" / (e.id + ".png")).string();
}

std::string DatasetManifest::flow_path(const ManifestEntry& e) const {
  return (fs::path(root) / e.split / "flow" / (e.id + ".dsfl")).string();
}

std::vector<std::size_t> DatasetManifest::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

DatasetManifest generate_dataset(const DataConfig& cfg, const std::string& root, std::uint64_t seed) {
  check_data_config(cfg);
  if (cfg.train + cfg.val < 10) throw ConfigError("a dataset needs at least 10 samples");
  DatasetManifest manifest;
  manifest.root = root;
  for (const char* split : {"train", "val"}) {
    for (const char* kind : {"rgb", "motion", "flow"}) {
      fs::path dir = fs::path(root) / split / kind;
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }
  }
  std::size_t total = cfg.train + cfg.val;
  for (std::size_t i = 0; i < total; ++i) {
    SyntheticSample s = synthesize_sample(cfg, derive_seed(seed, i));
    ManifestEntry e{format_id(i), i < cfg.train ? "train" : "val", s.labels, s.motion.m_max};
    write_png(manifest.rgb_path(e), s.rgb);
    write_png(manifest.motion_path(e), s.motion.image);
    write_flow(manifest.flow_path(e), s.flow);
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(manifest);
  return manifest;
}

void write_manifest(const DatasetManifest& manifest) {
  std::string path = (fs::path(manifest.root) / "manifest.csv").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "id,split";
  for (const auto& name : kClassNames) out << "," << name;
  out << ",m_max\n";
  for (const auto& e : manifest.entries) {
    out << e.id << "," << e.split;
    for (int y : e.labels) out << "," << y;
    out << "," << format_exact(e.m_max) << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

DatasetManifest read_manifest(const std::string& root) {
  std::string path = (fs::path(root) / "manifest.csv").string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::string line;
  std::vector<std::string> header{"id", "split"};
  header.insert(header.end(), kClassNames.begin(), kClassNames.end());
  header.push_back("m_max");
  if (!std::getline(in, line) || split_fields(line) != header) {
    throw IoError(path + ": expected header id,split,DE,FS,AF,GR,OK,m_max");
  }
  DatasetManifest manifest;
  manifest.root = root;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    std::string where = path + ":" + std::to_string(lineno);
    if (f.size() != header.size()) throw IoError(where + ": expected " + std::to_string(header.size()) + " fields");
    ManifestEntry e;
    e.id = f[0];
    e.split = f[1];
    if (e.split != "train" && e.split != "val") throw IoError(where + ": unknown split " + e.split);
    for (std::size_t c = 0; c < 5; ++c) {
      if (f[2 + c] != "0" && f[2 + c] != "1") throw IoError(where + ": label must be 0 or 1");
      e.labels[c] = f[2 + c] == "1" ? 1 : 0;
    }
    if (!parse_double(f[7], e.m_max) || !(e.m_max > 0.0)) throw IoError(where + ": bad m_max");
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void validate_manifest(const DatasetManifest& manifest) {
  for (const auto& e : manifest.entries) {
    for (const auto& p : {manifest.rgb_path(e), manifest.motion_path(e), manifest.flow_path(e)}) {
      if (!fs::exists(p)) throw IoError("entry " + e.id + ": missing file " + p);
    }
    RgbImage rgb = read_png(manifest.rgb_path(e));
    RgbImage motion = read_png(manifest.motion_path(e));
    FlowField flow = read_flow(manifest.flow_path(e));
    if (rgb.height != motion.height || rgb.width != motion.width || rgb.height != flow.height ||
        rgb.width != flow.width) {
      throw IoError("entry " + e.id + ": rgb, motion and flow sizes differ");
    }
  }
}

Sample load_pair(const DatasetManifest& manifest, std::size_t index) {
  if (index >= manifest.entries.size()) {
    throw ContractError("sample index " + std::to_string(index) + " out of range (" +
                        std::to_string(manifest.entries.size()) + " entries)");
  }
  const ManifestEntry& e = manifest.entries[index];
  RgbImage rgb, motion;
  try {
    rgb = read_png(manifest.rgb_path(e));
    motion = read_png(manifest.motion_path(e));
  } catch (const IoError& err) {
    throw IoError("entry " + e.id + ": " + err.what());
  }
  if (rgb.height != motion.height || rgb.width != motion.width) {
    throw IoError("entry " + e.id + ": rgb and motion images differ in size");
  }
  std::vector<double> y(e.labels.begin(), e.labels.end());
  return {to_tensor(rgb), to_tensor(motion), Tensor(Shape{5}, std::move(y))};
}

LoadedSplit load_split(const DatasetManifest& manifest, const std::string& split) {
  LoadedSplit out;
  for (std::size_t i : manifest.split_indices(split)) {
    out.ids.push_back(manifest.entries[i].id);
    out.samples.push_back(load_pair(manifest, i));
  }
  return out;
}

}  // namespace dsvit
