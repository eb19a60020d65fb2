#include "dsvit/motion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dsvit/errors.hpp"
#include "dsvit/random.hpp"

namespace dsvit {

double FlowField::max_abs_component() const {
  double m = 0.0;
  for (double v : dx) m = std::max(m, std::abs(v));
  for (double v : dy) m = std::max(m, std::abs(v));
  return m;
}

namespace {

void check_flow(const FlowField& flow) {
  std::size_t n = flow.height * flow.width;
  if (n == 0 || flow.dx.size() != n || flow.dy.size() != n) {
    throw DimensionError("flow field buffers do not match " + std::to_string(flow.height) + "x" +
                         std::to_string(flow.width));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(flow.dx[i]) || !std::isfinite(flow.dy[i])) {
      throw ContractError("non-finite flow at pixel (" + std::to_string(i / flow.width) + ", " +
                          std::to_string(i % flow.width) + ")");
    }
  }
}

std::uint8_t quantize(double raw, double m_max) {
  double v = std::nearbyint((raw + m_max) / (2.0 * m_max) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace

MotionImage encode_flow_image(const FlowField& flow, std::optional<double> m_max) {
  check_flow(flow);
  double scale = 0.0;
  if (m_max) {
    if (!(*m_max > 0.0) || !std::isfinite(*m_max)) {
      throw ContractError("motion encoding needs a positive finite M_max");
    }
    scale = *m_max;
  } else {
    for (std::size_t i = 0; i < flow.dx.size(); ++i) {
      scale = std::max(scale, std::sqrt(flow.dx[i] * flow.dx[i] + flow.dy[i] * flow.dy[i]));
    }
    scale = std::max(scale, kMotionMagnitudeFloor);
  }
  MotionImage out{RgbImage(flow.height, flow.width), scale};
  for (std::size_t i = 0; i < flow.dx.size(); ++i) {
    // M·cos(atan2(dy, dx)) is dx, M·sin(...) is dy
    out.image.pixels[i * 3 + 0] = quantize(flow.dx[i], scale);
    out.image.pixels[i * 3 + 1] = quantize(flow.dy[i], scale);
    out.image.pixels[i * 3 + 2] = kMotionBlue;
  }
  return out;
}

FlowField decode_motion_image(const RgbImage& image, double m_max) {
  if (!(m_max > 0.0)) throw ContractError("decode needs M_max > 0");
  FlowField flow(image.height, image.width);
  for (std::size_t i = 0; i < flow.dx.size(); ++i) {
    flow.dx[i] = image.pixels[i * 3 + 0] / 255.0 * 2.0 * m_max - m_max;
    flow.dy[i] = image.pixels[i * 3 + 1] / 255.0 * 2.0 * m_max - m_max;
  }
  return flow;
}

FlowKind parse_flow_kind(const std::string& text) {
  if (text == "translation") return FlowKind::translation;
  if (text == "rotation") return FlowKind::rotation;
  if (text == "expansion") return FlowKind::expansion;
  throw ConfigError("unknown flow kind '" + text + "' (expected translation, rotation or expansion)");
}

std::string to_string(FlowKind kind) {
  switch (kind) {
    case FlowKind::translation: return "translation";
    case FlowKind::rotation: return "rotation";
    case FlowKind::expansion: return "expansion";
  }
  return "?";
}

FlowField synth_flow(const FlowParams& params, std::size_t height, std::size_t width,
                     std::uint64_t seed) {
  if (height == 0 || width == 0) throw ConfigError("synth_flow needs a non-empty grid");
  if (!(params.max_displacement > 0.0)) throw ConfigError("max_displacement must be positive");
  if (!(params.noise_std >= 0.0)) throw ConfigError("flow noise_std must be nonnegative");
  FlowField flow(height, width);
  double cx = (static_cast<double>(width) - 1.0) / 2.0;
  double cy = (static_cast<double>(height) - 1.0) / 2.0;
  Rng rng(seed);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double rx = static_cast<double>(x) - cx;
      double ry = static_cast<double>(y) - cy;
      double u = 0.0, v = 0.0;
      switch (params.kind) {
        case FlowKind::translation: u = params.tx; v = params.ty; break;
        case FlowKind::rotation: u = -params.omega * ry; v = params.omega * rx; break;
        case FlowKind::expansion: u = params.scale * rx; v = params.scale * ry; break;
      }
      if (params.noise_std > 0.0) {
        u += params.noise_std * rng.normal();
        v += params.noise_std * rng.normal();
      }
      std::size_t i = flow.index(y, x);
      flow.dx[i] = u;
      flow.dy[i] = v;
    }
  }
  double peak = flow.max_abs_component();
  if (!(peak <= params.max_displacement)) {
    throw ConfigError(to_string(params.kind) + " flow reaches " + std::to_string(peak) +
                      " px, beyond max_displacement " + std::to_string(params.max_displacement));
  }
  return flow;
}

FlowField quantize_to_float(const FlowField& flow) {
  FlowField out = flow;
  for (auto& v : out.dx) v = static_cast<double>(static_cast<float>(v));
  for (auto& v : out.dy) v = static_cast<double>(static_cast<float>(v));
  return out;
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw IoError("truncated flow file " + path);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_flow(const std::string& path, const FlowField& flow) {
  check_flow(flow);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write("DSFL", 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(flow.height));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(flow.width));
  for (std::size_t i = 0; i < flow.dx.size(); ++i) {
    put_le<float>(out, static_cast<float>(flow.dx[i]));
    put_le<float>(out, static_cast<float>(flow.dy[i]));
  }
  if (!out) throw IoError("write failed for " + path);
}

FlowField read_flow(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "DSFL", 4) != 0) {
    throw IoError(path + " is not a DSFL flow file");
  }
  auto h = get_le<std::uint32_t>(in, path);
  auto w = get_le<std::uint32_t>(in, path);
  if (h == 0 || w == 0 || static_cast<std::uint64_t>(h) * w > (1ULL << 28)) {
    throw IoError(path + " declares an invalid size " + std::to_string(h) + "x" + std::to_string(w));
  }
  FlowField flow(h, w);
  for (std::size_t i = 0; i < flow.dx.size(); ++i) {
    flow.dx[i] = get_le<float>(in, path);
    flow.dy[i] = get_le<float>(in, path);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in " + path);
  return flow;
}

}  // namespace dsvit
