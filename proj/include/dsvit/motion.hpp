#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsvit/image_io.hpp"

namespace dsvit {

/// Per-pixel displacement in pixels/frame, row-major H×W.
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> dx;
  std::vector<double> dy;

  FlowField() = default;
  FlowField(std::size_t h, std::size_t w) : height(h), width(w), dx(h * w, 0.0), dy(h * w, 0.0) {}

  std::size_t index(std::size_t y, std::size_t x) const { return y * width + x; }
  /// Largest |dx| or |dy|.
  double max_abs_component() const;
  bool operator==(const FlowField&) const = default;
};

inline constexpr double kMotionMagnitudeFloor = 1e-6;
inline constexpr std::uint8_t kMotionBlue = 255;

/// Color-coded flow. m_max is the half-range used for the R/G rescale.
struct MotionImage {
  RgbImage image;
  double m_max = 0.0;
};

/// R = dx and G = dy mapped linearly from [-M_max, M_max] to [0, 255] with
/// round-half-even; B = 255. M_max defaults to max(per-image magnitude, 1e-6).
/// A supplied M_max makes the encoding pixel-local; values beyond it saturate.
MotionImage encode_flow_image(const FlowField& flow, std::optional<double> m_max = std::nullopt);

/// Inverse of the R/G rescale; B is ignored.
FlowField decode_motion_image(const RgbImage& image, double m_max);

enum class FlowKind { translation, rotation, expansion };

FlowKind parse_flow_kind(const std::string& text);
std::string to_string(FlowKind kind);

struct FlowParams {
  FlowKind kind = FlowKind::translation;
  double tx = 0.0;     // translation (dx, dy)
  double ty = 0.0;
  double omega = 0.0;  // rotation rate about the image center
  double scale = 0.0;  // expansion rate about the image center
  double noise_std = 0.0;
  double max_displacement = 8.0;
};

/// Parametric field about the center ((W-1)/2, (H-1)/2), plus optional seeded
/// Gaussian noise. Throws ConfigError if any component would exceed
/// max_displacement.
FlowField synth_flow(const FlowParams& params, std::size_t height, std::size_t width,
                     std::uint64_t seed);

/// Little-endian: "DSFL", u32 H, u32 W, then H·W float32 (dx, dy) pairs.
void write_flow(const std::string& path, const FlowField& flow);
FlowField read_flow(const std::string& path);

/// Rounds every component to float32, the precision of the flow file.
FlowField quantize_to_float(const FlowField& flow);

}  // namespace dsvit
