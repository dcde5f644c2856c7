#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace rgbdface {

// Desk: width-reduced CPU configuration used by tests and desk-scale runs.
// Full: 256x256 input and the full ResNet-18 widths (512x8x8 terminal map).
enum class Profile { Desk, Full };

inline std::string_view to_string(Profile p) { return p == Profile::Desk ? "desk" : "full"; }

inline std::optional<Profile> parse_profile(std::string_view s) {
  if (s == "desk") return Profile::Desk;
  if (s == "full") return Profile::Full;
  return std::nullopt;
}

struct Geometry {
  int input_size = 64;                               // square input side, divisible by 32
  std::array<int, 4> backbone_widths{16, 32, 64, 128};  // residual stage widths
  int generator_base = 8;                            // encoder width at full resolution
  int embedding_dim = 512;                           // separation-head output size

  int terminal_size() const { return input_size / 32; }
  int terminal_channels() const { return backbone_widths[3]; }
  int flat_dim() const { return terminal_channels() * terminal_size() * terminal_size(); }
};

inline Geometry geometry_for(Profile p) {
  if (p == Profile::Full) return Geometry{256, {64, 128, 256, 512}, 32, 512};
  return Geometry{64, {16, 32, 64, 128}, 8, 512};
}

}  // namespace rgbdface
