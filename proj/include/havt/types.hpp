#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "havt/tensor.hpp"

namespace havt {

// Fixed order everywhere: per-class tables report AP(M), AP(I), AP(Eoff).
enum class VehicleState : int { kMoving = 0, kIdling = 1, kEngineOff = 2 };

inline constexpr int kNumClasses = 3;
inline constexpr std::array<VehicleState, kNumClasses> kAllStates = {
    VehicleState::kMoving, VehicleState::kIdling, VehicleState::kEngineOff};

std::string_view state_name(VehicleState s);    // "moving", ...
std::string_view state_short(VehicleState s);   // "M", "I", "Eoff"
VehicleState state_from_index(int idx);         // throws ValidationError

// Center-format box in absolute last-frame pixels.
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  static Box from_corners(double x0, double y0, double x1, double y1) {
    return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
  }
  friend bool operator==(const Box&, const Box&) = default;
};

// Clips the box to [0,W]x[0,H]. In-bounds boxes come back unchanged.
Box clamp_box(const Box& b, double width, double height);

struct GroundTruthBox {
  Box box;
  VehicleState cls = VehicleState::kMoving;
  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct Detection {
  Box box;
  VehicleState cls = VehicleState::kMoving;
  double score = 0;
};

// [frames, channels, H, W], values in [0,1].
struct VideoClip {
  FloatTensor frames;
  double frame_rate = 0;

  int64_t num_frames() const { return frames.dim(0); }
  int64_t channels() const { return frames.dim(1); }
  int64_t height() const { return frames.dim(2); }
  int64_t width() const { return frames.dim(3); }
};

// [mics, samples], values in [-1,1].
struct AudioSegment {
  FloatTensor samples;
  double sample_rate = 0;

  int64_t num_mics() const { return samples.dim(0); }
  int64_t num_samples() const { return samples.dim(1); }
};

using SceneMeta = std::map<std::string, std::string>;

struct Sample {
  VideoClip clip;
  AudioSegment audio;
  std::vector<GroundTruthBox> boxes;
  SceneMeta scene_meta;
};

// Expected geometry a sample is checked against. Defaults are the full-size
// configuration (16 x 3 x 224 x 224 video, 5 s of 48 kHz audio).
struct SampleGeometry {
  int64_t frames = 16;
  int64_t channels = 3;
  int64_t height = 224;
  int64_t width = 224;
  double audio_seconds = 5.0;
  double sample_rate = 48000.0;
};

// Throws ValidationError naming the first violated invariant. When geometry
// is omitted only the shape-independent invariants are checked.
void validate_sample(const Sample& s,
                     const std::optional<SampleGeometry>& geometry = std::nullopt);

}  // namespace havt
