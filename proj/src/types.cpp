#include "havt/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace havt {

bool FloatTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::string_view state_name(VehicleState s) {
  switch (s) {
    case VehicleState::kMoving: return "moving";
    case VehicleState::kIdling: return "idling";
    case VehicleState::kEngineOff: return "engine_off";
  }
  return "?";
}

std::string_view state_short(VehicleState s) {
  switch (s) {
    case VehicleState::kMoving: return "M";
    case VehicleState::kIdling: return "I";
    case VehicleState::kEngineOff: return "Eoff";
  }
  return "?";
}

VehicleState state_from_index(int idx) {
  if (idx < 0 || idx >= kNumClasses) {
    throw ValidationError("class index " + std::to_string(idx) +
                          " outside {0: moving, 1: idling, 2: engine_off}");
  }
  return static_cast<VehicleState>(idx);
}

Box clamp_box(const Box& b, double width, double height) {
  const double x0 = std::clamp(b.x0(), 0.0, width);
  const double y0 = std::clamp(b.y0(), 0.0, height);
  const double x1 = std::clamp(b.x1(), 0.0, width);
  const double y1 = std::clamp(b.y1(), 0.0, height);
  if (x0 == b.x0() && y0 == b.y0() && x1 == b.x1() && y1 == b.y1()) return b;
  return Box::from_corners(x0, y0, x1, y1);
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

void validate_sample(const Sample& s, const std::optional<SampleGeometry>& geometry) {
  const auto& v = s.clip.frames;
  const auto& a = s.audio.samples;
  require(v.rank() == 4, "video must be rank 4 [frames, channels, H, W], got " +
                             shape_to_string(v.shape()));
  require(a.rank() == 2, "audio must be rank 2 [mics, samples], got " +
                             shape_to_string(a.shape()));
  require(v.all_finite(), "video values must be finite");
  require(std::all_of(v.data().begin(), v.data().end(),
                      [](float x) { return x >= 0.0f && x <= 1.0f; }),
          "video values must lie in [0, 1]");
  const int64_t mics = a.dim(0);
  require(mics == 1 || mics == 3 || mics == 6,
          "microphone count must be 1, 3 or 6, got " + std::to_string(mics));
  require(std::all_of(a.data().begin(), a.data().end(),
                      [](float x) { return std::isfinite(x) && x >= -1.0f && x <= 1.0f; }),
          "audio samples must be finite and lie in [-1, 1]");
  require(s.clip.frame_rate > 0, "frame_rate must be positive");
  require(s.audio.sample_rate > 0, "sample_rate must be positive");

  const double W = static_cast<double>(v.dim(3));
  const double H = static_cast<double>(v.dim(2));
  constexpr double kTol = 1e-6;
  for (size_t i = 0; i < s.boxes.size(); ++i) {
    const Box& b = s.boxes[i].box;
    const std::string tag = "box " + std::to_string(i) + ": ";
    require(std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) &&
                std::isfinite(b.h),
            tag + "coordinates must be finite");
    require(b.w > 0 && b.h > 0, tag + "w and h must be positive");
    require(b.cx >= 0 && b.cx <= W && b.cy >= 0 && b.cy <= H,
            tag + "center must lie inside the image");
    require(b.x0() >= -kTol && b.y0() >= -kTol && b.x1() <= W + kTol &&
                b.y1() <= H + kTol,
            tag + "box must lie inside the image");
    const int cls = static_cast<int>(s.boxes[i].cls);
    require(cls >= 0 && cls < kNumClasses, tag + "class out of range");
  }

  if (geometry) {
    const auto& g = *geometry;
    const std::vector<int64_t> want{g.frames, g.channels, g.height, g.width};
    require(v.shape() == want, "video shape must be " + shape_to_string(want) +
                                   ", got " + shape_to_string(v.shape()));
    const auto want_samples =
        static_cast<int64_t>(std::llround(g.audio_seconds * g.sample_rate));
    require(a.dim(1) == want_samples,
            "audio must hold " + std::to_string(want_samples) + " samples per mic, got " +
                std::to_string(a.dim(1)));
    require(s.audio.sample_rate == g.sample_rate,
            "sample_rate must be " + std::to_string(g.sample_rate));
  }
}

}  // namespace havt
