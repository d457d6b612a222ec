#include "havt/model/config.hpp"

#include <algorithm>
#include <cmath>

#include "havt/errors.hpp"

namespace havt {

std::string fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::kHavt: return "havt";
    case FusionMode::kConcat: return "concat";
    case FusionMode::kNone: return "none";
  }
  return "?";
}

FusionMode fusion_from_name(const std::string& s) {
  if (s == "havt") return FusionMode::kHavt;
  if (s == "concat") return FusionMode::kConcat;
  if (s == "none" || s == "video") return FusionMode::kNone;
  throw ConfigError("unknown fusion mode '" + s + "' (havt, concat, none)");
}

std::string head_name(HeadKind h) { return h == HeadKind::kDecoupled ? "decoupled" : "coupled"; }

HeadKind head_from_name(const std::string& s) {
  if (s == "decoupled") return HeadKind::kDecoupled;
  if (s == "coupled") return HeadKind::kCoupled;
  throw ConfigError("unknown head '" + s + "' (decoupled, coupled)");
}

int temporal_after_stages(int frames, int stages) {
  for (int i = 0; i < stages; ++i) frames = frames > 1 ? (frames + 1) / 2 : 1;
  return frames;
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (image_size < 8) fail("image_size must be at least 8");
  if (n_frames < 1) fail("n_frames must be positive");
  if (mics != 1 && mics != 3 && mics != 6) fail("mics must be 1, 3 or 6");
  if (n_mels < 1 || mel_frames < 1) fail("mel geometry must be positive");
  for (int w : visual_widths) {
    if (w < 1) fail("visual widths must be positive");
  }
  for (int w : audio_widths) {
    if (w < 1) fail("audio widths must be positive");
  }
  if (embed < 1 || heads < 1 || embed % heads != 0) fail("embed must be a positive multiple of heads");
  if (attn_layers < 0 || spca_layers < 1 || mlp_ratio < 1) fail("layer counts must be positive");
  const int g = static_cast<int>(std::lround(std::sqrt(double(n_scaq))));
  if (n_scaq < 1 || g * g != n_scaq) fail("n_scaq must be a perfect square");
  if (scales.empty()) fail("at least one scale must be enabled");
  for (int s : scales) {
    if (std::find(kStrides.begin(), kStrides.end(), s) == kStrides.end()) {
      fail("scales must be drawn from {8, 16, 32}");
    }
  }
  if (!(size_bands[0] > 0) || !(size_bands[1] > size_bands[0])) fail("size_bands must increase");
  if (!(obj_prior > 0 && obj_prior < 1)) fail("obj_prior must lie in (0, 1)");
}

bool ModelConfig::scale_enabled(int stride) const {
  return std::find(scales.begin(), scales.end(), stride) != scales.end();
}

int ModelConfig::scaq_grid() const { return static_cast<int>(std::lround(std::sqrt(double(n_scaq)))); }

std::array<int, 3> ModelConfig::temporal_extents() const {
  return {temporal_after_stages(n_frames, 1), temporal_after_stages(n_frames, 2),
          temporal_after_stages(n_frames, 3)};
}

std::array<int, 2> ModelConfig::audio_grid() const {
  int f = n_mels, t = mel_frames;
  for (int i = 0; i < 5; ++i) {
    f = (f + 1) / 2;
    t = (t + 1) / 2;
  }
  return {f, t};
}

std::array<double, 2> ModelConfig::scaled_bands() const {
  const double k = image_size / 224.0;
  return {size_bands[0] * k, size_bands[1] * k};
}

}  // namespace havt
