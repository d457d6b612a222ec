#pragma once

#include <array>
#include <string>
#include <vector>

namespace havt {

enum class FusionMode { kHavt, kConcat, kNone };
enum class HeadKind { kDecoupled, kCoupled };

std::string fusion_name(FusionMode m);
FusionMode fusion_from_name(const std::string& s);  // ConfigError on unknown
std::string head_name(HeadKind h);
HeadKind head_from_name(const std::string& s);

inline constexpr std::array<int, 3> kStrides{8, 16, 32};

struct ModelConfig {
  // Input geometry.
  int image_size = 224;
  int n_frames = 16;
  int mics = 6;
  int n_mels = 128;
  int mel_frames = 469;

  std::array<int, 4> visual_widths{16, 32, 64, 128};
  std::array<int, 5> audio_widths{16, 32, 64, 128, 128};
  int embed = 128;  // E
  int attn_layers = 12;
  int heads = 4;
  int mlp_ratio = 4;
  int spca_layers = 2;
  int n_scaq = 49;

  HeadKind head = HeadKind::kDecoupled;
  FusionMode fusion = FusionMode::kHavt;
  std::vector<int> scales{8, 16, 32};
  // max(w,h) bands separating the 8/16 and 16/32 levels, in pixels at
  // image_size 224; scaled linearly for other sizes.
  std::array<double, 2> size_bands{64.0, 128.0};
  double obj_prior = 0.01;

  void validate() const;  // throws ConfigError
  bool scale_enabled(int stride) const;
  int grid(int stride) const { return (image_size + stride - 1) / stride; }
  int scaq_grid() const;
  // Temporal extent of the p8/p16/p32 maps.
  std::array<int, 3> temporal_extents() const;
  std::array<int, 2> audio_grid() const;  // (mel rows, time cols) after encoding
  std::array<double, 2> scaled_bands() const;
};

// Stage-wise temporal stride is 2 while more than one frame remains.
int temporal_after_stages(int frames, int stages);

}  // namespace havt
