#pragma once

#include <torch/torch.h>

#include "havt/model/config.hpp"

namespace havt {

// Maps are kept in torch layout: [B, C, L, h, w] for the pyramid,
// [B, C, rows, cols] for 2-D maps.
struct VisualPyramid {
  torch::Tensor p8, p16, p32;
  const torch::Tensor& level(int i) const { return i == 0 ? p8 : i == 1 ? p16 : p32; }
};

// Conv + GroupNorm + SiLU.
class ConvNorm3dImpl : public torch::nn::Module {
 public:
  ConvNorm3dImpl(int in, int out, std::array<int64_t, 3> kernel, std::array<int64_t, 3> stride,
                 std::array<int64_t, 3> padding);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::GroupNorm norm{nullptr};

 private:
  torch::nn::Conv3d conv{nullptr};
};
TORCH_MODULE(ConvNorm3d);

class VisualEncoderImpl : public torch::nn::Module {
 public:
  explicit VisualEncoderImpl(const ModelConfig& cfg);
  // video: [B, 3, D, H, W]
  VisualPyramid forward(const torch::Tensor& video);
  // Zero the affine weight of every stage's last norm.
  void zero_final_norms();

 private:
  ModelConfig cfg_;
  ConvNorm3d stem_{nullptr};
  std::vector<ConvNorm3d> down_, refine_;
};
TORCH_MODULE(VisualEncoder);

class AudioEncoderImpl : public torch::nn::Module {
 public:
  explicit AudioEncoderImpl(const ModelConfig& cfg);
  // mel: [B, M, F, T] -> [B, E_a, ceil(F/32), ceil(T/32)]
  torch::Tensor forward(const torch::Tensor& mel);
  int out_channels() const { return cfg_.audio_widths.back(); }

 private:
  ModelConfig cfg_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(AudioEncoder);

// 1x1xL convolution that removes the temporal axis and maps D_l -> E.
class TemporalSqueezeImpl : public torch::nn::Module {
 public:
  TemporalSqueezeImpl(int in_channels, int extent, int embed);
  // [B, D_l, L, h, w] -> [B, E, h, w]
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Conv3d conv{nullptr};

 private:
  int in_, extent_;
};
TORCH_MODULE(TemporalSqueeze);

}  // namespace havt
