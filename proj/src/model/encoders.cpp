#include "havt/model/encoders.hpp"

#include "havt/errors.hpp"
#include "havt/tensor.hpp"

namespace havt {
namespace {

using I3 = std::array<int64_t, 3>;

// At most 8 groups, at least 4 channels per group: a group of one channel
// normalizes a 1x1 map to zero.
int norm_groups(int channels) {
  for (int g : {8, 4, 2}) {
    if (channels % g == 0 && channels / g >= 4) return g;
  }
  return 1;
}

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

std::string dims_text(const torch::Tensor& t) { return shape_to_string(t.sizes().vec()); }

// Audio stages carry no normalization: the maps shrink to a few cells, where
// group statistics would wash out the level differences between channels.
class ConvAct2dImpl : public torch::nn::Module {
 public:
  ConvAct2dImpl(int in, int out) {
    conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(2).padding(1)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return torch::silu(conv_(x)); }

 private:
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(ConvAct2d);

}  // namespace

ConvNorm3dImpl::ConvNorm3dImpl(int in, int out, std::array<int64_t, 3> kernel,
                               std::array<int64_t, 3> stride, std::array<int64_t, 3> padding) {
  conv = register_module(
      "conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, kernel).stride(stride).padding(padding)));
  norm = register_module("norm", torch::nn::GroupNorm(norm_groups(out), out));
}

torch::Tensor ConvNorm3dImpl::forward(const torch::Tensor& x) { return torch::silu(norm(conv(x))); }

VisualEncoderImpl::VisualEncoderImpl(const ModelConfig& cfg) : cfg_(cfg) {
  const auto& w = cfg.visual_widths;
  stem_ = register_module("stem", ConvNorm3d(3, w[0], I3{1, 4, 4}, I3{1, 4, 4}, I3{0, 0, 0}));
  int frames = cfg.n_frames;
  for (int s = 1; s < 4; ++s) {
    const int64_t ts = frames > 1 ? 2 : 1;
    frames = temporal_after_stages(frames, 1);
    down_.push_back(register_module("down" + std::to_string(s),
                                     ConvNorm3d(w[s - 1], w[s], I3{3, 3, 3}, I3{ts, 2, 2}, I3{1, 1, 1})));
    refine_.push_back(register_module("refine" + std::to_string(s),
                                      ConvNorm3d(w[s], w[s], I3{3, 3, 3}, I3{1, 1, 1}, I3{1, 1, 1})));
  }
}

VisualPyramid VisualEncoderImpl::forward(const torch::Tensor& video) {
  if (video.dim() != 5 || video.size(1) != 3 || video.size(2) != cfg_.n_frames ||
      video.size(3) != cfg_.image_size || video.size(4) != cfg_.image_size) {
    throw ShapeError("visual encoder expects [B, 3, " + std::to_string(cfg_.n_frames) + ", " +
                     std::to_string(cfg_.image_size) + ", " + std::to_string(cfg_.image_size) +
                     "], got " + dims_text(video));
  }
  torch::Tensor x = stem_(video);
  std::vector<torch::Tensor> levels;
  for (size_t s = 0; s < down_.size(); ++s) {
    x = down_[s](x);
    x = x + refine_[s](x);
    levels.push_back(x);
  }
  const auto extents = cfg_.temporal_extents();
  for (int l = 0; l < 3; ++l) {
    const int64_t want = ceil_div(cfg_.image_size, kStrides[l]);
    const auto& t = levels[l];
    if (t.size(2) != extents[l] || t.size(3) != want || t.size(4) != want) {
      throw ShapeError("pyramid level " + std::to_string(kStrides[l]) + " has shape " + dims_text(t));
    }
  }
  return {levels[0], levels[1], levels[2]};
}

void VisualEncoderImpl::zero_final_norms() {
  torch::NoGradGuard ng;
  for (auto& r : refine_) r->norm->weight.zero_();
  for (auto& d : down_) d->norm->weight.zero_();
}

AudioEncoderImpl::AudioEncoderImpl(const ModelConfig& cfg) : cfg_(cfg) {
  body_ = torch::nn::Sequential();
  int in = cfg.mics;
  for (int w : cfg.audio_widths) {
    body_->push_back(ConvAct2d(in, w));
    in = w;
  }
  register_module("body", body_);
}

torch::Tensor AudioEncoderImpl::forward(const torch::Tensor& mel) {
  if (mel.dim() != 4 || mel.size(1) != cfg_.mics || mel.size(2) != cfg_.n_mels ||
      mel.size(3) != cfg_.mel_frames) {
    throw ShapeError("audio encoder expects [B, " + std::to_string(cfg_.mics) + ", " +
                     std::to_string(cfg_.n_mels) + ", " + std::to_string(cfg_.mel_frames) +
                     "], got " + dims_text(mel));
  }
  torch::Tensor y = body_->forward(mel);
  const auto g = cfg_.audio_grid();
  if (y.size(2) != g[0] || y.size(3) != g[1]) throw ShapeError("audio map has shape " + dims_text(y));
  return y;
}

TemporalSqueezeImpl::TemporalSqueezeImpl(int in_channels, int extent, int embed)
    : in_(in_channels), extent_(extent) {
  conv = register_module("conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(
                                     in_channels, embed, {int64_t(extent), 1, 1})));
}

torch::Tensor TemporalSqueezeImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 5 || x.size(1) != in_ || x.size(2) != extent_) {
    throw ShapeError("temporal squeeze expects " + std::to_string(in_) + " channels over " +
                     std::to_string(extent_) + " steps, got " + dims_text(x));
  }
  return conv(x).squeeze(2);
}

}  // namespace havt
