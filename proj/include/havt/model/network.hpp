#pragma once

#include <map>
#include <optional>

#include <torch/torch.h>

#include "havt/model/config.hpp"
#include "havt/model/detection.hpp"
#include "havt/model/encoders.hpp"
#include "havt/model/fusion.hpp"

namespace havt {

// Intermediates kept when a forward pass is traced.
struct ForwardTrace {
  VisualPyramid pyramid;
  std::map<int, torch::Tensor> squeezed;  // stride -> [B, E, n, n]
  torch::Tensor audio_map;                // [B, E_a, rows, cols]
  TokenSequence tokens, encoded;          // havt fusion only
  torch::Tensor avce;                     // [B, E, g, g], havt fusion only
  std::map<int, torch::Tensor> fused;
  AttentionProbe self_attention, cross_attention;
};

struct NetworkOutput {
  HeadOutputs heads;
  std::optional<ForwardTrace> trace;
};

class HavtDetectorImpl : public torch::nn::Module {
 public:
  explicit HavtDetectorImpl(const ModelConfig& cfg);
  // video [B, 3, D, H, W], mel [B, M, F, T]
  NetworkOutput forward(const torch::Tensor& video, const torch::Tensor& mel, bool trace = false);
  const ModelConfig& config() const { return cfg_; }

  VisualEncoder visual{nullptr};
  AudioEncoder audio{nullptr};
  std::map<int, TemporalSqueeze> squeeze;
  Patchify patchify{nullptr};
  JointEncoder joint{nullptr};
  Spca spca{nullptr};
  PyramidFuse fuse{nullptr};
  std::map<int, DetectionHead> heads;

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(HavtDetector);

}  // namespace havt
