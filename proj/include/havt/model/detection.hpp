#pragma once

#include <map>
#include <vector>

#include <torch/torch.h>

#include "havt/model/config.hpp"
#include "havt/types.hpp"

namespace havt {

// Head channel layout: class logits, objectness, box parameters.
inline constexpr int kClsChannels = kNumClasses;
inline constexpr int kObjChannel = kClsChannels;
inline constexpr int kBoxChannel = kClsChannels + 1;
inline constexpr int kHeadChannels = kClsChannels + 1 + 4;

// stride -> [B, kHeadChannels, n, n]
using HeadOutputs = std::map<int, torch::Tensor>;

// Per-level reduction of [visual | context] back to E channels.
class PyramidFuseImpl : public torch::nn::Module {
 public:
  PyramidFuseImpl(const ModelConfig& cfg, int audio_channels);
  // visual [B, E, n, n]; context is the AVCE map [B, E, g, g] (havt), the
  // pooled audio vector [B, E_a] (concat) or undefined (none).
  torch::Tensor forward(int stride, const torch::Tensor& visual, const torch::Tensor& context);
  torch::nn::Conv2d reduce(int stride) const { return reduce_.at(stride); }

 private:
  FusionMode mode_;
  int embed_;
  std::map<int, torch::nn::Conv2d> reduce_;
};
TORCH_MODULE(PyramidFuse);

class DetectionHeadImpl : public torch::nn::Module {
 public:
  DetectionHeadImpl(int embed, HeadKind kind, double obj_prior);
  // [B, E, n, n] -> [B, kHeadChannels, n, n]
  torch::Tensor forward(const torch::Tensor& x);
  // Zero the last convolution(s) including biases.
  void zero_final();
  HeadKind kind() const { return kind_; }

  torch::nn::Sequential stem{nullptr};
  torch::nn::Sequential cls_branch{nullptr}, box_branch{nullptr};  // decoupled
  torch::nn::Sequential shared{nullptr};                            // coupled

 private:
  HeadKind kind_;
};
TORCH_MODULE(DetectionHead);

// Level stride for a ground-truth box among the enabled scales.
int assign_level(const Box& box, const ModelConfig& cfg);

struct LevelTargets {
  int stride = 0;
  torch::Tensor obj;  // [B, n, n] float {0,1}
  torch::Tensor cls;  // [B, n, n] int64, -1 where unassigned
  torch::Tensor box;  // [B, n, n, 4] float (cx, cy, w, h) pixels
};

struct Targets {
  std::map<int, LevelTargets> levels;
  int collisions = 0;  // gts dropped because a larger one claimed their cell
  int64_t positives() const;
};

Targets assign_targets(const std::vector<std::vector<GroundTruthBox>>& gts, const ModelConfig& cfg);

struct LossWeights {
  double conf = 1.0, cls = 1.0, reg = 5.0;
};
inline constexpr LossWeights kLossWeights{};

struct LossBreakdown {
  torch::Tensor l_conf, l_cls, l_bbox, l_total;  // scalars
  double conf() const { return l_conf.item<double>(); }
  double cls() const { return l_cls.item<double>(); }
  double bbox() const { return l_bbox.item<double>(); }
  double total() const { return l_total.item<double>(); }
};

torch::Tensor combine_loss(const torch::Tensor& l_conf, const torch::Tensor& l_cls,
                           const torch::Tensor& l_bbox, const LossWeights& w = kLossWeights);

// Complete-IoU between [P, 4] center-format boxes.
torch::Tensor ciou(const torch::Tensor& pred, const torch::Tensor& target);

// Differentiable decode of a whole level: [B, C, n, n] -> [B, n, n, 4].
torch::Tensor decode_level(const torch::Tensor& out, int stride, int image_size);

// BCE over all cells (cell mean), CE and 1 - CIoU over assigned cells
// (positive mean). Throws NumericError naming any non-finite term.
LossBreakdown compute_loss(const HeadOutputs& outs, const Targets& targets, int image_size,
                           const LossWeights& w = kLossWeights);

struct DecodeOptions {
  double score_threshold = 0.05;
  double nms_iou = 0.45;
};

// Detections of one image at one level, before NMS. out: [C, n, n].
std::vector<Detection> decode_boxes(const torch::Tensor& out, int stride, int image_size,
                                    double score_threshold = 0.05);

// Decode every level of every image and apply NMS.
std::vector<std::vector<Detection>> postprocess(const HeadOutputs& outs, int image_size,
                                                const DecodeOptions& opt = {});

}  // namespace havt
