#include "havt/model/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "havt/errors.hpp"
#include "havt/postprocess.hpp"
#include "havt/tensor.hpp"

namespace havt {
namespace {

torch::nn::Conv2d conv(int in, int out, int k) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).padding(k / 2));
}

torch::nn::Conv2dImpl& last_conv(torch::nn::Sequential& s) {
  return *s->ptr(s->size() - 1)->as<torch::nn::Conv2dImpl>();
}

}  // namespace

PyramidFuseImpl::PyramidFuseImpl(const ModelConfig& cfg, int audio_channels)
    : mode_(cfg.fusion), embed_(cfg.embed) {
  int in = cfg.embed;
  if (mode_ == FusionMode::kHavt) in = 2 * cfg.embed;
  if (mode_ == FusionMode::kConcat) in = cfg.embed + audio_channels;
  for (int s : kStrides) {
    if (!cfg.scale_enabled(s)) continue;
    reduce_.emplace(s, register_module("reduce" + std::to_string(s), conv(in, cfg.embed, 1)));
  }
}

torch::Tensor PyramidFuseImpl::forward(int stride, const torch::Tensor& visual, const torch::Tensor& context) {
  auto it = reduce_.find(stride);
  if (it == reduce_.end()) throw ShapeError("pyramid level " + std::to_string(stride) + " is not enabled");
  if (visual.dim() != 4 || visual.size(1) != embed_) {
    throw ShapeError("pyramid fuse: visual map has shape " + shape_to_string(visual.sizes().vec()));
  }
  const int64_t b = visual.size(0), h = visual.size(2), w = visual.size(3);
  torch::Tensor x = visual;
  if (mode_ == FusionMode::kHavt) {
    if (context.dim() != 4 || context.size(0) != b || context.size(1) != embed_) {
      throw ShapeError("pyramid fuse: AVCE map has shape " + shape_to_string(context.sizes().vec()));
    }
    torch::Tensor up = context;
    if (context.size(2) != h || context.size(3) != w) {
      namespace F = torch::nn::functional;
      up = F::interpolate(context, F::InterpolateFuncOptions()
                                       .size(std::vector<int64_t>{h, w})
                                       .mode(torch::kBilinear)
                                       .align_corners(false));
    }
    x = torch::cat({visual, up}, 1);
  } else if (mode_ == FusionMode::kConcat) {
    if (context.dim() != 2 || context.size(0) != b) {
      throw ShapeError("pyramid fuse: pooled audio has shape " + shape_to_string(context.sizes().vec()));
    }
    x = torch::cat({visual, context.view({b, -1, 1, 1}).expand({b, context.size(1), h, w})}, 1);
  }
  return it->second(x);
}

DetectionHeadImpl::DetectionHeadImpl(int embed, HeadKind kind, double obj_prior) : kind_(kind) {
  stem = register_module("stem", torch::nn::Sequential(conv(embed, embed, 1), torch::nn::SiLU()));
  const double bias = std::log(obj_prior / (1 - obj_prior));
  torch::NoGradGuard ng;
  if (kind == HeadKind::kDecoupled) {
    cls_branch = register_module(
        "cls_branch", torch::nn::Sequential(conv(embed, embed, 3), torch::nn::SiLU(), conv(embed, kClsChannels, 1)));
    box_branch = register_module(
        "box_branch", torch::nn::Sequential(conv(embed, embed, 3), torch::nn::SiLU(), conv(embed, 5, 1)));
    last_conv(box_branch).bias[0].fill_(bias);
  } else {
    shared = register_module(
        "shared", torch::nn::Sequential(conv(embed, embed, 3), torch::nn::SiLU(), conv(embed, kHeadChannels, 1)));
    last_conv(shared).bias[kObjChannel].fill_(bias);
  }
}

torch::Tensor DetectionHeadImpl::forward(const torch::Tensor& x) {
  torch::Tensor s = stem->forward(x);
  torch::Tensor y = kind_ == HeadKind::kDecoupled
                        ? torch::cat({cls_branch->forward(s), box_branch->forward(s)}, 1)
                        : shared->forward(s);
  if (y.size(1) != kHeadChannels) throw ShapeError("head produced " + std::to_string(y.size(1)) + " channels");
  return y;
}

void DetectionHeadImpl::zero_final() {
  torch::NoGradGuard ng;
  for (auto* s : {&cls_branch, &box_branch, &shared}) {
    if (!s->is_empty()) {
      last_conv(*s).weight.zero_();
      last_conv(*s).bias.zero_();
    }
  }
}

int assign_level(const Box& box, const ModelConfig& cfg) {
  const auto bands = cfg.scaled_bands();
  const double size = std::max(box.w, box.h);
  const int natural = size < bands[0] ? 8 : size < bands[1] ? 16 : 32;
  if (cfg.scale_enabled(natural)) return natural;
  int best = 0;
  double best_gap = 1e9;
  for (int s : kStrides) {
    if (!cfg.scale_enabled(s)) continue;
    const double gap = std::abs(std::log2(double(s) / natural));
    if (gap <= best_gap) {  // ties go to the coarser level
      best_gap = gap;
      best = s;
    }
  }
  return best;
}

int64_t Targets::positives() const {
  int64_t n = 0;
  for (const auto& [s, t] : levels) n += t.obj.sum().item<int64_t>();
  return n;
}

Targets assign_targets(const std::vector<std::vector<GroundTruthBox>>& gts, const ModelConfig& cfg) {
  Targets t;
  const int64_t b = static_cast<int64_t>(gts.size());
  for (int s : kStrides) {
    if (!cfg.scale_enabled(s)) continue;
    const int64_t n = cfg.grid(s);
    t.levels[s] = {s, torch::zeros({b, n, n}), torch::full({b, n, n}, -1, torch::kInt64),
                   torch::zeros({b, n, n, 4})};
  }
  for (int64_t img = 0; img < b; ++img) {
    for (const auto& gt : gts[img]) {
      const int s = assign_level(gt.box, cfg);
      auto& lt = t.levels.at(s);
      const int64_t n = cfg.grid(s);
      const int64_t i = std::clamp<int64_t>(static_cast<int64_t>(std::floor(gt.box.cx / s)), 0, n - 1);
      const int64_t j = std::clamp<int64_t>(static_cast<int64_t>(std::floor(gt.box.cy / s)), 0, n - 1);
      auto obj = lt.obj.accessor<float, 3>();
      auto cls = lt.cls.accessor<int64_t, 3>();
      auto box = lt.box.accessor<float, 4>();
      if (obj[img][j][i] > 0) {
        ++t.collisions;
        if (gt.box.area() <= double(box[img][j][i][2]) * box[img][j][i][3]) continue;
      }
      obj[img][j][i] = 1;
      cls[img][j][i] = static_cast<int64_t>(gt.cls);
      box[img][j][i][0] = static_cast<float>(gt.box.cx);
      box[img][j][i][1] = static_cast<float>(gt.box.cy);
      box[img][j][i][2] = static_cast<float>(gt.box.w);
      box[img][j][i][3] = static_cast<float>(gt.box.h);
    }
  }
  return t;
}

torch::Tensor combine_loss(const torch::Tensor& l_conf, const torch::Tensor& l_cls, const torch::Tensor& l_bbox,
                           const LossWeights& w) {
  return w.conf * l_conf + w.cls * l_cls + w.reg * l_bbox;
}

torch::Tensor ciou(const torch::Tensor& pred, const torch::Tensor& target) {
  constexpr double eps = 1e-9;
  auto col = [](const torch::Tensor& t, int k) { return t.select(1, k); };
  const torch::Tensor pw = col(pred, 2), ph = col(pred, 3), tw = col(target, 2), th = col(target, 3);
  const torch::Tensor px0 = col(pred, 0) - pw / 2, px1 = col(pred, 0) + pw / 2;
  const torch::Tensor py0 = col(pred, 1) - ph / 2, py1 = col(pred, 1) + ph / 2;
  const torch::Tensor tx0 = col(target, 0) - tw / 2, tx1 = col(target, 0) + tw / 2;
  const torch::Tensor ty0 = col(target, 1) - th / 2, ty1 = col(target, 1) + th / 2;
  const torch::Tensor iw = (torch::min(px1, tx1) - torch::max(px0, tx0)).clamp_min(0);
  const torch::Tensor ih = (torch::min(py1, ty1) - torch::max(py0, ty0)).clamp_min(0);
  const torch::Tensor inter = iw * ih;
  const torch::Tensor iou = inter / (pw * ph + tw * th - inter + eps);
  const torch::Tensor cw = torch::max(px1, tx1) - torch::min(px0, tx0);
  const torch::Tensor ch = torch::max(py1, ty1) - torch::min(py0, ty0);
  const torch::Tensor c2 = cw * cw + ch * ch + eps;
  const torch::Tensor rho2 = (col(pred, 0) - col(target, 0)).square() + (col(pred, 1) - col(target, 1)).square();
  const double k = 4.0 / (std::numbers::pi * std::numbers::pi);
  const torch::Tensor v = k * (torch::atan(tw / th) - torch::atan(pw / ph)).square();
  const torch::Tensor alpha = v / (1 - iou + v + eps);
  return iou - rho2 / c2 - alpha * v;
}

torch::Tensor decode_level(const torch::Tensor& out, int stride, int image_size) {
  const int64_t n = out.size(2);
  const double scale = stride * kBaseScale;
  const auto opt = out.options();
  const torch::Tensor cols = torch::arange(n, opt).view({1, 1, n});
  const torch::Tensor rows = torch::arange(n, opt).view({1, n, 1});
  const double lo = std::log(0.5 / scale), hi = std::log(image_size / scale);
  const torch::Tensor cx = (cols + torch::sigmoid(out.select(1, kBoxChannel))) * stride;
  const torch::Tensor cy = (rows + torch::sigmoid(out.select(1, kBoxChannel + 1))) * stride;
  const torch::Tensor w = torch::exp(out.select(1, kBoxChannel + 2).clamp(lo, hi)) * scale;
  const torch::Tensor h = torch::exp(out.select(1, kBoxChannel + 3).clamp(lo, hi)) * scale;
  return torch::stack({cx, cy, w, h}, -1);
}

LossBreakdown compute_loss(const HeadOutputs& outs, const Targets& targets, int image_size, const LossWeights& w) {
  if (targets.levels.empty()) throw ShapeError("compute_loss: no target levels");
  const auto opt = outs.begin()->second.options();
  torch::Tensor conf_sum = torch::zeros({}, opt), cls_sum = torch::zeros({}, opt), bbox_sum = torch::zeros({}, opt);
  int64_t npos = 0;
  for (const auto& [stride, lt] : targets.levels) {
    auto it = outs.find(stride);
    if (it == outs.end()) throw ShapeError("compute_loss: no head output for level " + std::to_string(stride));
    const torch::Tensor& out = it->second;
    if (out.dim() != 4 || out.size(1) != kHeadChannels || out.size(0) != lt.obj.size(0) ||
        out.size(2) != lt.obj.size(1) || out.size(3) != lt.obj.size(2)) {
      throw ShapeError("compute_loss: head output " + shape_to_string(out.sizes().vec()) +
                       " does not match targets " + shape_to_string(lt.obj.sizes().vec()));
    }
    conf_sum = conf_sum + torch::binary_cross_entropy_with_logits(
                              out.select(1, kObjChannel), lt.obj.to(out.scalar_type()), {}, {},
                              at::Reduction::Sum);
    const torch::Tensor mask = lt.cls >= 0;
    const int64_t p = mask.sum().item<int64_t>();
    if (p == 0) continue;
    const torch::Tensor logits = out.slice(1, 0, kClsChannels).permute({0, 2, 3, 1}).index({mask});
    cls_sum = cls_sum + torch::nn::functional::cross_entropy(
                            logits, lt.cls.index({mask}),
                            torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kSum));
    const torch::Tensor pred = decode_level(out, stride, image_size).index({mask});
    bbox_sum = bbox_sum + (1 - ciou(pred, lt.box.to(out.scalar_type()).index({mask}))).sum();
    npos += p;
  }
  LossBreakdown l;
  l.l_conf = conf_sum / double(std::max<int64_t>(npos, 1));
  l.l_cls = npos > 0 ? cls_sum / double(npos) : cls_sum;
  l.l_bbox = npos > 0 ? bbox_sum / double(npos) : bbox_sum;
  for (auto [name, t] : {std::pair{"l_conf", &l.l_conf}, std::pair{"l_cls", &l.l_cls},
                         std::pair{"l_bbox", &l.l_bbox}}) {
    const double v = t->item<double>();
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "loss term " << name << " is not finite (" << v << "); l_conf=" << l.l_conf.item<double>()
          << " l_cls=" << l.l_cls.item<double>() << " l_bbox=" << l.l_bbox.item<double>()
          << " positives=" << npos;
      throw NumericError(msg.str());
    }
  }
  l.l_total = combine_loss(l.l_conf, l.l_cls, l.l_bbox, w);
  return l;
}

std::vector<Detection> decode_boxes(const torch::Tensor& out, int stride, int image_size, double score_threshold) {
  const torch::Tensor o = out.detach().to(torch::kCPU, torch::kDouble).contiguous();
  if (o.dim() != 3 || o.size(0) != kHeadChannels) {
    throw ShapeError("decode_boxes expects [" + std::to_string(kHeadChannels) + ", n, n], got " +
                     shape_to_string(o.sizes().vec()));
  }
  const auto a = o.accessor<double, 3>();
  const double img = image_size;
  std::vector<Detection> dets;
  for (int64_t j = 0; j < o.size(1); ++j) {
    for (int64_t i = 0; i < o.size(2); ++i) {
      double mx = a[0][j][i];
      int best = 0;
      for (int c = 1; c < kClsChannels; ++c) {
        if (a[c][j][i] > mx) {
          mx = a[c][j][i];
          best = c;
        }
      }
      double z = 0;
      for (int c = 0; c < kClsChannels; ++c) z += std::exp(a[c][j][i] - mx);
      const double obj = 1.0 / (1.0 + std::exp(-a[kObjChannel][j][i]));
      const double score = obj / z;
      if (score < score_threshold) continue;
      const BoxParams p{a[kBoxChannel][j][i], a[kBoxChannel + 1][j][i], a[kBoxChannel + 2][j][i],
                        a[kBoxChannel + 3][j][i]};
      Box box = decode_cell(p, static_cast<int>(i), static_cast<int>(j), stride);
      box.w = std::min(box.w, img);
      box.h = std::min(box.h, img);
      box = clamp_box(box, img, img);
      if (!(box.w > 0) || !(box.h > 0)) continue;
      dets.push_back({box, state_from_index(best), score});
    }
  }
  return dets;
}

std::vector<std::vector<Detection>> postprocess(const HeadOutputs& outs, int image_size, const DecodeOptions& opt) {
  if (outs.empty()) return {};
  const int64_t b = outs.begin()->second.size(0);
  std::vector<std::vector<Detection>> result(static_cast<size_t>(b));
  for (int64_t img = 0; img < b; ++img) {
    std::vector<Detection> all;
    for (const auto& [stride, out] : outs) {
      auto d = decode_boxes(out[img], stride, image_size, opt.score_threshold);
      all.insert(all.end(), d.begin(), d.end());
    }
    result[static_cast<size_t>(img)] = nms(all, opt.nms_iou, opt.score_threshold);
  }
  return result;
}

}  // namespace havt
