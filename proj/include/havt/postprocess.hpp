#pragma once

#include <vector>

#include "havt/types.hpp"

namespace havt {

// Anchor-free cell parameterization shared by training targets and decoding:
//   cx = (i + sigmoid(tx)) * stride      cy = (j + sigmoid(ty)) * stride
//   w  = exp(tw) * stride * s0           h  = exp(th) * stride * s0
inline constexpr double kBaseScale = 4.0;

struct BoxParams {
  double tx = 0, ty = 0, tw = 0, th = 0;
};

// Column i, row j.
Box decode_cell(const BoxParams& p, int i, int j, double stride,
                double base_scale = kBaseScale);
BoxParams encode_cell(const Box& b, int i, int j, double stride,
                      double base_scale = kBaseScale);

// Class-wise greedy suppression in descending score order; equal scores keep
// input order. Boxes under score_threshold are dropped first.
std::vector<Detection> nms(const std::vector<Detection>& dets,
                           double iou_threshold = 0.45,
                           double score_threshold = 0.05);

}  // namespace havt
