#include "havt/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "havt/metrics.hpp"

namespace havt {

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }
}  // namespace

Box decode_cell(const BoxParams& p, int i, int j, double stride, double base_scale) {
  return {(i + sigmoid(p.tx)) * stride, (j + sigmoid(p.ty)) * stride,
          std::exp(p.tw) * stride * base_scale, std::exp(p.th) * stride * base_scale};
}

BoxParams encode_cell(const Box& b, int i, int j, double stride, double base_scale) {
  const double fx = b.cx / stride - i;
  const double fy = b.cy / stride - j;
  if (!(fx > 0 && fx < 1 && fy > 0 && fy < 1)) {
    throw ValidationError("encode_cell: box center is not strictly inside cell (" +
                          std::to_string(i) + ", " + std::to_string(j) + ")");
  }
  if (!(b.w > 0 && b.h > 0)) throw ValidationError("encode_cell: w and h must be positive");
  return {logit(fx), logit(fy), std::log(b.w / (stride * base_scale)),
          std::log(b.h / (stride * base_scale))};
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold,
                           double score_threshold) {
  std::vector<size_t> order;
  for (size_t k = 0; k < dets.size(); ++k) {
    if (dets[k].score >= score_threshold) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });
  std::vector<Detection> kept;
  for (size_t k : order) {
    const auto& d = dets[k];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& o) {
      return o.cls == d.cls && iou(o.box, d.box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace havt
