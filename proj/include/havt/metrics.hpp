#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "havt/types.hpp"

namespace havt {

double iou(const Box& a, const Box& b);

// Detections and ground truth for one image, keyed by image position in the
// evaluation set.
struct ImageDetections {
  std::vector<Detection> dets;
};

struct ApResult {
  double ap = 0;
  // Set when the class has no ground truth: AP is 1 with no detections
  // either, 0 otherwise.
  bool vacuous = false;
};

// All-points interpolated AP for one class. Detections are ranked by score
// (ties: lower image index, then lower detection index); each is matched to
// the highest-IoU unmatched gt of its image with IoU >= iou_threshold.
ApResult average_precision(const std::vector<std::vector<Detection>>& dets,
                           const std::vector<std::vector<GroundTruthBox>>& gts,
                           VehicleState cls, double iou_threshold);

std::vector<double> coco_thresholds();  // 0.50:0.05:0.95

struct EvalReport {
  std::array<double, 3> ap_per_class{};  // at IoU 0.5, order M, I, Eoff
  std::array<bool, 3> vacuous{};
  double map_50 = 0;
  double map_75 = 0;
  double map_avg = 0;

  // "metric=value" lines, values x100 with two decimals.
  std::string to_text() const;
};

EvalReport evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<std::vector<GroundTruthBox>>& gts,
                    const std::vector<double>& thresholds = coco_thresholds());

// Detection dump: one "sample_id cls score cx cy w h" line per detection.
void write_detections(const std::map<std::string, std::vector<Detection>>& dets,
                      const std::filesystem::path& file);
std::map<std::string, std::vector<Detection>> read_detections(
    const std::filesystem::path& file);

// Evaluates a detection dump against a dataset split directory. Samples
// without detections count as empty.
EvalReport evaluate(const std::filesystem::path& det_file,
                    const std::filesystem::path& gt_split_dir,
                    const std::vector<double>& thresholds = coco_thresholds());

void write_report(const EvalReport& r, const std::filesystem::path& file);
std::map<std::string, std::string> read_report(const std::filesystem::path& file);

}  // namespace havt
