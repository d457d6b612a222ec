#include "havt/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "havt/dataset.hpp"

namespace havt {

namespace fs = std::filesystem;

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

ApResult average_precision(const std::vector<std::vector<Detection>>& dets,
                           const std::vector<std::vector<GroundTruthBox>>& gts,
                           VehicleState cls, double iou_threshold) {
  if (dets.size() != gts.size()) {
    throw ValidationError("average_precision: " + std::to_string(dets.size()) +
                          " detection lists for " + std::to_string(gts.size()) + " images");
  }
  struct Ranked {
    double score;
    size_t image;
    size_t index;
  };
  std::vector<Ranked> ranked;
  for (size_t im = 0; im < dets.size(); ++im) {
    for (size_t k = 0; k < dets[im].size(); ++k) {
      if (dets[im][k].cls == cls) ranked.push_back({dets[im][k].score, im, k});
    }
  }
  size_t n_gt = 0;
  for (const auto& g : gts) {
    n_gt += static_cast<size_t>(std::count_if(
        g.begin(), g.end(), [&](const GroundTruthBox& b) { return b.cls == cls; }));
  }
  if (n_gt == 0) return {ranked.empty() ? 1.0 : 0.0, true};

  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });

  std::vector<std::vector<char>> used(gts.size());
  for (size_t im = 0; im < gts.size(); ++im) used[im].assign(gts[im].size(), 0);

  std::vector<double> precision(ranked.size()), recall(ranked.size());
  size_t tp = 0;
  for (size_t r = 0; r < ranked.size(); ++r) {
    const auto& d = dets[ranked[r].image][ranked[r].index];
    const auto& g = gts[ranked[r].image];
    double best = -1;
    size_t best_k = 0;
    for (size_t k = 0; k < g.size(); ++k) {
      if (g[k].cls != cls || used[ranked[r].image][k]) continue;
      const double o = iou(d.box, g[k].box);
      if (o > best) {
        best = o;
        best_k = k;
      }
    }
    if (best >= iou_threshold) {
      used[ranked[r].image][best_k] = 1;
      ++tp;
    }
    precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    recall[r] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  // Precision envelope, then area under the stepwise PR curve.
  for (size_t r = ranked.size(); r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);
  double ap = 0, prev_recall = 0;
  for (size_t r = 0; r < ranked.size(); ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return {ap, false};
}

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

double mean_ap(const std::vector<std::vector<Detection>>& dets,
               const std::vector<std::vector<GroundTruthBox>>& gts, double t) {
  double s = 0;
  for (auto c : kAllStates) s += average_precision(dets, gts, c, t).ap;
  return s / kNumClasses;
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string EvalReport::to_text() const {
  std::string s;
  for (size_t k = 0; k < 3; ++k) {
    s += "AP(" + std::string(state_short(kAllStates[k])) + ")=" + percent(ap_per_class[k]) + '\n';
  }
  s += "mAP@0.5=" + percent(map_50) + '\n';
  s += "mAP@0.75=" + percent(map_75) + '\n';
  s += "mAP@Avg=" + percent(map_avg) + '\n';
  std::string vac;
  for (size_t k = 0; k < 3; ++k) {
    if (vacuous[k]) vac += (vac.empty() ? "" : ",") + std::string(state_short(kAllStates[k]));
  }
  if (!vac.empty()) s += "vacuous=" + vac + '\n';
  return s;
}

EvalReport evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<std::vector<GroundTruthBox>>& gts,
                    const std::vector<double>& thresholds) {
  EvalReport r;
  double sum = 0;
  for (size_t k = 0; k < 3; ++k) {
    const auto res = average_precision(dets, gts, kAllStates[k], 0.5);
    r.ap_per_class[k] = res.ap;
    r.vacuous[k] = res.vacuous;
    sum += res.ap;
  }
  r.map_50 = sum / kNumClasses;
  r.map_75 = mean_ap(dets, gts, 0.75);
  if (thresholds.empty()) throw ConfigError("evaluate: empty IoU threshold list");
  double acc = 0;
  for (double t : thresholds) acc += t == 0.5 ? r.map_50 : mean_ap(dets, gts, t);
  r.map_avg = acc / static_cast<double>(thresholds.size());
  return r;
}

void write_detections(const std::map<std::string, std::vector<Detection>>& dets,
                      const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& [id, list] : dets) {
    for (const auto& d : list) {
      out << id << ' ' << static_cast<int>(d.cls) << ' ' << fmt_double(d.score) << ' '
          << fmt_double(d.box.cx) << ' ' << fmt_double(d.box.cy) << ' ' << fmt_double(d.box.w)
          << ' ' << fmt_double(d.box.h) << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + file.string());
}

std::map<std::string, std::vector<Detection>> read_detections(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::map<std::string, std::vector<Detection>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string id;
    int cls = -1;
    Detection d;
    if (!(ls >> id >> cls >> d.score >> d.box.cx >> d.box.cy >> d.box.w >> d.box.h)) {
      throw IoError(file.string() + ":" + std::to_string(lineno) +
                    ": expected 'sample_id cls score cx cy w h'");
    }
    d.cls = state_from_index(cls);
    out[id].push_back(d);
  }
  return out;
}

EvalReport evaluate(const fs::path& det_file, const fs::path& gt_split_dir,
                    const std::vector<double>& thresholds) {
  const auto ids = list_samples(gt_split_dir);
  auto by_id = read_detections(det_file);
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GroundTruthBox>> gts;
  for (const auto& id : ids) {
    gts.push_back(read_boxes(gt_split_dir / id / "boxes.txt"));
    auto it = by_id.find(id);
    if (it != by_id.end()) {
      dets.push_back(std::move(it->second));
      by_id.erase(it);
    } else {
      dets.emplace_back();
    }
  }
  if (!by_id.empty()) {
    throw ValidationError("detections reference sample '" + by_id.begin()->first +
                          "' which is not in " + gt_split_dir.string());
  }
  return evaluate(dets, gts, thresholds);
}

void write_report(const EvalReport& r, const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << r.to_text();
}

std::map<std::string, std::string> read_report(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace havt
