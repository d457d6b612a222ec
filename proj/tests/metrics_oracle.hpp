#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "havt/rng.hpp"
#include "havt/types.hpp"

namespace havt::testing {

using Dets = std::vector<std::vector<Detection>>;
using Gts = std::vector<std::vector<GroundTruthBox>>;

// Brute-force reference: rank with an explicit O(n^2) selection instead of a
// sort, match each ranked detection by scanning every gt, then integrate the
// PR curve by taking, for every true positive, the best precision achieved
// at any rank at or after it.
inline double reference_ap(const Dets& dets, const Gts& gts, VehicleState cls, double t) {
  struct Item {
    double score;
    size_t im, k;
  };
  std::vector<Item> pool;
  for (size_t im = 0; im < dets.size(); ++im) {
    for (size_t k = 0; k < dets[im].size(); ++k) {
      if (dets[im][k].cls == cls) pool.push_back({dets[im][k].score, im, k});
    }
  }
  size_t n_gt = 0;
  for (const auto& g : gts) {
    for (const auto& b : g) n_gt += b.cls == cls;
  }
  if (n_gt == 0) return pool.empty() ? 1.0 : 0.0;

  std::vector<Item> ranked;
  std::vector<bool> taken(pool.size(), false);
  for (size_t r = 0; r < pool.size(); ++r) {
    size_t best = pool.size();
    for (size_t q = 0; q < pool.size(); ++q) {
      if (taken[q]) continue;
      if (best == pool.size()) {
        best = q;
        continue;
      }
      const auto& a = pool[q];
      const auto& b = pool[best];
      const bool before = a.score > b.score ||
                          (a.score == b.score && (a.im < b.im || (a.im == b.im && a.k < b.k)));
      if (before) best = q;
    }
    taken[best] = true;
    ranked.push_back(pool[best]);
  }

  std::vector<std::vector<bool>> used;
  for (const auto& g : gts) used.emplace_back(g.size(), false);
  std::vector<bool> is_tp;
  for (const auto& it : ranked) {
    double best_iou = -1;
    size_t best_g = 0;
    for (size_t g = 0; g < gts[it.im].size(); ++g) {
      const auto& gt = gts[it.im][g];
      if (gt.cls != cls || used[it.im][g]) continue;
      const auto& d = dets[it.im][it.k].box;
      const double iw = std::min(d.cx + d.w / 2, gt.box.cx + gt.box.w / 2) -
                        std::max(d.cx - d.w / 2, gt.box.cx - gt.box.w / 2);
      const double ih = std::min(d.cy + d.h / 2, gt.box.cy + gt.box.h / 2) -
                        std::max(d.cy - d.h / 2, gt.box.cy - gt.box.h / 2);
      const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
      const double o = inter / (d.w * d.h + gt.box.w * gt.box.h - inter);
      if (o > best_iou) {
        best_iou = o;
        best_g = g;
      }
    }
    const bool tp = best_iou >= t;
    if (tp) used[it.im][best_g] = true;
    is_tp.push_back(tp);
  }
  double ap = 0;
  for (size_t r = 0; r < ranked.size(); ++r) {
    if (!is_tp[r]) continue;
    double best_p = 0;
    size_t tp = 0;
    for (size_t q = 0; q < ranked.size(); ++q) {
      tp += is_tp[q];
      if (q >= r) best_p = std::max(best_p, double(tp) / double(q + 1));
    }
    ap += best_p / double(n_gt);
  }
  return ap;
}

// Up to max_n gts and detections over 1-4 images; most detections are
// jittered copies of a gt, scores are coarse so ties occur.
inline std::pair<Dets, Gts> random_instance(Rng& rng, int max_n) {
  const int images = static_cast<int>(rng.uniform_int(1, 4));
  Dets dets(static_cast<size_t>(images));
  Gts gts(static_cast<size_t>(images));
  const int n_gt = static_cast<int>(rng.uniform_int(0, max_n));
  const int n_det = static_cast<int>(rng.uniform_int(0, max_n));
  const auto rand_box = [&] {
    return Box{rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(5, 25), rng.uniform(5, 25)};
  };
  for (int k = 0; k < n_gt; ++k) {
    gts[rng.below(static_cast<uint64_t>(images))].push_back(
        {rand_box(), state_from_index(static_cast<int>(rng.below(3)))});
  }
  for (int k = 0; k < n_det; ++k) {
    const size_t im = rng.below(static_cast<uint64_t>(images));
    Detection d;
    if (!gts[im].empty() && rng.uniform() < 0.6) {
      const auto& g = gts[im][rng.below(gts[im].size())];
      d.box = {g.box.cx + rng.uniform(-4, 4), g.box.cy + rng.uniform(-4, 4),
               g.box.w * rng.uniform(0.7, 1.3), g.box.h * rng.uniform(0.7, 1.3)};
      d.cls = rng.uniform() < 0.8 ? g.cls : state_from_index(static_cast<int>(rng.below(3)));
    } else {
      d.box = rand_box();
      d.cls = state_from_index(static_cast<int>(rng.below(3)));
    }
    // Coarse scores so ties actually occur.
    d.score = static_cast<double>(rng.below(20)) / 20.0;
    dets[im].push_back(d);
  }
  return {dets, gts};
}

}  // namespace havt::testing
