#pragma once

// Independent reference computations used only by tests. Nothing here
// calls into the code paths these oracles check.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "bimi/domain.hpp"

namespace bimi::oracle {

inline bool inside_any(std::span<const BBox> boxes, double x, double y) {
  for (const auto& b : boxes) {
    if (b.x_min <= x && x < b.x_max && b.y_min <= y && y < b.y_max) return true;
  }
  return false;
}

/// Monte-Carlo IoU of two box unions from uniform points over the joint
/// bounding box.
inline double raster_iou(std::span<const BBox> a, std::span<const BBox> b, std::size_t points,
                         std::uint64_t seed) {
  double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
  for (auto set : {a, b}) {
    for (const auto& box : set) {
      x0 = std::min(x0, box.x_min);
      y0 = std::min(y0, box.y_min);
      x1 = std::max(x1, box.x_max);
      y1 = std::max(y1, box.y_max);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = ux(rng), y = uy(rng);
    const bool in_a = inside_any(a, x, y), in_b = inside_any(b, x, y);
    inter += (in_a && in_b) ? 1 : 0;
    uni += (in_a || in_b) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Textbook single-rectangle IoU.
inline double rect_iou(const BBox& a, const BBox& b) {
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

/// Per-class F1 averaged over classes present in either list, counted
/// directly from the label lists.
inline double brute_macro_f1(std::span<const Category> preds, std::span<const Category> gts) {
  double sum = 0.0;
  int present = 0;
  for (Category c : kAllCategories) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c && gts[i] == c) ++tp;
      if (preds[i] == c && gts[i] != c) ++fp;
      if (preds[i] != c && gts[i] == c) ++fn;
    }
    if (tp + fp + fn == 0) continue;
    ++present;
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return present ? sum / present : 0.0;
}

inline double brute_accuracy(std::span<const Category> preds, std::span<const Category> gts) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == gts[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

/// Random evaluation set with at most one box per side, so that per-sample
/// IoU can be recomputed from the rectangle formula.
struct EvalSet {
  std::vector<Category> preds, gts;
  std::vector<std::vector<BBox>> pred_boxes, gt_boxes;
};

inline EvalSet random_eval_set(std::mt19937_64& rng, std::size_t n) {
  EvalSet set;
  std::uniform_real_distribution<double> pos(0.0, 70.0), ext(1.0, 30.0);
  auto box = [&] {
    const double x = pos(rng), y = pos(rng);
    return BBox{x, y, x + ext(rng), y + ext(rng)};
  };
  // Skewed class draws so that some classes are often absent.
  const std::size_t classes = 1 + rng() % kNumCategories;
  for (std::size_t i = 0; i < n; ++i) {
    const Category g = kAllCategories[rng() % classes];
    const Category p = rng() % 3 == 0 ? kAllCategories[rng() % kNumCategories] : g;
    set.gts.push_back(g);
    set.preds.push_back(p);
    std::vector<BBox> gb, pb;
    if (category_has_region(g)) gb.push_back(box());
    if (category_has_region(p)) pb.push_back(!gb.empty() && rng() % 4 == 0 ? gb[0] : box());
    set.gt_boxes.push_back(gb);
    set.pred_boxes.push_back(pb);
  }
  return set;
}

/// Mean IoU over samples with a ground-truth box, 1.0 when there are none.
inline double brute_mean_iou(const EvalSet& set) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < set.gts.size(); ++i) {
    if (set.gt_boxes[i].empty()) continue;
    ++count;
    if (!set.pred_boxes[i].empty()) sum += rect_iou(set.pred_boxes[i][0], set.gt_boxes[i][0]);
  }
  return count == 0 ? 1.0 : sum / static_cast<double>(count);
}

}  // namespace bimi::oracle
