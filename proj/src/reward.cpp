#include "bimi/reward.hpp"

#include <algorithm>
#include <variant>
#include <vector>

#include "bimi/parser.hpp"

namespace bimi {

namespace {

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

bool covers(std::span<const BBox> boxes, double x_lo, double x_hi, double y_lo, double y_hi) {
  return std::any_of(boxes.begin(), boxes.end(), [&](const BBox& b) {
    return b.x_min <= x_lo && x_hi <= b.x_max && b.y_min <= y_lo && y_hi <= b.y_max;
  });
}

// Area of the cells of the grid spanned by `grid_boxes` for which
// `covered(x_lo, x_hi, y_lo, y_hi)` holds.
template <typename Pred>
double sweep_area(std::span<const BBox> grid_boxes, Pred covered) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& b : grid_boxes) {
    xs.push_back(b.x_min);
    xs.push_back(b.x_max);
    ys.push_back(b.y_min);
    ys.push_back(b.y_max);
  }
  xs = sorted_unique(std::move(xs));
  ys = sorted_unique(std::move(ys));
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      if (covered(xs[i], xs[i + 1], ys[j], ys[j + 1])) {
        area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
      }
    }
  }
  return area;
}

}  // namespace

double reward_format(std::string_view text) { return check_format(text).is_valid ? 1.0 : 0.0; }

double reward_cls(Category predicted, Category truth) { return predicted == truth ? 1.0 : 0.0; }

double union_area(std::span<const BBox> boxes) {
  return sweep_area(boxes, [&](double x0, double x1, double y0, double y1) {
    return covers(boxes, x0, x1, y0, y1);
  });
}

double region_iou(std::span<const BBox> pred, std::span<const BBox> gt) {
  if (pred.empty() && gt.empty()) return 1.0;
  if (pred.empty() || gt.empty()) return 0.0;

  std::vector<BBox> joint(pred.begin(), pred.end());
  joint.insert(joint.end(), gt.begin(), gt.end());
  const double inter = sweep_area(std::span<const BBox>(joint), [&](double x0, double x1, double y0, double y1) {
    return covers(pred, x0, x1, y0, y1) && covers(gt, x0, x1, y0, y1);
  });
  // Each union is measured on its own grid so a single box is one cell and
  // the single-rectangle case reduces to the closed form.
  const double uni = union_area(pred) + union_area(gt) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

RewardBreakdown reward_total(std::string_view text, const Sample& truth) {
  RewardBreakdown r;
  const ParseOutcome outcome = parse_output(text);
  if (const auto* out = std::get_if<StructuredOutput>(&outcome)) {
    r.format = 1.0;
    r.cls = reward_cls(out->category, truth.category);
    r.loc = region_iou(out->boxes, truth.gt_boxes);
  }
  r.total = r.format + r.cls + r.loc;
  return r;
}

}  // namespace bimi
