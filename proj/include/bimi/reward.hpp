#pragma once

#include <span>
#include <string_view>

#include "bimi/domain.hpp"

namespace bimi {

/// Per-response reward components. All three terms carry unit weight.
struct RewardBreakdown {
  double format = 0.0;
  double cls = 0.0;
  double loc = 0.0;
  double total = 0.0;
};

/// 1 when the text passes check_format, else 0.
double reward_format(std::string_view text);

double reward_cls(Category predicted, Category truth);

/// IoU of the union of `pred` boxes against the union of `gt` boxes, from
/// exact rectangle areas. Empty vs empty is 1, empty vs non-empty is 0.
double region_iou(std::span<const BBox> pred, std::span<const BBox> gt);

/// Area of the union of `boxes` by coordinate compression.
double union_area(std::span<const BBox> boxes);

/// Composite reward. Classification and localization are only credited
/// when the text parses.
RewardBreakdown reward_total(std::string_view text, const Sample& truth);

}  // namespace bimi
