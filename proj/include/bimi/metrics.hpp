#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bimi/domain.hpp"

namespace bimi {

/// Rows are ground truth, columns are predictions, both in Category order.
using ConfusionMatrix = std::array<std::array<std::size_t, kNumCategories>, kNumCategories>;

/// Throws InvalidArgument when the inputs are empty or differ in length.
ConfusionMatrix confusion_matrix(std::span<const Category> preds, std::span<const Category> gts);

double accuracy(std::span<const Category> preds, std::span<const Category> gts);

/// Unweighted mean of per-class F1 over classes that occur in either
/// predictions or ground truth. A class with a zero denominator scores 0.
double macro_f1(std::span<const Category> preds, std::span<const Category> gts);
double macro_f1(const ConfusionMatrix& confusion);

struct MeanIou {
  double value = 1.0;
  bool vacuous = true;  // no sample had ground-truth boxes
  std::size_t count = 0;
};

/// Mean region IoU over samples whose ground truth has at least one box.
MeanIou mean_iou(std::span<const std::vector<BBox>> preds, std::span<const std::vector<BBox>> gts);

/// Unigram F1 over whitespace tokens after ASCII case folding, with
/// clipped counts. Both empty gives 1, exactly one empty gives 0.
double token_f1(std::string_view candidate, std::string_view reference);

/// Pluggable explanation scorer.
class ExplanationScorer {
 public:
  virtual ~ExplanationScorer() = default;
  virtual std::string_view name() const = 0;
  virtual double score(std::string_view candidate, std::string_view reference) const = 0;
};

class TokenF1Scorer final : public ExplanationScorer {
 public:
  std::string_view name() const override { return "token_f1"; }
  double score(std::string_view candidate, std::string_view reference) const override {
    return token_f1(candidate, reference);
  }
};

struct EvalReport {
  std::size_t n = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mean_iou = 1.0;
  bool iou_vacuous = true;
  ConfusionMatrix confusion{};
  std::optional<double> explanation_score;
  // Reward summary over the same predictions.
  double format_rate = 0.0;
  double mean_reward = 0.0;
  double mean_cls_reward = 0.0;
  double mean_loc_reward = 0.0;

  /// "key=value" lines in a fixed order.
  std::string to_key_value() const;
  /// Single-line JSON record.
  std::string to_json() const;
  /// Confusion table with the six label strings as headers.
  std::string confusion_table() const;
};

struct EvalInputs {
  std::span<const Category> pred_categories;
  std::span<const Category> gt_categories;
  std::span<const std::vector<BBox>> pred_boxes;
  std::span<const std::vector<BBox>> gt_boxes;
  /// Candidate and reference explanations; scored only where a reference exists.
  std::span<const std::string> explanations;
  std::span<const std::optional<std::string>> explanation_refs;
};

EvalReport build_report(const EvalInputs& inputs, const ExplanationScorer& scorer);

}  // namespace bimi
