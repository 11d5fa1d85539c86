#include "bimi/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <sstream>

#include "bimi/error.hpp"
#include "bimi/reward.hpp"

namespace bimi {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a == 0) throw InvalidArgument("metrics need at least one sample");
  if (a != b) throw InvalidArgument("prediction and ground-truth counts differ");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const Category> preds, std::span<const Category> gts) {
  check_lengths(preds.size(), gts.size());
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < preds.size(); ++i) ++m[category_index(gts[i])][category_index(preds[i])];
  return m;
}

double accuracy(std::span<const Category> preds, std::span<const Category> gts) {
  check_lengths(preds.size(), gts.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == gts[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double macro_f1(const ConfusionMatrix& m) {
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    std::size_t actual = 0;
    std::size_t predicted = 0;
    for (std::size_t k = 0; k < kNumCategories; ++k) {
      actual += m[c][k];
      predicted += m[k][c];
    }
    if (actual == 0 && predicted == 0) continue;
    ++present;
    const std::size_t tp = m[c][c];
    // F1 = 2TP / (2TP + FP + FN) = 2TP / (predicted + actual)
    sum += 2.0 * static_cast<double>(tp) / static_cast<double>(actual + predicted);
  }
  return present == 0 ? 0.0 : sum / static_cast<double>(present);
}

double macro_f1(std::span<const Category> preds, std::span<const Category> gts) {
  return macro_f1(confusion_matrix(preds, gts));
}

MeanIou mean_iou(std::span<const std::vector<BBox>> preds, std::span<const std::vector<BBox>> gts) {
  if (preds.size() != gts.size()) throw InvalidArgument("prediction and ground-truth counts differ");
  MeanIou out;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (gts[i].empty()) continue;
    sum += region_iou(preds[i], gts[i]);
    ++out.count;
  }
  if (out.count > 0) {
    out.vacuous = false;
    out.value = sum / static_cast<double>(out.count);
  }
  return out;
}

double token_f1(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() && ref.empty()) return 1.0;
  if (cand.empty() || ref.empty()) return 0.0;
  std::map<std::string, std::size_t> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : cand) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

EvalReport build_report(const EvalInputs& in, const ExplanationScorer& scorer) {
  EvalReport report;
  report.n = in.gt_categories.size();
  report.confusion = confusion_matrix(in.pred_categories, in.gt_categories);
  report.accuracy = accuracy(in.pred_categories, in.gt_categories);
  report.macro_f1 = macro_f1(report.confusion);
  const MeanIou iou = mean_iou(in.pred_boxes, in.gt_boxes);
  report.mean_iou = iou.value;
  report.iou_vacuous = iou.vacuous;

  if (!in.explanation_refs.empty()) {
    if (in.explanations.size() != in.explanation_refs.size()) {
      throw InvalidArgument("explanation and reference counts differ");
    }
    double sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t i = 0; i < in.explanations.size(); ++i) {
      if (!in.explanation_refs[i]) continue;
      sum += scorer.score(in.explanations[i], *in.explanation_refs[i]);
      ++scored;
    }
    if (scored > 0) report.explanation_score = sum / static_cast<double>(scored);
  }
  return report;
}

std::string EvalReport::to_key_value() const {
  std::ostringstream os;
  os << "n=" << n << '\n'
     << "accuracy=" << fmt(accuracy) << '\n'
     << "macro_f1=" << fmt(macro_f1) << '\n'
     << "mean_iou=" << fmt(mean_iou) << '\n'
     << "iou_vacuous=" << (iou_vacuous ? "true" : "false") << '\n'
     << "explanation_score=" << (explanation_score ? fmt(*explanation_score) : "none") << '\n'
     << "format_rate=" << fmt(format_rate) << '\n'
     << "mean_reward=" << fmt(mean_reward) << '\n'
     << "mean_cls_reward=" << fmt(mean_cls_reward) << '\n'
     << "mean_loc_reward=" << fmt(mean_loc_reward) << '\n';
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json rec;
  rec["n"] = n;
  rec["accuracy"] = accuracy;
  rec["macro_f1"] = macro_f1;
  rec["mean_iou"] = mean_iou;
  rec["iou_vacuous"] = iou_vacuous;
  rec["explanation_score"] = explanation_score ? nlohmann::ordered_json(*explanation_score) : nullptr;
  rec["format_rate"] = format_rate;
  rec["mean_reward"] = mean_reward;
  rec["mean_cls_reward"] = mean_cls_reward;
  rec["mean_loc_reward"] = mean_loc_reward;
  rec["labels"] = nlohmann::ordered_json::array();
  for (Category c : kAllCategories) rec["labels"].push_back(category_label(c));
  rec["confusion"] = confusion;
  return rec.dump();
}

std::string EvalReport::confusion_table() const {
  std::size_t width = 0;
  for (Category c : kAllCategories) width = std::max(width, category_label(c).size());
  std::ostringstream os;
  os << std::string(width, ' ');
  for (Category c : kAllCategories) os << " | " << category_label(c);
  os << '\n';
  for (Category row : kAllCategories) {
    const auto label = category_label(row);
    os << label << std::string(width - label.size(), ' ');
    for (Category col : kAllCategories) {
      const std::string cell = std::to_string(confusion[category_index(row)][category_index(col)]);
      os << " | " << std::string(category_label(col).size() - std::min(cell.size(), category_label(col).size()), ' ')
         << cell;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace bimi
