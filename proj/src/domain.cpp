#include "bimi/domain.hpp"

#include <cmath>

#include "bimi/error.hpp"

namespace bimi {

namespace {

constexpr std::array<std::string_view, kNumCategories> kLabels = {
    "all consistent",
    "image manipulated",
    "both subtitles misaligned with image",
    "only English aligned",
    "only Chinese aligned",
    "all inconsistent",
};

}  // namespace

Category category_from_index(std::size_t index) {
  if (index >= kNumCategories) {
    throw InvalidArgument("category index out of range: " + std::to_string(index));
  }
  return kAllCategories[index];
}

std::string_view category_label(Category c) { return kLabels[category_index(c)]; }

std::optional<Category> category_from_label(std::string_view label) {
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    if (kLabels[i] == label) return kAllCategories[i];
  }
  return std::nullopt;
}

std::string_view modality_state_name(ModalityState s) {
  return s == ModalityState::Original ? "original" : "manipulated";
}

std::optional<ModalityState> modality_state_from_name(std::string_view name) {
  if (name == "original") return ModalityState::Original;
  if (name == "manipulated") return ModalityState::Manipulated;
  return std::nullopt;
}

Category derive_category(ModalityState image, ModalityState en, ModalityState zh) {
  const bool en_bad = en == ModalityState::Manipulated;
  const bool zh_bad = zh == ModalityState::Manipulated;
  if (image == ModalityState::Manipulated) {
    // Tampered image: only the fully manipulated triple is "all inconsistent".
    return (en_bad && zh_bad) ? Category::AllInconsistent : Category::ImageManipulated;
  }
  if (en_bad && zh_bad) return Category::BothMisaligned;
  if (zh_bad) return Category::ChineseMisaligned;
  if (en_bad) return Category::EnglishMisaligned;
  return Category::AllConsistent;
}

bool BBox::is_valid() const {
  for (double v : {x_min, y_min, x_max, y_max}) {
    if (!std::isfinite(v) || v < 0.0) return false;
  }
  return x_max > x_min && y_max > y_min;
}

BBox make_bbox(double x_min, double y_min, double x_max, double y_max) {
  BBox box{x_min, y_min, x_max, y_max};
  if (!box.is_valid()) throw InvalidArgument("invalid bounding box");
  return box;
}

void validate_sample(const Sample& sample) {
  const Category expected = derive_category(sample.image_state, sample.en_state, sample.zh_state);
  if (sample.category != expected) {
    throw ValidationError("category \"" + std::string(category_label(sample.category)) +
                          "\" disagrees with modality states (expected \"" +
                          std::string(category_label(expected)) + "\")");
  }
  const bool manipulated = sample.image_state == ModalityState::Manipulated;
  if (manipulated && sample.gt_boxes.empty()) {
    throw ValidationError("manipulated image without ground-truth boxes");
  }
  if (!manipulated && !sample.gt_boxes.empty()) {
    throw ValidationError("ground-truth boxes on an original image");
  }
  for (const auto& box : sample.gt_boxes) {
    if (!box.is_valid()) throw ValidationError("invalid ground-truth box");
  }
}

Sample make_sample(std::string id, ModalityState image, ModalityState en, ModalityState zh,
                   std::string en_text, std::string zh_text, std::vector<BBox> gt_boxes,
                   std::optional<std::string> explanation_ref) {
  Sample s;
  s.id = std::move(id);
  s.image_state = image;
  s.en_state = en;
  s.zh_state = zh;
  s.en_text = std::move(en_text);
  s.zh_text = std::move(zh_text);
  s.gt_boxes = std::move(gt_boxes);
  s.category = derive_category(image, en, zh);
  s.explanation_ref = std::move(explanation_ref);
  validate_sample(s);
  return s;
}

}  // namespace bimi
