#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bimi {

enum class ModalityState : std::uint8_t { Original, Manipulated };

/// The six consistency categories. Declaration order fixes the class index
/// used by the policy's category head and by confusion matrices.
enum class Category : std::uint8_t {
  AllConsistent,
  ImageManipulated,
  BothMisaligned,
  ChineseMisaligned,
  EnglishMisaligned,
  AllInconsistent,
};

inline constexpr std::size_t kNumCategories = 6;

inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::AllConsistent,     Category::ImageManipulated,  Category::BothMisaligned,
    Category::ChineseMisaligned, Category::EnglishMisaligned, Category::AllInconsistent,
};

constexpr std::size_t category_index(Category c) { return static_cast<std::size_t>(c); }

/// Throws InvalidArgument when index >= 6.
Category category_from_index(std::size_t index);

/// Exact label strings used in model outputs and manifests.
std::string_view category_label(Category c);
std::optional<Category> category_from_label(std::string_view label);

std::string_view modality_state_name(ModalityState s);
std::optional<ModalityState> modality_state_from_name(std::string_view name);

/// True for the categories whose image is manipulated, i.e. those that
/// carry tampered regions.
constexpr bool category_has_region(Category c) {
  return c == Category::ImageManipulated || c == Category::AllInconsistent;
}

/// Total over the 8 state combinations.
Category derive_category(ModalityState image, ModalityState en, ModalityState zh);

/// Axis-aligned box in pixel units.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double area() const { return (x_max - x_min) * (y_max - y_min); }

  /// Finite, non-negative, and strictly positive extent on both axes.
  bool is_valid() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Throws InvalidArgument unless box.is_valid().
BBox make_bbox(double x_min, double y_min, double x_max, double y_max);

/// One benchmark record. Construct through make_sample, which enforces the
/// category and box invariants.
struct Sample {
  std::string id;
  ModalityState image_state = ModalityState::Original;
  ModalityState en_state = ModalityState::Original;
  ModalityState zh_state = ModalityState::Original;
  std::string en_text;
  std::string zh_text;
  std::vector<BBox> gt_boxes;
  Category category = Category::AllConsistent;
  std::optional<std::string> explanation_ref;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Throws ValidationError when the stored category disagrees with the
/// states, when boxes are present on an original image (or absent on a
/// manipulated one), or when a box is invalid.
void validate_sample(const Sample& sample);

Sample make_sample(std::string id, ModalityState image, ModalityState en, ModalityState zh,
                   std::string en_text, std::string zh_text, std::vector<BBox> gt_boxes,
                   std::optional<std::string> explanation_ref = std::nullopt);

}  // namespace bimi
