#include <doctest.h>

#include <limits>
#include <map>

#include "bimi/domain.hpp"
#include "bimi/error.hpp"

using namespace bimi;

namespace {
constexpr auto O = ModalityState::Original;
constexpr auto M = ModalityState::Manipulated;
}  // namespace

TEST_CASE("derive_category follows the category table") {
  CHECK(derive_category(O, O, O) == Category::AllConsistent);
  CHECK(derive_category(O, O, M) == Category::ChineseMisaligned);
  CHECK(derive_category(O, M, O) == Category::EnglishMisaligned);
  CHECK(derive_category(O, M, M) == Category::BothMisaligned);
  CHECK(derive_category(M, M, M) == Category::AllInconsistent);
  CHECK(derive_category(M, O, O) == Category::ImageManipulated);
  CHECK(derive_category(M, O, M) == Category::ImageManipulated);
  CHECK(derive_category(M, M, O) == Category::ImageManipulated);
}

TEST_CASE("derive_category preimage sizes") {
  std::map<Category, int> counts;
  for (auto i : {O, M})
    for (auto e : {O, M})
      for (auto z : {O, M}) ++counts[derive_category(i, e, z)];
  CHECK(counts.size() == 6);
  CHECK(counts[Category::AllConsistent] == 1);
  CHECK(counts[Category::ImageManipulated] == 3);
  CHECK(counts[Category::BothMisaligned] == 1);
  CHECK(counts[Category::ChineseMisaligned] == 1);
  CHECK(counts[Category::EnglishMisaligned] == 1);
  CHECK(counts[Category::AllInconsistent] == 1);
}

TEST_CASE("label strings are exact and invertible") {
  CHECK(category_label(Category::ChineseMisaligned) == "only English aligned");
  CHECK(category_label(Category::EnglishMisaligned) == "only Chinese aligned");
  CHECK(category_label(Category::BothMisaligned) == "both subtitles misaligned with image");
  for (Category c : kAllCategories) CHECK(category_from_label(category_label(c)) == c);
  CHECK_FALSE(category_from_label("All Consistent").has_value());
  CHECK_THROWS_AS(category_from_index(6), InvalidArgument);
}

TEST_CASE("bbox validity") {
  CHECK(BBox{0, 0, 10, 10}.is_valid());
  CHECK_FALSE(BBox{5, 5, 5, 10}.is_valid());
  CHECK_FALSE(BBox{-1, 0, 10, 10}.is_valid());
  CHECK_FALSE(BBox{0, 0, std::numeric_limits<double>::infinity(), 10}.is_valid());
  CHECK(BBox{1, 2, 4, 6}.area() == doctest::Approx(12.0));
  CHECK_THROWS_AS(make_bbox(3, 0, 1, 1), InvalidArgument);
}

TEST_CASE("sample construction enforces invariants") {
  CHECK_NOTHROW(make_sample("a", M, O, O, "en", "zh", {BBox{0, 0, 1, 1}}));
  CHECK_THROWS_AS(make_sample("b", M, O, O, "en", "zh", {}), ValidationError);
  CHECK_THROWS_AS(make_sample("c", O, O, O, "en", "zh", {BBox{0, 0, 1, 1}}), ValidationError);

  Sample s = make_sample("d", O, O, M, "en", "zh", {});
  s.category = Category::AllConsistent;
  CHECK_THROWS_AS(validate_sample(s), ValidationError);
}
