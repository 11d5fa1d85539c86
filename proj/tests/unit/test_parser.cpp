#include <doctest.h>

#include <random>

#include "bimi/error.hpp"
#include "bimi/parser.hpp"

using namespace bimi;

namespace {

std::optional<FormatFailure> failure_of(std::string_view text) {
  const auto outcome = parse_output(text);
  if (const auto* f = std::get_if<FormatFailure>(&outcome)) return *f;
  return std::nullopt;
}

}  // namespace

TEST_CASE("render matches the tagged template") {
  StructuredOutput a{"ok", Category::AllConsistent, {}};
  CHECK(render_output(a) ==
        R"(<think>ok</think><answer>{"classification": "all consistent", "region": []}</answer>)");

  StructuredOutput b{std::nullopt, Category::AllConsistent, {}};
  CHECK(render_output(b) == R"(<answer>{"classification": "all consistent", "region": []}</answer>)");

  StructuredOutput c{"t", Category::ImageManipulated, {BBox{0, 0, 10, 10}}};
  const std::string text = render_output(c);
  CHECK(text.find(R"("region": [{"bbox": [0, 0, 10, 10]}])") != std::string::npos);

  StructuredOutput d{std::nullopt, Category::AllInconsistent, {BBox{3.125, 1.5, 96.875, 50}, BBox{1, 1, 2, 2}}};
  CHECK(render_output(d) ==
        R"(<answer>{"classification": "all inconsistent", "region": [{"bbox": [3.125, 1.5, 96.875, 50]}, {"bbox": [1, 1, 2, 2]}]}</answer>)");
}

TEST_CASE("coordinate formatting") {
  CHECK(format_coordinate(10.0) == "10");
  CHECK(format_coordinate(3.125) == "3.125");
  CHECK(format_coordinate(1.0 / 3.0) == "0.333333");
  CHECK(format_coordinate(-0.0) == "0");
  CHECK(format_coordinate(1e7) == "10000000");
  CHECK(format_coordinate(2.0000004) == "2");
}

TEST_CASE("render rejects invalid outputs") {
  CHECK_THROWS_AS(render_output({"a</think>b", Category::AllConsistent, {}}), InvalidArgument);
  CHECK_THROWS_AS(render_output({std::nullopt, Category::ImageManipulated, {BBox{5, 5, 5, 10}}}),
                  InvalidArgument);
}

TEST_CASE("failure reasons") {
  CHECK(failure_of(R"(<answer>{"classification": "all consistent"}</answer>)") == FormatFailure::MalformedPayload);
  CHECK(failure_of("<think>t</think>") == FormatFailure::MissingAnswerTag);
  CHECK(failure_of("") == FormatFailure::MissingAnswerTag);
  CHECK(failure_of(R"(<answer>{"classification": "All Consistent", "region": []}</answer>)") ==
        FormatFailure::UnknownLabel);
  CHECK(failure_of(R"(<answer>{"classification": "image manipulated", "region": [{"bbox": [5, 5, 5, 10]}]}</answer>)") ==
        FormatFailure::BadBox);
  CHECK(failure_of(R"(<answer>{"classification": "image manipulated", "region": [{"bbox": [-1, 5, 6, 10]}]}</answer>)") ==
        FormatFailure::BadBox);
  // unterminated answer block
  CHECK(failure_of(R"(<answer>{"classification": "all consistent", "region": []})") == FormatFailure::MissingAnswerTag);
  // duplicated answer block
  const std::string one = R"(<answer>{"classification": "all consistent", "region": []}</answer>)";
  CHECK(failure_of(one + one) == FormatFailure::TrailingGarbage);
  CHECK(failure_of("hello " + one) == FormatFailure::TrailingGarbage);
  CHECK(failure_of(one + " bye") == FormatFailure::TrailingGarbage);
  CHECK(failure_of("<think>a</think><think>b</think>" + one) == FormatFailure::TrailingGarbage);
  CHECK(failure_of(one + "<think>late</think>") == FormatFailure::TrailingGarbage);
  // schema
  CHECK(failure_of(R"(<answer>{"classification": "all consistent", "region": [], "extra": 1}</answer>)") ==
        FormatFailure::MalformedPayload);
  CHECK(failure_of(R"(<answer>{"classification": "all consistent", "region": [{"box": [0, 0, 1, 1]}]}</answer>)") ==
        FormatFailure::MalformedPayload);
  CHECK(failure_of(R"(<answer>{"classification": "all consistent", "region": [{"bbox": [0, 0, 1]}]}</answer>)") ==
        FormatFailure::MalformedPayload);
  CHECK(failure_of(R"(<answer>{"classification": 3, "region": []}</answer>)") == FormatFailure::MalformedPayload);
  CHECK(failure_of(R"(<answer>not json</answer>)") == FormatFailure::MalformedPayload);
}

TEST_CASE("whitespace is insignificant around tags and inside the payload") {
  const std::string text =
      "  \n<think>\nYour explanation here.\n</think>\n\n<answer>\n"
      "{ \"classification\" : \"image manipulated\",\n \"region\": [ {\"bbox\":[1,2,3,4]} ] }\n</answer>\n";
  const auto outcome = parse_output(text);
  REQUIRE(std::holds_alternative<StructuredOutput>(outcome));
  const auto& out = std::get<StructuredOutput>(outcome);
  CHECK(out.think == "Your explanation here.");
  CHECK(out.category == Category::ImageManipulated);
  REQUIRE(out.boxes.size() == 1);
  CHECK(out.boxes[0] == BBox{1, 2, 3, 4});
  CHECK(check_format(text).is_valid);
}

TEST_CASE("round trip on randomized outputs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(0.0, 500.0);
  std::uniform_real_distribution<double> extent(0.01, 200.0);
  const std::string alphabet = "abc XYZ 012 <>{}\"\\/,:\n\t中文";
  for (int trial = 0; trial < 1000; ++trial) {
    StructuredOutput x;
    x.category = kAllCategories[rng() % 6];
    if (rng() % 2) {
      std::string t;
      const std::size_t len = rng() % 40;
      for (std::size_t i = 0; i < len; ++i) t.push_back(alphabet[rng() % alphabet.size()]);
      const auto first = t.find_first_not_of(" \n\t");
      t = first == std::string::npos ? "" : t.substr(first, t.find_last_not_of(" \n\t") - first + 1);
      x.think = t;
    }
    const std::size_t boxes = rng() % 4;
    for (std::size_t i = 0; i < boxes; ++i) {
      const double x0 = coord(rng), y0 = coord(rng);
      x.boxes.push_back(BBox{x0, y0, x0 + extent(rng), y0 + extent(rng)});
    }
    // Numeric normalization: values are rendered with six decimals.
    StructuredOutput expected = x;
    for (auto& b : expected.boxes) {
      b = BBox{std::stod(format_coordinate(b.x_min)), std::stod(format_coordinate(b.y_min)),
               std::stod(format_coordinate(b.x_max)), std::stod(format_coordinate(b.y_max))};
    }
    const std::string text = render_output(x);
    const auto outcome = parse_output(text);
    REQUIRE(std::holds_alternative<StructuredOutput>(outcome));
    CHECK(std::get<StructuredOutput>(outcome) == expected);
    CHECK(render_output(std::get<StructuredOutput>(outcome)) == text);
  }
}

TEST_CASE("byte fuzz never throws and check_format agrees with parse_output") {
  std::mt19937_64 rng(11);
  const std::string valid = R"(<think>x</think><answer>{"classification": "all consistent", "region": []}</answer>)";
  for (int trial = 0; trial < 20000; ++trial) {
    std::string text;
    if (trial % 2 == 0) {
      const std::size_t len = rng() % 64;
      for (std::size_t i = 0; i < len; ++i) text.push_back(static_cast<char>(rng() & 0xFF));
    } else {
      text = valid;
      const std::size_t edits = 1 + rng() % 3;
      for (std::size_t e = 0; e < edits; ++e) text[rng() % text.size()] = static_cast<char>(rng() & 0xFF);
    }
    ParseOutcome outcome;
    REQUIRE_NOTHROW(outcome = parse_output(text));
    CHECK(check_format(text).is_valid == std::holds_alternative<StructuredOutput>(outcome));
  }
}
