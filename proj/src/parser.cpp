#include "bimi/parser.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "bimi/error.hpp"

namespace bimi {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

bool contains(std::string_view s, std::string_view needle) {
  return s.find(needle) != std::string_view::npos;
}

// Validates the JSON payload of the answer block against the fixed schema
// {"classification": <label>, "region": [{"bbox": [4 numbers]}, ...]}.
ParseOutcome parse_payload(std::string_view payload) {
  using nlohmann::json;
  const json doc = json::parse(payload.begin(), payload.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object() || doc.size() != 2) {
    return FormatFailure::MalformedPayload;
  }
  const auto cls = doc.find("classification");
  const auto region = doc.find("region");
  if (cls == doc.end() || region == doc.end() || !cls->is_string() || !region->is_array()) {
    return FormatFailure::MalformedPayload;
  }

  StructuredOutput out;
  const auto category = category_from_label(cls->get_ref<const std::string&>());

  bool bad_box = false;
  for (const auto& entry : *region) {
    if (!entry.is_object() || entry.size() != 1) return FormatFailure::MalformedPayload;
    const auto bbox = entry.find("bbox");
    if (bbox == entry.end() || !bbox->is_array() || bbox->size() != 4) {
      return FormatFailure::MalformedPayload;
    }
    std::array<double, 4> v{};
    for (std::size_t i = 0; i < 4; ++i) {
      if (!(*bbox)[i].is_number()) return FormatFailure::MalformedPayload;
      v[i] = (*bbox)[i].get<double>();
    }
    BBox box{v[0], v[1], v[2], v[3]};
    if (!box.is_valid()) bad_box = true;
    out.boxes.push_back(box);
  }
  // Schema errors take precedence over value errors.
  if (!category) return FormatFailure::UnknownLabel;
  if (bad_box) return FormatFailure::BadBox;
  out.category = *category;
  return out;
}

}  // namespace

std::string_view format_failure_name(FormatFailure f) {
  switch (f) {
    case FormatFailure::MissingAnswerTag: return "MissingAnswerTag";
    case FormatFailure::MalformedPayload: return "MalformedPayload";
    case FormatFailure::UnknownLabel: return "UnknownLabel";
    case FormatFailure::BadBox: return "BadBox";
    case FormatFailure::TrailingGarbage: return "TrailingGarbage";
  }
  return "Unknown";
}

std::string format_coordinate(double value) {
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  const int n = std::snprintf(nullptr, 0, "%.6f", value);
  std::string s(static_cast<std::size_t>(n) + 1, '\0');
  std::snprintf(s.data(), s.size(), "%.6f", value);
  s.resize(static_cast<std::size_t>(n));
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

std::string render_output(const StructuredOutput& out) {
  std::string text;
  if (out.think) {
    if (contains(*out.think, kThinkClose)) {
      throw InvalidArgument("think text must not contain the closing think tag");
    }
    text.append(kThinkOpen).append(*out.think).append(kThinkClose);
  }
  text.append(kAnswerOpen);
  text.append("{\"classification\": \"").append(category_label(out.category)).append("\", \"region\": [");
  for (std::size_t i = 0; i < out.boxes.size(); ++i) {
    const BBox& b = out.boxes[i];
    if (!b.is_valid()) throw InvalidArgument("cannot render an invalid bounding box");
    if (i > 0) text.append(", ");
    text.append("{\"bbox\": [")
        .append(format_coordinate(b.x_min)).append(", ")
        .append(format_coordinate(b.y_min)).append(", ")
        .append(format_coordinate(b.x_max)).append(", ")
        .append(format_coordinate(b.y_max)).append("]}");
  }
  text.append("]}").append(kAnswerClose);
  return text;
}

ParseOutcome parse_output(std::string_view text) {
  std::string_view rest = trim(text);
  std::optional<std::string> think;

  if (starts_with(rest, kThinkOpen)) {
    rest.remove_prefix(kThinkOpen.size());
    const auto close = rest.find(kThinkClose);
    // An unclosed think block swallows any answer that follows it.
    if (close == std::string_view::npos) return FormatFailure::MissingAnswerTag;
    think = std::string(trim(rest.substr(0, close)));
    rest = trim(rest.substr(close + kThinkClose.size()));
  }

  if (!starts_with(rest, kAnswerOpen)) {
    return contains(rest, kAnswerOpen) ? FormatFailure::TrailingGarbage
                                       : FormatFailure::MissingAnswerTag;
  }
  rest.remove_prefix(kAnswerOpen.size());
  const auto close = rest.find(kAnswerClose);
  if (close == std::string_view::npos) return FormatFailure::MissingAnswerTag;
  const std::string_view payload = rest.substr(0, close);
  if (!trim(rest.substr(close + kAnswerClose.size())).empty()) {
    return FormatFailure::TrailingGarbage;
  }

  ParseOutcome outcome = parse_payload(payload);
  if (auto* out = std::get_if<StructuredOutput>(&outcome)) out->think = std::move(think);
  return outcome;
}

FormatVerdict check_format(std::string_view text) {
  const ParseOutcome outcome = parse_output(text);
  if (const auto* failure = std::get_if<FormatFailure>(&outcome)) {
    return FormatVerdict{false, *failure};
  }
  return FormatVerdict{true, std::nullopt};
}

}  // namespace bimi
