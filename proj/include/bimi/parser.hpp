#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bimi/domain.hpp"

namespace bimi {

/// A parsed model verdict: optional reasoning, the category, and the
/// predicted tampered regions.
struct StructuredOutput {
  std::optional<std::string> think;
  Category category = Category::AllConsistent;
  std::vector<BBox> boxes;

  friend bool operator==(const StructuredOutput&, const StructuredOutput&) = default;
};

enum class FormatFailure {
  MissingAnswerTag,
  MalformedPayload,
  UnknownLabel,
  BadBox,
  TrailingGarbage,
};

std::string_view format_failure_name(FormatFailure f);

struct FormatVerdict {
  bool is_valid = false;
  std::optional<FormatFailure> failure_reason;
};

using ParseOutcome = std::variant<StructuredOutput, FormatFailure>;

/// Formats a coordinate with at most six decimals and no exponent,
/// trailing zeros removed ("10", "3.125").
std::string format_coordinate(double value);

/// Renders `out` in the tagged answer format:
///   [<think>...</think>]<answer>{"classification": "...", "region": [...]}</answer>
/// Throws InvalidArgument when `out` breaks its invariants (bad box, or a
/// think text containing the closing think tag).
std::string render_output(const StructuredOutput& out);

/// Strict inverse of render_output. Whitespace around tags and inside the
/// JSON payload is ignored; the think text is returned trimmed.
ParseOutcome parse_output(std::string_view text);

/// Total: never throws. Valid exactly when parse_output succeeds.
FormatVerdict check_format(std::string_view text);

}  // namespace bimi
