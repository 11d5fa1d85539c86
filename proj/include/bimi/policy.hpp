#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bimi/domain.hpp"
#include "bimi/rng.hpp"

namespace bimi {

/// Stand-in for the fused image and subtitle context: a dense feature
/// vector the policy conditions on.
struct Observation {
  std::vector<double> features;

  std::size_t dim() const { return features.size(); }
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// The six categorical emission heads, in parameter-layout order.
enum class Head : std::uint8_t { Template, Category, XMin, YMin, XMax, YMax };

inline constexpr std::size_t kNumHeads = 6;
inline constexpr std::array<Head, kNumHeads> kAllHeads = {Head::Template, Head::Category, Head::XMin,
                                                          Head::YMin,     Head::XMax,     Head::YMax};

std::string_view head_name(Head h);

/// One sampled response. template_id 0 is the only well-formed renderer.
struct ResponseTokens {
  std::size_t template_id = 0;
  std::size_t category_id = 0;
  std::array<std::size_t, 4> box_bins{};

  std::size_t token(Head h) const;
  friend bool operator==(const ResponseTokens&, const ResponseTokens&) = default;
};

struct PolicyShape {
  std::size_t obs_dim = 10;
  std::size_t template_count = 2;
  std::size_t bins = 16;

  std::size_t head_size(Head h) const;
  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

/// Product of linear-softmax categorical heads. Parameters live in one flat
/// vector: for each head in kAllHeads order, a row-major (size x obs_dim)
/// weight block followed by a bias block.
class Policy {
 public:
  Policy() = default;
  explicit Policy(PolicyShape shape, std::uint64_t seed = 0);

  const PolicyShape& shape() const { return shape_; }
  std::uint64_t seed() const { return seed_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  /// Offset of the head's weight block; its bias block follows at
  /// weight_offset + size * obs_dim.
  std::size_t weight_offset(Head h) const { return offsets_[static_cast<std::size_t>(h)]; }
  std::size_t bias_offset(Head h) const;

  /// Writes the head's logits for `obs` into `out` (size = head size).
  void logits(Head h, const Observation& obs, std::span<double> out) const;

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  PolicyShape shape_;
  std::uint64_t seed_ = 0;
  std::array<std::size_t, kNumHeads> offsets_{};
  std::vector<double> params_;
};

/// Per-head log-probabilities for one observation.
struct HeadLogProbs {
  std::array<std::vector<double>, kNumHeads> log_probs;

  std::span<const double> operator[](Head h) const { return log_probs[static_cast<std::size_t>(h)]; }
};

/// Stable log-softmax.
void log_softmax(std::span<const double> logits, std::span<double> out);

/// Parameters uniform in [-scale, scale] from `seed`. Throws InvalidArgument
/// for template_count < 2, bins < 2, obs_dim == 0 or negative scale.
Policy init_policy(std::uint64_t seed, std::size_t obs_dim, std::size_t template_count,
                   std::size_t bins, double scale);

HeadLogProbs head_log_probs(const Policy& policy, const Observation& obs);

struct SampledResponse {
  ResponseTokens tokens;
  double logprob = 0.0;
};

SampledResponse sample_response(const Policy& policy, const Observation& obs, Rng& rng);

/// Argmax per head (lowest index on ties).
ResponseTokens greedy_response(const Policy& policy, const Observation& obs);

/// Exact sum over heads of log softmax(logits)[token]. Throws
/// InvalidArgument on a dimension mismatch or out-of-range token.
double response_logprob(const Policy& policy, const Observation& obs, const ResponseTokens& tokens);

/// Adds coeff * d/dtheta log pi(tokens | obs) into `grad`. Heads whose
/// mask entry is false are skipped.
void accumulate_logprob_gradient(const Policy& policy, const Observation& obs,
                                 const ResponseTokens& tokens, double coeff, std::span<double> grad,
                                 const std::array<bool, kNumHeads>& head_mask = {true, true, true,
                                                                                 true, true, true});

void check_tokens(const PolicyShape& shape, const ResponseTokens& tokens);

/// Maps box bins to pixel coordinates: a bin decodes to its center on a
/// canvas of the given size.
struct BinCoder {
  std::size_t bins = 16;
  double width = 100.0;
  double height = 100.0;

  double decode_x(std::size_t bin) const;
  double decode_y(std::size_t bin) const;
  std::size_t encode_x(double x) const;
  std::size_t encode_y(double y) const;
  /// Decoded box, possibly degenerate when bins are out of order.
  BBox decode(const std::array<std::size_t, 4>& bins) const;
  std::array<std::size_t, 4> encode(const BBox& box) const;
};

/// Template 0 renders the tagged verdict (one decoded box when the category
/// carries a region, else an empty region list). Any other template
/// renders a deliberately malformed string. Out-of-order box bins are
/// emitted verbatim and therefore fail the format check.
std::string render_response(const ResponseTokens& tokens, const BinCoder& coder);

struct SftExample {
  Observation obs;
  ResponseTokens target;
};

/// Mean negative log-likelihood of the targets. Box heads count only for
/// targets whose category carries a region, since only then are the box
/// tokens part of the rendered response. When `grad` is non-empty the
/// gradient of the mean NLL is written into it.
double sft_loss(const Policy& policy, std::span<const SftExample> batch, std::span<double> grad = {});

struct SftResult {
  Policy policy;
  double mean_nll = 0.0;  // before the step
};

SftResult sft_update(const Policy& policy, std::span<const SftExample> batch, double learning_rate);

/// Frozen deep copy of a policy.
class ReferencePolicy {
 public:
  explicit ReferencePolicy(Policy policy) : policy_(std::move(policy)) {}
  const Policy& policy() const { return policy_; }

 private:
  Policy policy_;
};

ReferencePolicy snapshot_reference(const Policy& policy);

/// FNV-1a hash of the policy shape, stored in checkpoints.
std::uint64_t shape_hash(const PolicyShape& shape);

void save_checkpoint(const Policy& policy, const std::filesystem::path& path);
Policy load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_text(const Policy& policy);

}  // namespace bimi
