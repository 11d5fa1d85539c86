#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bimi/context.hpp"
#include "bimi/environment.hpp"
#include "bimi/grpo.hpp"
#include "bimi/metrics.hpp"
#include "bimi/policy.hpp"

namespace bimi {

/// Observation for the i-th manifest record, drawn from a per-index
/// substream of `seed` so that features do not depend on file order
/// beyond the index. `zh_text_seen` passes an OCR-corrupted subtitle.
Observation observe(const Sample& sample, std::size_t index, std::uint64_t seed,
                    const GeneratorConfig& generator,
                    std::optional<std::string_view> zh_text_seen = std::nullopt);

std::vector<Query> make_queries(std::span<const Sample> samples, std::uint64_t seed,
                                const GeneratorConfig& generator);

std::vector<SftExample> make_sft_examples(std::span<const Query> queries, const BinCoder& coder);

struct SftRun {
  Policy policy;
  /// Mean NLL over the full training set: entry 0 before training, entry k
  /// after epoch k.
  std::vector<double> nll_curve;
};

/// Minibatch SGD on the mean NLL, reshuffling every epoch from `seed`.
SftRun run_sft(const Policy& initial, std::span<const SftExample> examples, std::size_t epochs,
               std::size_t batch_size, double learning_rate, std::uint64_t seed);

/// Mean reward over `samples_per_query` stochastic responses per query.
struct RewardSummary {
  double total = 0.0;
  double format = 0.0;
  double cls = 0.0;
  double loc = 0.0;
};

RewardSummary sampled_reward(const Policy& policy, std::span<const Query> queries, const BinCoder& coder,
                             std::size_t samples_per_query, std::uint64_t seed);

RewardSummary greedy_reward(const Policy& policy, std::span<const Query> queries, const BinCoder& coder);

/// One decoded prediction per query.
struct Prediction {
  ResponseTokens tokens;
  std::string text;
  RewardBreakdown reward;
  std::string prompt;
  bool retrieval_degraded = true;
};

struct EvalOptions {
  std::shared_ptr<const RetrieverClient> retriever;  // null: retrieval disabled
  std::chrono::milliseconds deadline{1000};
  double ocr_noise = 0.0;
  /// Decode the ideal target tokens instead of the policy.
  bool oracle = false;
};

struct EvalRun {
  std::vector<Prediction> predictions;
  EvalReport report;
};

/// Greedy (argmax per head) decoding over a manifest with optional
/// retrieval-augmented prompts, rewards, and metrics. Category metrics use
/// the emitted category token; regions use the rendered box (empty when
/// the category carries no region or the box is degenerate).
EvalRun evaluate_policy(const Policy& policy, std::span<const Sample> samples, std::uint64_t seed,
                        const GeneratorConfig& generator, const EvalOptions& options);

}  // namespace bimi
