#include "bimi/pipeline.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <variant>

#include "bimi/error.hpp"
#include "bimi/parser.hpp"

namespace bimi {

namespace {

constexpr std::uint64_t kFeatureStream = 0x66656174;  // "feat"
constexpr std::uint64_t kOcrStream = 0x6f637200;      // "ocr"
constexpr std::uint64_t kEvalSampleStream = 0x65766c73;

void add(RewardSummary& s, const RewardBreakdown& r) {
  s.total += r.total;
  s.format += r.format;
  s.cls += r.cls;
  s.loc += r.loc;
}

// Up to kInFlight retrievals run at once; each one already bounds its own
// wait by the deadline.
std::vector<RetrievedContext> retrieve_all(const EvalOptions& options, std::span<const Sample> samples,
                                           const std::vector<std::string>& zh_seen) {
  constexpr std::size_t kInFlight = 64;
  RetrievedContext none;
  none.degraded = true;
  std::vector<RetrievedContext> out(samples.size(), none);
  if (!options.retriever) return out;
  for (std::size_t begin = 0; begin < samples.size(); begin += kInFlight) {
    const std::size_t end = std::min(samples.size(), begin + kInFlight);
    std::vector<std::pair<std::size_t, std::future<RetrievedContext>>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      std::string query;
      try {
        query = build_query(samples[i].en_text, zh_seen[i]);
      } catch (const InvalidArgument&) {
        continue;
      }
      pending.emplace_back(i, std::async(std::launch::async, retrieve, options.retriever, std::move(query),
                                         options.deadline));
    }
    for (auto& [i, f] : pending) out[i] = f.get();
  }
  return out;
}

void scale(RewardSummary& s, std::size_t count) {
  if (count == 0) return;
  const double inv = 1.0 / static_cast<double>(count);
  s.total *= inv;
  s.format *= inv;
  s.cls *= inv;
  s.loc *= inv;
}

}  // namespace

Observation observe(const Sample& sample, std::size_t index, std::uint64_t seed,
                    const GeneratorConfig& generator, std::optional<std::string_view> zh_text_seen) {
  Rng rng = substream(seed, kFeatureStream, index);
  return featurize(sample, rng,
                   FeatureOptions{generator.noise_sigma, generator.canvas_width, generator.canvas_height},
                   zh_text_seen);
}

std::vector<Query> make_queries(std::span<const Sample> samples, std::uint64_t seed,
                                const GeneratorConfig& generator) {
  std::vector<Query> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(Query{observe(samples[i], i, seed, generator), samples[i]});
  }
  return out;
}

std::vector<SftExample> make_sft_examples(std::span<const Query> queries, const BinCoder& coder) {
  std::vector<SftExample> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(SftExample{q.obs, target_tokens(q.truth, coder)});
  return out;
}

SftRun run_sft(const Policy& initial, std::span<const SftExample> examples, std::size_t epochs,
               std::size_t batch_size, double learning_rate, std::uint64_t seed) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  SftRun run{initial, {}};
  run.nll_curve.push_back(sft_loss(run.policy, examples));
  Rng rng(seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<SftExample> batch;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
        batch.push_back(examples[order[i]]);
      }
      run.policy = sft_update(run.policy, batch, learning_rate).policy;
    }
    run.nll_curve.push_back(sft_loss(run.policy, examples));
  }
  return run;
}

RewardSummary sampled_reward(const Policy& policy, std::span<const Query> queries, const BinCoder& coder,
                             std::size_t samples_per_query, std::uint64_t seed) {
  RewardSummary s;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    Rng rng = substream(seed, kEvalSampleStream, q);
    for (std::size_t k = 0; k < samples_per_query; ++k) {
      const auto r = sample_response(policy, queries[q].obs, rng);
      add(s, reward_total(render_response(r.tokens, coder), queries[q].truth));
    }
  }
  scale(s, queries.size() * samples_per_query);
  return s;
}

RewardSummary greedy_reward(const Policy& policy, std::span<const Query> queries, const BinCoder& coder) {
  RewardSummary s;
  for (const auto& q : queries) {
    add(s, reward_total(render_response(greedy_response(policy, q.obs), coder), q.truth));
  }
  scale(s, queries.size());
  return s;
}

EvalRun evaluate_policy(const Policy& policy, std::span<const Sample> samples, std::uint64_t seed,
                        const GeneratorConfig& generator, const EvalOptions& options) {
  const BinCoder coder = generator.coder();
  EvalRun run;
  run.predictions.reserve(samples.size());

  std::vector<Category> pred_cats;
  std::vector<Category> gt_cats;
  std::vector<std::vector<BBox>> pred_boxes;
  std::vector<std::vector<BBox>> gt_boxes;
  std::vector<std::string> explanations;
  std::vector<std::optional<std::string>> refs;
  RewardSummary rewards;

  std::vector<std::string> zh_seen(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    zh_seen[i] = samples[i].zh_text;
    if (options.ocr_noise > 0.0) {
      Rng ocr = substream(seed, kOcrStream, i);
      zh_seen[i] = corrupt_text(samples[i].zh_text, options.ocr_noise, ocr);
    }
  }
  const auto contexts = retrieve_all(options, samples, zh_seen);

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& sample = samples[i];
    Prediction pred;
    pred.retrieval_degraded = contexts[i].degraded;
    pred.prompt = assemble_prompt(contexts[i], sample.id, sample.en_text, zh_seen[i]).flatten();

    // The toy policy conditions on features only; the prompt is not an input.
    const Observation obs = observe(sample, i, seed, generator,
                                    options.ocr_noise > 0.0 ? std::optional<std::string_view>(zh_seen[i])
                                                            : std::nullopt);
    pred.tokens = options.oracle ? target_tokens(sample, coder) : greedy_response(policy, obs);
    pred.text = render_response(pred.tokens, coder);
    pred.reward = reward_total(pred.text, sample);
    add(rewards, pred.reward);

    const Category category = category_from_index(pred.tokens.category_id);
    std::vector<BBox> boxes;
    if (category_has_region(category)) {
      const BBox box = coder.decode(pred.tokens.box_bins);
      if (box.is_valid()) boxes.push_back(box);
    }
    pred_cats.push_back(category);
    gt_cats.push_back(sample.category);
    pred_boxes.push_back(std::move(boxes));
    gt_boxes.push_back(sample.gt_boxes);

    const ParseOutcome parsed = parse_output(pred.text);
    const auto* out = std::get_if<StructuredOutput>(&parsed);
    explanations.push_back(out && out->think ? *out->think : std::string());
    refs.push_back(sample.explanation_ref);

    run.predictions.push_back(std::move(pred));
  }

  if (samples.empty()) return run;
  const TokenF1Scorer scorer;
  run.report = build_report(EvalInputs{pred_cats, gt_cats, pred_boxes, gt_boxes, explanations, refs}, scorer);
  scale(rewards, samples.size());
  run.report.format_rate = rewards.format;
  run.report.mean_reward = rewards.total;
  run.report.mean_cls_reward = rewards.cls;
  run.report.mean_loc_reward = rewards.loc;
  return run;
}

}  // namespace bimi
