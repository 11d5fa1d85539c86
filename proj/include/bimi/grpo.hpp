#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bimi/domain.hpp"
#include "bimi/policy.hpp"
#include "bimi/reward.hpp"
#include "bimi/rng.hpp"

namespace bimi {

enum class OldPolicyRefresh { EveryStep, EveryEpoch };
enum class KlMode { ExactPerHead, K3Estimator };

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double learning_rate = 1e-2;
  double std_floor = 1e-8;
  OldPolicyRefresh old_policy_refresh = OldPolicyRefresh::EveryStep;
  KlMode kl_mode = KlMode::ExactPerHead;
  /// Gradient steps taken on each sampled batch of groups.
  std::size_t inner_epochs = 1;

  /// Throws InvalidArgument on out-of-range values.
  void validate() const;
};

/// One sampled response within a group.
struct GroupMember {
  ResponseTokens tokens;
  std::string text;
  RewardBreakdown reward;
  double advantage = 0.0;
  double logp_old = 0.0;
  double logp_ref = 0.0;
};

struct Group {
  Observation query;
  std::vector<GroupMember> members;
};

/// A training query: the observation the policy sees and the record its
/// responses are scored against.
struct Query {
  Observation obs;
  Sample truth;
};

/// (r - mean) / popstd. All zeros when popstd < std_floor. Throws
/// InvalidArgument for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor);

/// min(s * A, clip(s, 1 - eps, 1 + eps) * A) with s = exp(logp_new - logp_old).
double clipped_surrogate(double logp_new, double logp_old, double advantage, double clip_epsilon);

/// Sum over heads of KL(policy || reference) at `obs`.
double kl_exact(const Policy& policy, const Policy& reference, const Observation& obs);
double kl_exact(const Policy& policy, const ReferencePolicy& reference, const Observation& obs);

/// r - ln r - 1 with r = exp(logp_ref - logp_cur).
double kl_k3_estimate(double logp_ref, double logp_cur);

/// Samples group_size responses for `query` from `old_policy`, renders and
/// scores them, and fills advantages and old/reference log-probabilities.
Group sample_group(const Policy& old_policy, const ReferencePolicy& reference, const Query& query,
                   const GrpoConfig& config, const BinCoder& coder, Rng& rng);

struct ObjectiveTerms {
  double objective = 0.0;
  double surrogate = 0.0;   // mean clipped surrogate
  double kl = 0.0;          // KL term before scaling by beta
  std::size_t clipped = 0;  // members whose clipped branch is active
};

/// (1/N) sum_i clipped_surrogate_i - beta * KL for one group under `policy`.
double grpo_objective(const Group& group, const GrpoConfig& config, const Policy& policy,
                      const ReferencePolicy& reference);

/// Mean of grpo_objective over `groups`. When `grad` is non-empty it
/// receives the analytic gradient of that mean.
ObjectiveTerms grpo_objective_terms(std::span<const Group> groups, const GrpoConfig& config,
                                    const Policy& policy, const ReferencePolicy& reference,
                                    std::span<double> grad = {});

struct StepStats {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_format = 0.0;
  double mean_cls = 0.0;
  double mean_loc = 0.0;
  double mean_abs_advantage = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  double objective = 0.0;
};

/// One log record: "step=... reward=... format=... cls=... loc=... kl=...
/// objective=... clip_frac=... mean_abs_adv=...".
std::string format_step_stats(const StepStats& stats);

struct StepResult {
  Policy policy;
  StepStats stats;
};

/// Samples groups for every query under `old_policy`, then applies
/// inner_epochs gradient-ascent steps on the objective starting at `policy`.
/// Each group member draws from its own substream of a base seed taken from
/// `rng`, so the result does not depend on processing order.
StepResult grpo_step(const Policy& policy, const Policy& old_policy, const ReferencePolicy& reference,
                     std::span<const Query> batch, const GrpoConfig& config, const BinCoder& coder,
                     Rng& rng);

/// Same with the old policy equal to `policy`.
StepResult grpo_step(const Policy& policy, const ReferencePolicy& reference,
                     std::span<const Query> batch, const GrpoConfig& config, const BinCoder& coder,
                     Rng& rng);

/// Training loop: reference snapshot at construction, per-epoch shuffled
/// query batches, and the configured old-policy refresh cadence.
class GrpoTrainer {
 public:
  GrpoTrainer(Policy initial, GrpoConfig config, BinCoder coder, std::uint64_t seed);

  /// Runs `steps` updates over `data` with `batch_size` queries per step.
  /// `on_step` is called after every step.
  void train(std::span<const Query> data, std::size_t steps, std::size_t batch_size,
             const std::function<void(const StepStats&)>& on_step = {});

  const Policy& policy() const { return policy_; }
  const ReferencePolicy& reference() const { return reference_; }

 private:
  Policy policy_;
  ReferencePolicy reference_;
  Policy old_policy_;
  GrpoConfig config_;
  BinCoder coder_;
  Rng rng_;
  std::size_t step_ = 0;
};

}  // namespace bimi
