#include "bimi/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "bimi/error.hpp"

namespace bimi {

namespace {

constexpr std::uint64_t kGroupStream = 0x67727030;  // "grp0"

// Gradient of sum_h KL(softmax(z_h) || softmax(z_ref_h)) w.r.t. the policy
// parameters, scaled by `coeff` and added into `grad`. Returns the KL.
double accumulate_kl_gradient(const Policy& policy, const Policy& reference, const Observation& obs,
                              double coeff, std::span<double> grad) {
  const HeadLogProbs lp = head_log_probs(policy, obs);
  const HeadLogProbs lq = head_log_probs(reference, obs);
  const std::size_t d = policy.shape().obs_dim;
  double total = 0.0;
  std::vector<double> p;
  for (Head h : kAllHeads) {
    const auto log_p = lp[h];
    const auto log_q = lq[h];
    p.resize(log_p.size());
    double kl = 0.0;
    for (std::size_t k = 0; k < log_p.size(); ++k) {
      p[k] = std::exp(log_p[k]);
      if (p[k] > 0.0) kl += p[k] * (log_p[k] - log_q[k]);
    }
    total += kl;
    if (grad.empty() || coeff == 0.0) continue;
    double* gw = grad.data() + policy.weight_offset(h);
    double* gb = grad.data() + policy.bias_offset(h);
    for (std::size_t k = 0; k < log_p.size(); ++k) {
      // d KL / d z_k = p_k * (log p_k - log q_k - KL)
      const double dz = p[k] > 0.0 ? coeff * p[k] * (log_p[k] - log_q[k] - kl) : 0.0;
      gb[k] += dz;
      for (std::size_t j = 0; j < d; ++j) gw[k * d + j] += dz * obs.features[j];
    }
  }
  return std::max(total, 0.0);
}

// True when min(s A, clip(s) A) picks the unclipped branch (ties included),
// i.e. the term still depends on the policy.
bool surrogate_unclipped(double ratio, double advantage, double eps) {
  if (advantage > 0.0) return ratio <= 1.0 + eps;
  if (advantage < 0.0) return ratio >= 1.0 - eps;
  return true;
}

void check_shapes(const Policy& policy, const Policy& reference) {
  if (!(policy.shape() == reference.shape())) throw InvalidArgument("policy and reference head shapes differ");
}

}  // namespace

void GrpoConfig::validate() const {
  if (group_size < 2) throw InvalidArgument("group_size must be >= 2");
  if (!(clip_epsilon > 0.0)) throw InvalidArgument("clip_epsilon must be > 0");
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) throw InvalidArgument("kl_beta must be finite and >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be > 0");
  if (!(std_floor > 0.0)) throw InvalidArgument("std_floor must be > 0");
  if (inner_epochs < 1) throw InvalidArgument("inner_epochs must be >= 1");
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) throw InvalidArgument("advantages need a group of at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);

  std::vector<double> adv(rewards.size(), 0.0);
  if (!(sd >= std_floor)) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

double clipped_surrogate(double logp_new, double logp_old, double advantage, double clip_epsilon) {
  const double ratio = std::exp(logp_new - logp_old);
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_exact(const Policy& policy, const Policy& reference, const Observation& obs) {
  check_shapes(policy, reference);
  return accumulate_kl_gradient(policy, reference, obs, 0.0, {});
}

double kl_exact(const Policy& policy, const ReferencePolicy& reference, const Observation& obs) {
  return kl_exact(policy, reference.policy(), obs);
}

double kl_k3_estimate(double logp_ref, double logp_cur) {
  const double log_ratio = logp_ref - logp_cur;
  // expm1 keeps r - ln r - 1 accurate (and non-negative) near r = 1.
  return std::max(std::expm1(log_ratio) - log_ratio, 0.0);
}

Group sample_group(const Policy& old_policy, const ReferencePolicy& reference, const Query& query,
                   const GrpoConfig& config, const BinCoder& coder, Rng& rng) {
  Group group;
  group.query = query.obs;
  group.members.resize(config.group_size);
  std::vector<double> rewards(config.group_size);
  for (std::size_t i = 0; i < config.group_size; ++i) {
    GroupMember& m = group.members[i];
    const SampledResponse s = sample_response(old_policy, query.obs, rng);
    m.tokens = s.tokens;
    m.logp_old = s.logprob;
    m.logp_ref = response_logprob(reference.policy(), query.obs, s.tokens);
    m.text = render_response(s.tokens, coder);
    m.reward = reward_total(m.text, query.truth);
    rewards[i] = m.reward.total;
  }
  const auto adv = group_advantages(rewards, config.std_floor);
  for (std::size_t i = 0; i < config.group_size; ++i) group.members[i].advantage = adv[i];
  return group;
}

ObjectiveTerms grpo_objective_terms(std::span<const Group> groups, const GrpoConfig& config,
                                    const Policy& policy, const ReferencePolicy& reference,
                                    std::span<double> grad) {
  check_shapes(policy, reference.policy());
  if (!grad.empty()) {
    if (grad.size() != policy.param_count()) throw InvalidArgument("gradient size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  ObjectiveTerms terms;
  if (groups.empty()) return terms;
  const double inv_groups = 1.0 / static_cast<double>(groups.size());
  const double beta = config.kl_beta;

  for (const Group& group : groups) {
    if (group.members.empty()) throw InvalidArgument("empty group");
    const double inv_n = 1.0 / static_cast<double>(group.members.size());
    double surrogate = 0.0;
    double kl = 0.0;
    for (const GroupMember& m : group.members) {
      const double logp = response_logprob(policy, group.query, m.tokens);
      const double ratio = std::exp(logp - m.logp_old);
      surrogate += clipped_surrogate(logp, m.logp_old, m.advantage, config.clip_epsilon);
      const bool live = surrogate_unclipped(ratio, m.advantage, config.clip_epsilon);
      if (!live) ++terms.clipped;

      double coeff = live ? m.advantage * ratio : 0.0;
      if (config.kl_mode == KlMode::K3Estimator) {
        kl += kl_k3_estimate(m.logp_ref, logp);
        // d k3 / d logp = 1 - exp(logp_ref - logp)
        coeff -= beta * (1.0 - std::exp(m.logp_ref - logp));
      }
      if (!grad.empty() && coeff != 0.0) {
        accumulate_logprob_gradient(policy, group.query, m.tokens, coeff * inv_n * inv_groups, grad);
      }
    }
    surrogate *= inv_n;
    if (config.kl_mode == KlMode::K3Estimator) {
      kl *= inv_n;
    } else {
      kl = accumulate_kl_gradient(policy, reference.policy(), group.query, -beta * inv_groups, grad);
    }
    terms.surrogate += surrogate * inv_groups;
    terms.kl += kl * inv_groups;
    terms.objective += (surrogate - beta * kl) * inv_groups;
  }
  return terms;
}

double grpo_objective(const Group& group, const GrpoConfig& config, const Policy& policy,
                      const ReferencePolicy& reference) {
  return grpo_objective_terms(std::span<const Group>(&group, 1), config, policy, reference).objective;
}

std::string format_step_stats(const StepStats& s) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "step=%zu reward=%.9g format=%.9g cls=%.9g loc=%.9g kl=%.9g objective=%.9g "
                "clip_frac=%.9g mean_abs_adv=%.9g",
                s.step, s.mean_reward, s.mean_format, s.mean_cls, s.mean_loc, s.kl, s.objective,
                s.clip_fraction, s.mean_abs_advantage);
  return buf;
}

StepResult grpo_step(const Policy& policy, const Policy& old_policy, const ReferencePolicy& reference,
                     std::span<const Query> batch, const GrpoConfig& config, const BinCoder& coder,
                     Rng& rng) {
  config.validate();
  check_shapes(policy, old_policy);
  check_shapes(policy, reference.policy());

  const std::uint64_t base = rng();
  std::vector<Group> groups;
  groups.reserve(batch.size());
  for (std::size_t q = 0; q < batch.size(); ++q) {
    Rng member_rng = substream(base, kGroupStream, q);
    groups.push_back(sample_group(old_policy, reference, batch[q], config, coder, member_rng));
  }

  StepResult result{policy, {}};
  StepStats& stats = result.stats;
  std::size_t members = 0;
  for (const Group& g : groups) {
    for (const GroupMember& m : g.members) {
      stats.mean_reward += m.reward.total;
      stats.mean_format += m.reward.format;
      stats.mean_cls += m.reward.cls;
      stats.mean_loc += m.reward.loc;
      stats.mean_abs_advantage += std::abs(m.advantage);
      ++members;
    }
  }
  if (members > 0) {
    const double inv = 1.0 / static_cast<double>(members);
    stats.mean_reward *= inv;
    stats.mean_format *= inv;
    stats.mean_cls *= inv;
    stats.mean_loc *= inv;
    stats.mean_abs_advantage *= inv;
  }

  std::vector<double> grad(policy.param_count(), 0.0);
  std::size_t clipped = 0;
  for (std::size_t epoch = 0; epoch < config.inner_epochs; ++epoch) {
    const ObjectiveTerms terms = grpo_objective_terms(groups, config, result.policy, reference, grad);
    if (epoch == 0) {
      stats.objective = terms.objective;
      stats.kl = terms.kl;
    }
    clipped += terms.clipped;
    auto params = result.policy.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += config.learning_rate * grad[i];
  }
  if (members > 0) {
    stats.clip_fraction = static_cast<double>(clipped) /
                          static_cast<double>(members * config.inner_epochs);
  }
  return result;
}

StepResult grpo_step(const Policy& policy, const ReferencePolicy& reference,
                     std::span<const Query> batch, const GrpoConfig& config, const BinCoder& coder,
                     Rng& rng) {
  return grpo_step(policy, policy, reference, batch, config, coder, rng);
}

GrpoTrainer::GrpoTrainer(Policy initial, GrpoConfig config, BinCoder coder, std::uint64_t seed)
    : policy_(initial),
      reference_(snapshot_reference(initial)),
      old_policy_(initial),
      config_(config),
      coder_(coder),
      rng_(seed) {
  config_.validate();
}

void GrpoTrainer::train(std::span<const Query> data, std::size_t steps, std::size_t batch_size,
                        const std::function<void(const StepStats&)>& on_step) {
  if (steps == 0) return;
  if (data.empty()) throw InvalidArgument("GRPO training needs at least one query");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();  // forces a shuffle on the first step
  std::vector<Query> batch;
  for (std::size_t s = 0; s < steps; ++s) {
    batch.clear();
    bool new_epoch = false;
    while (batch.size() < batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng_);
        cursor = 0;
        new_epoch = true;
      }
      batch.push_back(data[order[cursor++]]);
    }
    if (config_.old_policy_refresh == OldPolicyRefresh::EveryStep ||
        (new_epoch && config_.old_policy_refresh == OldPolicyRefresh::EveryEpoch)) {
      old_policy_ = policy_;
    }
    StepResult r = grpo_step(policy_, old_policy_, reference_, batch, config_, coder_, rng_);
    policy_ = std::move(r.policy);
    r.stats.step = ++step_;
    if (on_step) on_step(r.stats);
  }
}

}  // namespace bimi
