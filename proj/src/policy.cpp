#include "bimi/policy.hpp"

#include <algorithm>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "bimi/error.hpp"
#include "bimi/parser.hpp"

namespace bimi {

namespace {

constexpr std::size_t idx(Head h) { return static_cast<std::size_t>(h); }

constexpr std::array<bool, kNumHeads> kAllHeadsMask = {true, true, true, true, true, true};

void check_obs(const Policy& policy, const Observation& obs) {
  if (obs.dim() != policy.shape().obs_dim) {
    throw InvalidArgument("observation dimension " + std::to_string(obs.dim()) +
                          " does not match policy dimension " +
                          std::to_string(policy.shape().obs_dim));
  }
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t sample_index(std::span<const double> log_probs, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (std::size_t k = 0; k < log_probs.size(); ++k) {
    cumulative += std::exp(log_probs[k]);
    if (u < cumulative) return k;
  }
  // u landed in the rounding slack above the last cumulative sum.
  for (std::size_t k = log_probs.size(); k-- > 0;) {
    if (std::isfinite(log_probs[k]) && std::exp(log_probs[k]) > 0.0) return k;
  }
  return log_probs.size() - 1;
}

void put_values(std::ostream& os, std::string_view key, std::span<const double> values) {
  os << key;
  char buf[40];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, " %.17g", v);
    os << buf;
  }
  os << '\n';
}

}  // namespace

std::string_view head_name(Head h) {
  switch (h) {
    case Head::Template: return "template";
    case Head::Category: return "category";
    case Head::XMin: return "x_min";
    case Head::YMin: return "y_min";
    case Head::XMax: return "x_max";
    case Head::YMax: return "y_max";
  }
  return "?";
}

std::size_t ResponseTokens::token(Head h) const {
  switch (h) {
    case Head::Template: return template_id;
    case Head::Category: return category_id;
    case Head::XMin: return box_bins[0];
    case Head::YMin: return box_bins[1];
    case Head::XMax: return box_bins[2];
    case Head::YMax: return box_bins[3];
  }
  return 0;
}

std::size_t PolicyShape::head_size(Head h) const {
  switch (h) {
    case Head::Template: return template_count;
    case Head::Category: return kNumCategories;
    default: return bins;
  }
}

Policy::Policy(PolicyShape shape, std::uint64_t seed) : shape_(shape), seed_(seed) {
  std::size_t offset = 0;
  for (Head h : kAllHeads) {
    offsets_[idx(h)] = offset;
    offset += shape_.head_size(h) * (shape_.obs_dim + 1);
  }
  params_.assign(offset, 0.0);
}

std::size_t Policy::bias_offset(Head h) const {
  return weight_offset(h) + shape_.head_size(h) * shape_.obs_dim;
}

void Policy::logits(Head h, const Observation& obs, std::span<double> out) const {
  const std::size_t d = shape_.obs_dim;
  const double* w = params_.data() + weight_offset(h);
  const double* b = params_.data() + bias_offset(h);
  for (std::size_t k = 0; k < out.size(); ++k) {
    double z = b[k];
    for (std::size_t j = 0; j < d; ++j) z += w[k * d + j] * obs.features[j];
    out[k] = z;
  }
}

void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double log_norm = m + std::log(sum);
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - log_norm;
}

Policy init_policy(std::uint64_t seed, std::size_t obs_dim, std::size_t template_count,
                   std::size_t bins, double scale) {
  if (obs_dim == 0) throw InvalidArgument("observation dimension must be positive");
  if (template_count < 2) throw InvalidArgument("template head needs at least 2 entries");
  if (bins < 2) throw InvalidArgument("box heads need at least 2 bins");
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("init scale must be finite and >= 0");

  Policy policy(PolicyShape{obs_dim, template_count, bins}, seed);
  Rng rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& p : policy.params()) p = scale == 0.0 ? 0.0 : dist(rng);
  return policy;
}

HeadLogProbs head_log_probs(const Policy& policy, const Observation& obs) {
  check_obs(policy, obs);
  HeadLogProbs out;
  std::vector<double> z;
  for (Head h : kAllHeads) {
    z.resize(policy.shape().head_size(h));
    policy.logits(h, obs, z);
    auto& lp = out.log_probs[idx(h)];
    lp.resize(z.size());
    log_softmax(z, lp);
  }
  return out;
}

void check_tokens(const PolicyShape& shape, const ResponseTokens& tokens) {
  for (Head h : kAllHeads) {
    if (tokens.token(h) >= shape.head_size(h)) {
      throw InvalidArgument("token for head " + std::string(head_name(h)) + " out of range");
    }
  }
}

SampledResponse sample_response(const Policy& policy, const Observation& obs, Rng& rng) {
  const HeadLogProbs lp = head_log_probs(policy, obs);
  SampledResponse out;
  out.tokens.template_id = sample_index(lp[Head::Template], rng);
  out.tokens.category_id = sample_index(lp[Head::Category], rng);
  out.tokens.box_bins[0] = sample_index(lp[Head::XMin], rng);
  out.tokens.box_bins[1] = sample_index(lp[Head::YMin], rng);
  out.tokens.box_bins[2] = sample_index(lp[Head::XMax], rng);
  out.tokens.box_bins[3] = sample_index(lp[Head::YMax], rng);
  for (Head h : kAllHeads) out.logprob += lp[h][out.tokens.token(h)];
  return out;
}

ResponseTokens greedy_response(const Policy& policy, const Observation& obs) {
  const HeadLogProbs lp = head_log_probs(policy, obs);
  ResponseTokens t;
  t.template_id = argmax(lp[Head::Template]);
  t.category_id = argmax(lp[Head::Category]);
  t.box_bins = {argmax(lp[Head::XMin]), argmax(lp[Head::YMin]), argmax(lp[Head::XMax]),
                argmax(lp[Head::YMax])};
  return t;
}

double response_logprob(const Policy& policy, const Observation& obs, const ResponseTokens& tokens) {
  check_tokens(policy.shape(), tokens);
  const HeadLogProbs lp = head_log_probs(policy, obs);
  double total = 0.0;
  for (Head h : kAllHeads) total += lp[h][tokens.token(h)];
  return total;
}

void accumulate_logprob_gradient(const Policy& policy, const Observation& obs,
                                 const ResponseTokens& tokens, double coeff, std::span<double> grad,
                                 const std::array<bool, kNumHeads>& head_mask) {
  check_tokens(policy.shape(), tokens);
  const HeadLogProbs lp = head_log_probs(policy, obs);
  const std::size_t d = policy.shape().obs_dim;
  for (Head h : kAllHeads) {
    if (!head_mask[idx(h)]) continue;
    double* gw = grad.data() + policy.weight_offset(h);
    double* gb = grad.data() + policy.bias_offset(h);
    const auto probs = lp[h];
    const std::size_t target = tokens.token(h);
    for (std::size_t k = 0; k < probs.size(); ++k) {
      // d log p_target / d z_k = [k == target] - p_k
      const double dz = coeff * ((k == target ? 1.0 : 0.0) - std::exp(probs[k]));
      gb[k] += dz;
      for (std::size_t j = 0; j < d; ++j) gw[k * d + j] += dz * obs.features[j];
    }
  }
}

double BinCoder::decode_x(std::size_t bin) const {
  return (static_cast<double>(bin) + 0.5) * width / static_cast<double>(bins);
}

double BinCoder::decode_y(std::size_t bin) const {
  return (static_cast<double>(bin) + 0.5) * height / static_cast<double>(bins);
}

std::size_t BinCoder::encode_x(double x) const {
  const double b = std::floor(x / width * static_cast<double>(bins));
  return static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(bins - 1)));
}

std::size_t BinCoder::encode_y(double y) const {
  const double b = std::floor(y / height * static_cast<double>(bins));
  return static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(bins - 1)));
}

BBox BinCoder::decode(const std::array<std::size_t, 4>& b) const {
  return BBox{decode_x(b[0]), decode_y(b[1]), decode_x(b[2]), decode_y(b[3])};
}

std::array<std::size_t, 4> BinCoder::encode(const BBox& box) const {
  return {encode_x(box.x_min), encode_y(box.y_min), encode_x(box.x_max), encode_y(box.y_max)};
}

std::string render_response(const ResponseTokens& tokens, const BinCoder& coder) {
  const Category category = category_from_index(tokens.category_id);
  const std::string label(category_label(category));
  if (tokens.template_id != 0) {
    // Unterminated answer block.
    return "<answer>{\"classification\": \"" + label + "\", \"region\": []}";
  }
  StructuredOutput out;
  out.category = category;
  if (category_has_region(category)) {
    const BBox box = coder.decode(tokens.box_bins);
    if (!box.is_valid()) {
      return "<answer>{\"classification\": \"" + label + "\", \"region\": [{\"bbox\": [" +
             format_coordinate(box.x_min) + ", " + format_coordinate(box.y_min) + ", " +
             format_coordinate(box.x_max) + ", " + format_coordinate(box.y_max) + "]}]}</answer>";
    }
    out.boxes.push_back(box);
  }
  return render_output(out);
}

double sft_loss(const Policy& policy, std::span<const SftExample> batch, std::span<double> grad) {
  if (batch.empty()) return 0.0;
  if (!grad.empty()) {
    if (grad.size() != policy.param_count()) throw InvalidArgument("gradient size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    check_obs(policy, ex.obs);
    check_tokens(policy.shape(), ex.target);
    const bool boxes = category_has_region(category_from_index(ex.target.category_id));
    const std::array<bool, kNumHeads> mask = {true, true, boxes, boxes, boxes, boxes};
    const HeadLogProbs lp = head_log_probs(policy, ex.obs);
    for (Head h : kAllHeads) {
      if (mask[idx(h)]) total -= lp[h][ex.target.token(h)];
    }
    if (!grad.empty()) accumulate_logprob_gradient(policy, ex.obs, ex.target, -inv_n, grad, mask);
  }
  return total * inv_n;
}

SftResult sft_update(const Policy& policy, std::span<const SftExample> batch, double learning_rate) {
  if (!(learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  SftResult result{policy, 0.0};
  std::vector<double> grad(policy.param_count(), 0.0);
  result.mean_nll = sft_loss(policy, batch, grad);
  if (learning_rate > 0.0) {
    auto params = result.policy.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grad[i];
  }
  return result;
}

ReferencePolicy snapshot_reference(const Policy& policy) { return ReferencePolicy(policy); }

std::uint64_t shape_hash(const PolicyShape& shape) {
  const std::string key = "obs_dim=" + std::to_string(shape.obs_dim) +
                          ";template_count=" + std::to_string(shape.template_count) +
                          ";bins=" + std::to_string(shape.bins) + ";categories=6";
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string checkpoint_text(const Policy& policy) {
  std::ostringstream os;
  const PolicyShape& s = policy.shape();
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(shape_hash(s)));
  os << "bimi-policy 1\n"
     << "seed " << policy.seed() << '\n'
     << "obs_dim " << s.obs_dim << '\n'
     << "template_count " << s.template_count << '\n'
     << "bins " << s.bins << '\n'
     << "config_hash " << hash << '\n';
  const auto params = policy.params();
  for (Head h : kAllHeads) {
    const std::size_t k = s.head_size(h);
    os << "head " << head_name(h) << ' ' << k << ' ' << s.obs_dim << '\n';
    put_values(os, "weights", params.subspan(policy.weight_offset(h), k * s.obs_dim));
    put_values(os, "bias", params.subspan(policy.bias_offset(h), k));
  }
  return os.str();
}

void save_checkpoint(const Policy& policy, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << checkpoint_text(policy);
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Policy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());

  const std::string where = "checkpoint " + path.string() + ": ";
  std::string line;
  auto next_fields = [&](std::string_view key) {
    if (!std::getline(in, line)) throw ValidationError(where + "truncated before '" + std::string(key) + "'");
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    if (word != key) throw ValidationError(where + "expected '" + std::string(key) + "', got '" + word + "'");
    return fields;
  };
  auto read_u64 = [&](std::string_view key) {
    auto fields = next_fields(key);
    std::uint64_t v = 0;
    if (!(fields >> v)) throw ValidationError(where + "bad value for " + std::string(key));
    return v;
  };

  if (read_u64("bimi-policy") != 1) throw ValidationError(where + "unsupported format version");
  const std::uint64_t seed = read_u64("seed");
  PolicyShape shape;
  shape.obs_dim = read_u64("obs_dim");
  shape.template_count = read_u64("template_count");
  shape.bins = read_u64("bins");
  if (shape.obs_dim == 0 || shape.template_count < 2 || shape.bins < 2) {
    throw ValidationError(where + "invalid head shapes");
  }
  {
    auto fields = next_fields("config_hash");
    std::string hex;
    fields >> hex;
    if (std::stoull(hex, nullptr, 16) != shape_hash(shape)) {
      throw ValidationError(where + "config hash does not match head shapes");
    }
  }

  Policy policy(shape, seed);
  auto params = policy.params();
  auto read_block = [&](std::string_view key, std::span<double> dst) {
    auto fields = next_fields(key);
    for (double& v : dst) {
      std::string token;
      if (!(fields >> token)) throw ValidationError(where + "short " + std::string(key) + " block");
      char* end = nullptr;
      v = std::strtod(token.c_str(), &end);
      if (*end != '\0' || !std::isfinite(v)) throw ValidationError(where + "bad number '" + token + "'");
    }
    std::string extra;
    if (fields >> extra) throw ValidationError(where + "long " + std::string(key) + " block");
  };
  for (Head h : kAllHeads) {
    auto fields = next_fields("head");
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    fields >> name >> rows >> cols;
    if (name != head_name(h) || rows != shape.head_size(h) || cols != shape.obs_dim) {
      throw ValidationError(where + "unexpected head header '" + line + "'");
    }
    read_block("weights", params.subspan(policy.weight_offset(h), rows * cols));
    read_block("bias", params.subspan(policy.bias_offset(h), rows));
  }
  return policy;
}

}  // namespace bimi
