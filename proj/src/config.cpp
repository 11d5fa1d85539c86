#include "bimi/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "bimi/error.hpp"

namespace bimi {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(ws) - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw InvalidArgument("bad value for '" + std::string(key) + "': '" + std::string(value) + "'");
}

template <typename T>
T parse_integer(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value);
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  const std::string s(value);
  if (s == "inf" || s == "+inf") return INFINITY;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || std::isnan(v)) bad_value(key, value);
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

template <typename T>
Setter integer(T RunConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { c.*field = parse_integer<T>(k, v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"seed", [](RunConfig& c, auto k, auto v) { c.set_seed(parse_integer<std::uint64_t>(k, v)); }},
      {"n", integer(&RunConfig::n)},
      {"p_clean", [](RunConfig& c, auto k, auto v) { c.generator.p_clean = parse_real(k, v); }},
      {"noise_sigma", [](RunConfig& c, auto k, auto v) { c.generator.noise_sigma = parse_real(k, v); }},
      {"canvas_width", [](RunConfig& c, auto k, auto v) { c.generator.canvas_width = parse_real(k, v); }},
      {"canvas_height", [](RunConfig& c, auto k, auto v) { c.generator.canvas_height = parse_real(k, v); }},
      {"box_min_extent", [](RunConfig& c, auto k, auto v) { c.generator.box_min_extent = parse_real(k, v); }},
      {"box_max_extent", [](RunConfig& c, auto k, auto v) { c.generator.box_max_extent = parse_real(k, v); }},
      {"multi_box", [](RunConfig& c, auto k, auto v) { c.generator.multi_box = parse_bool(k, v); }},
      {"max_boxes", [](RunConfig& c, auto k, auto v) { c.generator.max_boxes = parse_integer<std::size_t>(k, v); }},
      {"bins", [](RunConfig& c, auto k, auto v) { c.generator.bins = parse_integer<std::size_t>(k, v); }},
      {"template_count", integer(&RunConfig::template_count)},
      {"init_scale", [](RunConfig& c, auto k, auto v) { c.init_scale = parse_real(k, v); }},
      {"sft_epochs", integer(&RunConfig::sft_epochs)},
      {"sft_batch_size", integer(&RunConfig::sft_batch_size)},
      {"sft_learning_rate", [](RunConfig& c, auto k, auto v) { c.sft_learning_rate = parse_real(k, v); }},
      {"group_size", [](RunConfig& c, auto k, auto v) { c.grpo.group_size = parse_integer<std::size_t>(k, v); }},
      {"clip_epsilon", [](RunConfig& c, auto k, auto v) { c.grpo.clip_epsilon = parse_real(k, v); }},
      {"kl_beta", [](RunConfig& c, auto k, auto v) { c.grpo.kl_beta = parse_real(k, v); }},
      {"learning_rate", [](RunConfig& c, auto k, auto v) { c.grpo.learning_rate = parse_real(k, v); }},
      {"std_floor", [](RunConfig& c, auto k, auto v) { c.grpo.std_floor = parse_real(k, v); }},
      {"inner_epochs", [](RunConfig& c, auto k, auto v) { c.grpo.inner_epochs = parse_integer<std::size_t>(k, v); }},
      {"old_policy_refresh",
       [](RunConfig& c, auto k, auto v) {
         if (v == "every_step") c.grpo.old_policy_refresh = OldPolicyRefresh::EveryStep;
         else if (v == "every_epoch") c.grpo.old_policy_refresh = OldPolicyRefresh::EveryEpoch;
         else bad_value(k, v);
       }},
      {"kl_mode",
       [](RunConfig& c, auto k, auto v) {
         if (v == "exact") c.grpo.kl_mode = KlMode::ExactPerHead;
         else if (v == "k3") c.grpo.kl_mode = KlMode::K3Estimator;
         else bad_value(k, v);
       }},
      {"steps", integer(&RunConfig::steps)},
      {"batch_size", integer(&RunConfig::batch_size)},
      {"retriever",
       [](RunConfig& c, auto k, auto v) {
         if (v == "none") c.retriever = RetrieverKind::None;
         else if (v == "fixture") c.retriever = RetrieverKind::Fixture;
         else if (v == "timeout") c.retriever = RetrieverKind::Timeout;
         else if (v == "http") c.retriever = RetrieverKind::Http;
         else bad_value(k, v);
       }},
      {"retriever_url", [](RunConfig& c, auto, auto v) { c.retriever_url = std::string(v); }},
      {"deadline_ms", integer(&RunConfig::deadline_ms)},
      {"ocr_noise", [](RunConfig& c, auto k, auto v) { c.ocr_noise = parse_real(k, v); }},
      {"oracle", [](RunConfig& c, auto k, auto v) { c.oracle = parse_bool(k, v); }},
      {"manifest", [](RunConfig& c, auto, auto v) { c.manifest = std::string(v); }},
      {"out", [](RunConfig& c, auto, auto v) { c.out = std::string(v); }},
      {"checkpoint", [](RunConfig& c, auto, auto v) { c.checkpoint = std::string(v); }},
      {"log", [](RunConfig& c, auto, auto v) { c.log = std::string(v); }},
      {"fixtures", [](RunConfig& c, auto, auto v) { c.fixtures = std::string(v); }},
      {"predictions", [](RunConfig& c, auto, auto v) { c.predictions = std::string(v); }},
      {"prompts", [](RunConfig& c, auto, auto v) { c.prompts = std::string(v); }},
  };
  return table;
}

}  // namespace

void RunConfig::apply(std::string_view key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw InvalidArgument("unknown config key '" + std::string(key) + "'");
  it->second(*this, key, trim(value));
}

void RunConfig::validate() const {
  generator.validate();
  grpo.validate();
  if (template_count < 2) throw InvalidArgument("template_count must be >= 2");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw InvalidArgument("init_scale must be >= 0");
  if (sft_batch_size == 0 || batch_size == 0) throw InvalidArgument("batch sizes must be positive");
  if (!(sft_learning_rate >= 0.0) || !std::isfinite(sft_learning_rate)) {
    throw InvalidArgument("sft_learning_rate must be >= 0");
  }
  if (deadline_ms <= 0) throw InvalidArgument("deadline_ms must be positive");
  if (!(ocr_noise >= 0.0 && ocr_noise <= 1.0)) throw InvalidArgument("ocr_noise must be in [0, 1]");
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::string raw;
  std::size_t number = 0;
  while (std::getline(in, raw)) {
    ++number;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      base.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return base;
}

std::string_view retriever_name(RetrieverKind kind) {
  switch (kind) {
    case RetrieverKind::None: return "none";
    case RetrieverKind::Fixture: return "fixture";
    case RetrieverKind::Timeout: return "timeout";
    case RetrieverKind::Http: return "http";
  }
  return "?";
}

}  // namespace bimi
