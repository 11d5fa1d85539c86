#include "bimi/commands.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <variant>

#include "bimi/context.hpp"
#include "bimi/error.hpp"
#include "bimi/parser.hpp"
#include "bimi/pipeline.hpp"

namespace bimi {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  return f;
}

void require_path(const std::filesystem::path& p, std::string_view flag) {
  if (p.empty()) throw InvalidArgument("missing required --" + std::string(flag));
}

std::filesystem::path with_suffix(const std::filesystem::path& base, std::string_view suffix) {
  return std::filesystem::path(base.string() + std::string(suffix));
}

Policy initial_policy(const RunConfig& c) {
  if (!c.checkpoint.empty()) return load_checkpoint(c.checkpoint);
  return init_policy(c.seed(), kObservationDim, c.template_count, c.generator.bins, c.init_scale);
}

void check_policy_fits(const Policy& policy, const RunConfig& c) {
  if (policy.shape().obs_dim != kObservationDim || policy.shape().bins != c.generator.bins) {
    throw ValidationError("checkpoint shape does not match the configured observation size or bins");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::shared_ptr<const RetrieverClient> make_retriever(const RunConfig& c) {
  switch (c.retriever) {
    case RetrieverKind::None: return nullptr;
    case RetrieverKind::Fixture:
      require_path(c.fixtures, "fixtures");
      return std::make_shared<FixtureRetriever>(FixtureRetriever::from_file(c.fixtures));
    case RetrieverKind::Timeout: return std::make_shared<TimeoutRetriever>();
    case RetrieverKind::Http:
      if (c.retriever_url.empty()) throw InvalidArgument("retriever http needs retriever_url");
      return std::make_shared<HttpRetriever>(c.retriever_url);
  }
  return nullptr;
}

std::string describe(const StructuredOutput& o) {
  nlohmann::ordered_json rec;
  rec["think"] = o.think ? nlohmann::ordered_json(*o.think) : nullptr;
  rec["classification"] = category_label(o.category);
  rec["region"] = nlohmann::ordered_json::array();
  for (const auto& b : o.boxes) rec["region"].push_back({{"bbox", {b.x_min, b.y_min, b.x_max, b.y_max}}});
  return rec.dump(2);
}

}  // namespace

int cmd_gen_data(const RunConfig& c, std::ostream& out) {
  c.validate();
  require_path(c.out, "out");
  const auto data = generate_dataset(c.generator, c.n);
  std::vector<Sample> samples;
  samples.reserve(data.size());
  std::size_t clean = 0;
  for (const auto& t : data) {
    clean += t.sample.category == Category::AllConsistent ? 1 : 0;
    samples.push_back(t.sample);
  }
  write_manifest(samples, c.out);
  out << "wrote " << samples.size() << " samples to " << c.out.string() << " (clean "
      << clean << ")\n";
  return kExitOk;
}

int cmd_sft(const RunConfig& c, std::ostream& out) {
  c.validate();
  require_path(c.manifest, "manifest");
  require_path(c.out, "out");
  const auto samples = load_manifest(c.manifest);
  const Policy start = initial_policy(c);
  check_policy_fits(start, c);
  const auto queries = make_queries(samples, c.seed(), c.generator);
  const auto examples = make_sft_examples(queries, c.generator.coder());
  const SftRun run = run_sft(start, examples, c.sft_epochs, c.sft_batch_size, c.sft_learning_rate, c.seed());

  save_checkpoint(run.policy, c.out);
  const auto curve_path = c.log.empty() ? with_suffix(c.out, ".nll") : c.log;
  auto curve = open_output(curve_path);
  for (std::size_t e = 0; e < run.nll_curve.size(); ++e) curve << "epoch=" << e << " nll=" << fmt(run.nll_curve[e]) << '\n';
  out << "sft: " << examples.size() << " examples, nll " << fmt(run.nll_curve.front()) << " -> "
      << fmt(run.nll_curve.back()) << '\n';
  return kExitOk;
}

int cmd_train_grpo(const RunConfig& c, std::ostream& out) {
  c.validate();
  require_path(c.manifest, "manifest");
  require_path(c.out, "out");
  const auto samples = load_manifest(c.manifest);
  const Policy start = initial_policy(c);
  check_policy_fits(start, c);
  const auto queries = make_queries(samples, c.seed(), c.generator);

  auto log = open_output(c.log.empty() ? with_suffix(c.out, ".log") : c.log);
  GrpoTrainer trainer(start, c.grpo, c.generator.coder(), c.seed());
  StepStats last;
  trainer.train(queries, c.steps, c.batch_size, [&](const StepStats& s) {
    log << format_step_stats(s) << '\n';
    last = s;
  });
  save_checkpoint(trainer.policy(), c.out);
  out << "train-grpo: " << c.steps << " steps";
  if (c.steps > 0) out << ", last " << format_step_stats(last);
  out << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  c.validate();
  require_path(c.manifest, "manifest");
  if (!c.oracle) require_path(c.checkpoint, "checkpoint");
  const auto samples = load_manifest(c.manifest);
  if (samples.empty()) throw ValidationError("cannot evaluate an empty manifest");
  Policy policy = c.oracle ? init_policy(c.seed(), kObservationDim, c.template_count, c.generator.bins, 0.0)
                           : load_checkpoint(c.checkpoint);
  check_policy_fits(policy, c);

  EvalOptions options;
  options.retriever = make_retriever(c);
  options.deadline = std::chrono::milliseconds(c.deadline_ms);
  options.ocr_noise = c.ocr_noise;
  options.oracle = c.oracle;
  const EvalRun run = evaluate_policy(policy, samples, c.seed(), c.generator, options);

  std::ostringstream report;
  report << run.report.to_key_value() << '\n' << run.report.confusion_table() << '\n' << run.report.to_json() << '\n';
  out << report.str();
  if (!c.out.empty()) open_output(c.out) << report.str();
  if (!c.predictions.empty()) {
    auto f = open_output(c.predictions);
    for (std::size_t i = 0; i < samples.size(); ++i) f << samples[i].id << '\t' << run.predictions[i].text << '\n';
  }
  if (!c.prompts.empty()) {
    auto f = open_output(c.prompts);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      f << "### " << samples[i].id << (run.predictions[i].retrieval_degraded ? " degraded" : "") << '\n'
        << run.predictions[i].prompt << '\n';
    }
  }
  return kExitOk;
}

int cmd_parse(std::span<const std::string> inputs, std::ostream& out) {
  int code = kExitOk;
  for (const auto& text : inputs) {
    const ParseOutcome outcome = parse_output(text);
    if (const auto* o = std::get_if<StructuredOutput>(&outcome)) {
      out << "valid\n" << describe(*o) << '\n';
    } else {
      out << "invalid " << format_failure_name(std::get<FormatFailure>(outcome)) << '\n';
      code = kExitInvalid;
    }
  }
  return code;
}

int cmd_demo_retrieve(const RunConfig& c, const std::string& en_text, const std::string& zh_text,
                      const std::string& image_ref, std::ostream& out) {
  c.validate();
  const std::string query = build_query(en_text, zh_text);
  auto client = make_retriever(c);
  RetrievedContext ctx;
  ctx.degraded = true;
  if (client) ctx = retrieve(client, query, std::chrono::milliseconds(c.deadline_ms));
  out << "query: " << query << '\n'
      << "degraded: " << (ctx.degraded ? "true" : "false") << '\n'
      << "passages: " << ctx.passages.size() << '\n'
      << "latency_ms: " << ctx.latency_ms << '\n'
      << "---\n"
      << assemble_prompt(ctx, image_ref, en_text, zh_text).flatten() << '\n';
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bilingual misinformation GRPO laboratory"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_path, manifest, checkpoint, log, fixtures, predictions, prompts, retriever;
  std::optional<std::int64_t> deadline_ms;
  std::optional<double> ocr_noise;
  std::optional<std::size_t> n, steps;
  bool oracle = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--set", overrides, "override a config key (key=value), repeatable");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out_path, "output path");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic manifest");
  common(gen);
  gen->add_option("-n,--n", n, "number of samples");

  auto* sft = app.add_subcommand("sft", "supervised fine-tuning on a manifest");
  common(sft);
  sft->add_option("--manifest", manifest, "training manifest");
  sft->add_option("--checkpoint", checkpoint, "initial checkpoint (default: fresh policy)");
  sft->add_option("--log", log, "NLL curve output (default: <out>.nll)");

  auto* grpo = app.add_subcommand("train-grpo", "GRPO training");
  common(grpo);
  grpo->add_option("--manifest", manifest, "training manifest");
  grpo->add_option("--checkpoint", checkpoint, "starting checkpoint, e.g. from sft");
  grpo->add_option("--log", log, "per-step stats log (default: <out>.log)");
  grpo->add_option("--steps", steps, "number of GRPO steps");

  auto* eval = app.add_subcommand("eval", "greedy evaluation over a manifest");
  common(eval);
  eval->add_option("--manifest", manifest, "evaluation manifest");
  eval->add_option("--checkpoint", checkpoint, "policy checkpoint");
  eval->add_option("--predictions", predictions, "write one rendered prediction per line");
  eval->add_option("--prompts", prompts, "write the assembled prompts");
  eval->add_option("--retriever", retriever, "none | fixture | timeout | http");
  eval->add_option("--fixtures", fixtures, "retrieval fixture file");
  eval->add_option("--deadline-ms", deadline_ms, "retrieval deadline");
  eval->add_option("--ocr-noise", ocr_noise, "corrupt Chinese subtitle characters at this rate");
  eval->add_flag("--oracle", oracle, "decode the ideal targets instead of the policy");

  std::vector<std::string> texts;
  std::optional<std::string> file;
  auto* parse = app.add_subcommand("parse", "check model output text");
  parse->add_option("text", texts, "output text(s) to check");
  parse->add_option("--file", file, "file with one output per line ('-' for stdin)");

  std::string en_text, zh_text, image_ref = "image";
  auto* demo = app.add_subcommand("demo-retrieve", "build a query, retrieve, and print the prompt");
  common(demo);
  demo->add_option("--en", en_text, "English subtitle");
  demo->add_option("--zh", zh_text, "Chinese subtitle");
  demo->add_option("--image", image_ref, "image identifier");
  demo->add_option("--retriever", retriever, "none | fixture | timeout | http");
  demo->add_option("--fixtures", fixtures, "retrieval fixture file");
  demo->add_option("--deadline-ms", deadline_ms, "retrieval deadline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << e.what() << '\n';
    return kExitInvalid;
  }

  try {
    if (parse->parsed()) {
      if (file) {
        std::ifstream f;
        std::istream* in = &std::cin;
        if (*file != "-") {
          f.open(*file, std::ios::binary);
          if (!f) throw IoError("cannot open " + *file);
          in = &f;
        }
        std::string line;
        while (std::getline(*in, line)) texts.push_back(line);
      }
      return cmd_parse(texts, out);
    }

    RunConfig config;
    if (config_path) config = load_run_config(*config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + kv + "'");
      config.apply(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) config.set_seed(*seed);
    if (out_path) config.out = *out_path;
    if (manifest) config.manifest = *manifest;
    if (checkpoint) config.checkpoint = *checkpoint;
    if (log) config.log = *log;
    if (fixtures) config.fixtures = *fixtures;
    if (predictions) config.predictions = *predictions;
    if (prompts) config.prompts = *prompts;
    if (retriever) config.apply("retriever", *retriever);
    if (deadline_ms) config.deadline_ms = *deadline_ms;
    if (ocr_noise) config.ocr_noise = *ocr_noise;
    if (n) config.n = *n;
    if (steps) config.steps = *steps;
    if (oracle) config.oracle = true;
    if (fixtures && !retriever) config.retriever = RetrieverKind::Fixture;

    if (gen->parsed()) return cmd_gen_data(config, out);
    if (sft->parsed()) return cmd_sft(config, out);
    if (grpo->parsed()) return cmd_train_grpo(config, out);
    if (eval->parsed()) return cmd_eval(config, out);
    if (demo->parsed()) return cmd_demo_retrieve(config, en_text, zh_text, image_ref, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace bimi
