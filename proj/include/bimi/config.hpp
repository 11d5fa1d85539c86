#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "bimi/environment.hpp"
#include "bimi/grpo.hpp"

namespace bimi {

enum class RetrieverKind { None, Fixture, Timeout, Http };

/// Every knob a command can read. Loaded from a flat "key = value" file
/// (one pair per line, '#' starts a comment) and then overridden by flags.
struct RunConfig {
  GeneratorConfig generator;
  GrpoConfig grpo;

  // policy
  std::size_t template_count = 2;
  double init_scale = 0.01;

  // data
  std::size_t n = 1000;

  // sft
  std::size_t sft_epochs = 3;
  std::size_t sft_batch_size = 16;
  double sft_learning_rate = 0.1;

  // grpo loop
  std::size_t steps = 500;
  std::size_t batch_size = 16;

  // eval and retrieval
  RetrieverKind retriever = RetrieverKind::None;
  std::string retriever_url;
  std::int64_t deadline_ms = 1000;
  double ocr_noise = 0.0;
  bool oracle = false;

  // paths
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::filesystem::path fixtures;
  std::filesystem::path predictions;
  std::filesystem::path prompts;

  std::uint64_t seed() const { return generator.seed; }
  void set_seed(std::uint64_t s) { generator.seed = s; }

  /// Sets one key. Throws InvalidArgument for unknown keys or bad values.
  void apply(std::string_view key, std::string_view value);

  /// Cross-field checks; throws InvalidArgument.
  void validate() const;
};

/// Reads a config file on top of `base`. Throws IoError when the file
/// cannot be opened and InvalidArgument (with the line) on bad content.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

std::string_view retriever_name(RetrieverKind kind);

}  // namespace bimi
