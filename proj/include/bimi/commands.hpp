#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bimi/config.hpp"

namespace bimi {

/// Process exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitInvalid = 1, kExitIo = 2 };

int cmd_gen_data(const RunConfig& config, std::ostream& out);
int cmd_sft(const RunConfig& config, std::ostream& out);
int cmd_train_grpo(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);

/// Parses each input and prints either the record or the failure reason,
/// one block per input. Returns 1 if any input is invalid.
int cmd_parse(std::span<const std::string> inputs, std::ostream& out);

int cmd_demo_retrieve(const RunConfig& config, const std::string& en_text, const std::string& zh_text,
                      const std::string& image_ref, std::ostream& out);

/// Full command-line entry point; maps exceptions to exit codes and writes
/// diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bimi
