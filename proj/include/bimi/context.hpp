#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace bimi {

/// Separator placed between the English and Chinese subtitle in a query.
inline constexpr std::string_view kQuerySeparator = " \xE2\x9F\x82 ";  // " ⟂ "
inline constexpr std::size_t kMaxPassages = 3;
inline constexpr std::size_t kMaxPassageChars = 512;
inline constexpr std::chrono::milliseconds kRetrievalGrace{50};

/// Trimmed "en ⟂ zh", or the single non-empty subtitle. Throws
/// InvalidArgument when both are empty after trimming.
std::string build_query(std::string_view en_text, std::string_view zh_text);

struct RetrievalReply {
  enum class Status { Ok, Timeout, Error };
  Status status = Status::Ok;
  std::vector<std::string> passages;
  std::string message;
};

/// Backend contract: answer within `deadline` and keep no pipeline state.
class RetrieverClient {
 public:
  virtual ~RetrieverClient() = default;
  virtual RetrievalReply query(std::string_view text, std::chrono::milliseconds deadline) const = 0;
};

/// Canned passages from a newline-delimited file of
/// {"match": "<substring>", "passages": ["...", ...]} records. The first
/// record whose match occurs in the query wins; no match yields no passages.
class FixtureRetriever final : public RetrieverClient {
 public:
  struct Entry {
    std::string match;
    std::vector<std::string> passages;
  };

  explicit FixtureRetriever(std::vector<Entry> entries) : entries_(std::move(entries)) {}
  static FixtureRetriever from_file(const std::filesystem::path& path);

  RetrievalReply query(std::string_view text, std::chrono::milliseconds deadline) const override;

 private:
  std::vector<Entry> entries_;
};

/// Waits out the whole deadline and reports a timeout.
class TimeoutRetriever final : public RetrieverClient {
 public:
  RetrievalReply query(std::string_view text, std::chrono::milliseconds deadline) const override;
};

/// Ignores the deadline and blocks for `hang` before answering; exercises
/// the caller-side deadline.
class HangingRetriever final : public RetrieverClient {
 public:
  explicit HangingRetriever(std::chrono::milliseconds hang, std::vector<std::string> passages = {})
      : hang_(hang), passages_(std::move(passages)) {}
  RetrievalReply query(std::string_view text, std::chrono::milliseconds deadline) const override;

 private:
  std::chrono::milliseconds hang_;
  std::vector<std::string> passages_;
};

/// GET <base_url><path>?q=<query>, expecting {"passages": [...]}. Connection
/// and read timeouts follow the deadline.
class HttpRetriever final : public RetrieverClient {
 public:
  explicit HttpRetriever(std::string base_url, std::string path = "/search")
      : base_url_(std::move(base_url)), path_(std::move(path)) {}
  RetrievalReply query(std::string_view text, std::chrono::milliseconds deadline) const override;

 private:
  std::string base_url_;
  std::string path_;
};

struct RetrievedContext {
  std::vector<std::string> passages;
  bool degraded = false;
  std::uint64_t latency_ms = 0;
};

/// Queries `client` with a deadline. Keeps the first three passages, each
/// cut to 512 code points. Timeouts, errors, exceptions, and empty answers
/// all degrade to an empty context; nothing is thrown. Returns within the
/// deadline plus kRetrievalGrace even if the client hangs.
RetrievedContext retrieve(std::shared_ptr<const RetrieverClient> client, std::string_view query,
                          std::chrono::milliseconds deadline);

/// Retrieved context, image handle, and subtitles, assembled in that order.
struct Prompt {
  RetrievedContext retrieved;
  std::string image_ref;
  std::string en_text;
  std::string zh_text;

  /// Text form:
  ///   <passage>P</passage>\n          (once per passage, retrieval order)
  ///   <image id="REF"/>\n
  ///   <subtitle lang="en">EN</subtitle>\n
  ///   <subtitle lang="zh">ZH</subtitle>
  std::string flatten() const;
};

Prompt assemble_prompt(RetrievedContext context, std::string image_ref, std::string en_text,
                       std::string zh_text);

/// First `max_chars` UTF-8 code points of `text`.
std::string truncate_code_points(std::string_view text, std::size_t max_chars);

}  // namespace bimi
