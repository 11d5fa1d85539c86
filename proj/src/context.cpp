#include "bimi/context.hpp"

#include <fstream>
#include <future>
#include <httplib.h>
#include <json.hpp>
#include <thread>

#include "bimi/error.hpp"

namespace bimi {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\n\r\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

RetrievalReply run_client(const RetrieverClient& client, const std::string& query,
                          std::chrono::milliseconds deadline) {
  try {
    return client.query(query, deadline);
  } catch (const std::exception& e) {
    return RetrievalReply{RetrievalReply::Status::Error, {}, e.what()};
  } catch (...) {
    return RetrievalReply{RetrievalReply::Status::Error, {}, "unknown error"};
  }
}

}  // namespace

std::string build_query(std::string_view en_text, std::string_view zh_text) {
  const auto en = trim(en_text);
  const auto zh = trim(zh_text);
  if (en.empty() && zh.empty()) throw InvalidArgument("query needs at least one non-empty subtitle");
  if (zh.empty()) return std::string(en);
  if (en.empty()) return std::string(zh);
  std::string q(en);
  q.append(kQuerySeparator).append(zh);
  return q;
}

FixtureRetriever FixtureRetriever::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open retrieval fixtures: " + path.string());
  std::vector<Entry> entries;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object() || !rec.contains("match") || !rec["match"].is_string() ||
        !rec.contains("passages") || !rec["passages"].is_array()) {
      throw ValidationError("fixtures line " + std::to_string(number) + ": expected {\"match\", \"passages\"}");
    }
    Entry e;
    e.match = rec["match"].get<std::string>();
    for (const auto& p : rec["passages"]) {
      if (!p.is_string()) throw ValidationError("fixtures line " + std::to_string(number) + ": non-string passage");
      e.passages.push_back(p.get<std::string>());
    }
    entries.push_back(std::move(e));
  }
  return FixtureRetriever(std::move(entries));
}

RetrievalReply FixtureRetriever::query(std::string_view text, std::chrono::milliseconds) const {
  for (const auto& e : entries_) {
    if (text.find(e.match) != std::string_view::npos) return RetrievalReply{RetrievalReply::Status::Ok, e.passages, {}};
  }
  return RetrievalReply{};
}

RetrievalReply TimeoutRetriever::query(std::string_view, std::chrono::milliseconds deadline) const {
  std::this_thread::sleep_for(deadline);
  return RetrievalReply{RetrievalReply::Status::Timeout, {}, "deadline exceeded"};
}

RetrievalReply HangingRetriever::query(std::string_view, std::chrono::milliseconds) const {
  std::this_thread::sleep_for(hang_);
  return RetrievalReply{RetrievalReply::Status::Ok, passages_, {}};
}

RetrievalReply HttpRetriever::query(std::string_view text, std::chrono::milliseconds deadline) const {
  httplib::Client cli(base_url_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(deadline);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(deadline - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());

  httplib::Params params{{"q", std::string(text)}};
  auto res = cli.Get(path_, params, httplib::Headers{});
  if (!res) {
    const bool timeout = res.error() == httplib::Error::Read || res.error() == httplib::Error::Connection;
    return RetrievalReply{timeout ? RetrievalReply::Status::Timeout : RetrievalReply::Status::Error, {},
                          httplib::to_string(res.error())};
  }
  if (res->status != 200) {
    return RetrievalReply{RetrievalReply::Status::Error, {}, "HTTP " + std::to_string(res->status)};
  }
  const auto body = nlohmann::json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.is_object() || !body.contains("passages") || !body["passages"].is_array()) {
    return RetrievalReply{RetrievalReply::Status::Error, {}, "malformed response body"};
  }
  RetrievalReply reply;
  for (const auto& p : body["passages"]) {
    if (p.is_string()) reply.passages.push_back(p.get<std::string>());
  }
  return reply;
}

std::string truncate_code_points(std::string_view text, std::size_t max_chars) {
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (count == max_chars) return std::string(text.substr(0, i));
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if ((lead >> 5) == 0x6) len = 2;
    else if ((lead >> 4) == 0xE) len = 3;
    else if ((lead >> 3) == 0x1E) len = 4;
    i += std::min(len, text.size() - i);
    ++count;
  }
  return std::string(text);
}

RetrievedContext retrieve(std::shared_ptr<const RetrieverClient> client, std::string_view query,
                          std::chrono::milliseconds deadline) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  RetrievedContext ctx;
  ctx.degraded = true;
  if (!client || deadline.count() <= 0) return ctx;

  // The worker owns copies of everything it touches, so it can be abandoned
  // when the client overruns the deadline.
  auto promise = std::make_shared<std::promise<RetrievalReply>>();
  auto future = promise->get_future();
  try {
    std::thread([client, promise, q = std::string(query), deadline] {
      promise->set_value(run_client(*client, q, deadline));
    }).detach();
  } catch (const std::system_error&) {
    return ctx;
  }

  // A well-behaved client finishes right at the deadline, so allow a
  // fraction of the grace period for it to hand back its answer.
  const bool ready = future.wait_for(deadline + kRetrievalGrace / 2) == std::future_status::ready;
  ctx.latency_ms = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count());
  if (!ready) return ctx;

  RetrievalReply reply = future.get();
  if (reply.status != RetrievalReply::Status::Ok || reply.passages.empty()) return ctx;
  const std::size_t keep = std::min(kMaxPassages, reply.passages.size());
  for (std::size_t i = 0; i < keep; ++i) {
    ctx.passages.push_back(truncate_code_points(reply.passages[i], kMaxPassageChars));
  }
  ctx.degraded = false;
  return ctx;
}

std::string Prompt::flatten() const {
  std::string out;
  for (const auto& p : retrieved.passages) out.append("<passage>").append(p).append("</passage>\n");
  out.append("<image id=\"").append(image_ref).append("\"/>\n");
  out.append("<subtitle lang=\"en\">").append(en_text).append("</subtitle>\n");
  out.append("<subtitle lang=\"zh\">").append(zh_text).append("</subtitle>");
  return out;
}

Prompt assemble_prompt(RetrievedContext context, std::string image_ref, std::string en_text,
                       std::string zh_text) {
  return Prompt{std::move(context), std::move(image_ref), std::move(en_text), std::move(zh_text)};
}

}  // namespace bimi
