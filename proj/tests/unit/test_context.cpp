#include <doctest.h>

#include <httplib.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "bimi/context.hpp"
#include "bimi/error.hpp"

using namespace bimi;
using namespace std::chrono_literals;

namespace {

class FixedRetriever final : public RetrieverClient {
 public:
  explicit FixedRetriever(std::vector<std::string> passages) : passages_(std::move(passages)) {}
  RetrievalReply query(std::string_view, std::chrono::milliseconds) const override { return {{}, passages_, {}}; }

 private:
  std::vector<std::string> passages_;
};

class ThrowingRetriever final : public RetrieverClient {
 public:
  RetrievalReply query(std::string_view, std::chrono::milliseconds) const override {
    throw std::runtime_error("backend exploded");
  }
};

std::uint64_t elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TEST_CASE("build_query") {
  CHECK(build_query("A", "B") == "A \xE2\x9F\x82 B");
  CHECK(build_query("A", "B") == "A" + std::string(kQuerySeparator) + "B");
  CHECK(build_query("A", "") == "A");
  CHECK(build_query("  ", " B\t") == "B");
  CHECK(build_query("  A ", " B ") == "A ⟂ B");
  const std::string once = build_query(" x ", " y ");
  CHECK(build_query(once, "") == once);
  CHECK_THROWS_AS(build_query("", " \n"), InvalidArgument);
}

TEST_CASE("retrieve keeps the top three passages") {
  auto five = std::make_shared<FixedRetriever>(std::vector<std::string>{"p1", "p2", "p3", "p4", "p5"});
  const auto ctx = retrieve(five, "q", 500ms);
  CHECK_FALSE(ctx.degraded);
  CHECK(ctx.passages == std::vector<std::string>{"p1", "p2", "p3"});
}

TEST_CASE("retrieve truncates long passages by code point") {
  std::string long_zh;
  for (int i = 0; i < 600; ++i) long_zh += "字";
  auto one = std::make_shared<FixedRetriever>(std::vector<std::string>{long_zh});
  const auto ctx = retrieve(one, "q", 500ms);
  REQUIRE(ctx.passages.size() == 1);
  CHECK(ctx.passages[0].size() == 512 * 3);
  CHECK(truncate_code_points("abc", 2) == "ab");
  CHECK(truncate_code_points("ab", 5) == "ab");
}

TEST_CASE("retrieve degrades instead of failing") {
  SUBCASE("empty answer") {
    const auto ctx = retrieve(std::make_shared<FixedRetriever>(std::vector<std::string>{}), "q", 500ms);
    CHECK(ctx.degraded);
    CHECK(ctx.passages.empty());
  }
  SUBCASE("timeout within the grace period") {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ctx = retrieve(std::make_shared<TimeoutRetriever>(), "q", 100ms);
    CHECK(ctx.degraded);
    CHECK(ctx.passages.empty());
    CHECK(elapsed_ms(t0) <= 100 + 50);
  }
  SUBCASE("a hanging client is abandoned at the deadline") {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ctx = retrieve(std::make_shared<HangingRetriever>(2000ms, std::vector<std::string>{"late"}), "q", 80ms);
    CHECK(ctx.degraded);
    CHECK(elapsed_ms(t0) <= 80 + 50);
  }
  SUBCASE("a slow but punctual client is kept") {
    const auto ctx = retrieve(std::make_shared<HangingRetriever>(20ms, std::vector<std::string>{"ok"}), "q", 500ms);
    CHECK_FALSE(ctx.degraded);
    CHECK(ctx.passages == std::vector<std::string>{"ok"});
  }
  SUBCASE("exceptions") {
    CHECK(retrieve(std::make_shared<ThrowingRetriever>(), "q", 100ms).degraded);
  }
  SUBCASE("no client or no time") {
    CHECK(retrieve(nullptr, "q", 100ms).degraded);
    CHECK(retrieve(std::make_shared<FixedRetriever>(std::vector<std::string>{"p"}), "q", 0ms).degraded);
  }
}

TEST_CASE("concurrent retrievals keep their own deadlines") {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::thread> threads;
  std::vector<RetrievedContext> results(8);
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { results[i] = retrieve(std::make_shared<TimeoutRetriever>(), "q", 100ms); });
  }
  for (auto& t : threads) t.join();
  for (const auto& r : results) CHECK(r.degraded);
  CHECK(elapsed_ms(t0) < 400);
}

TEST_CASE("fixture retriever") {
  const auto path = std::filesystem::temp_directory_path() / "bimi_fixture_test.jsonl";
  {
    std::ofstream f(path);
    f << R"({"match": "flood", "passages": ["a", "b", "c", "d"]})" << "\n\n"
      << R"({"match": "洪水", "passages": ["zh"]})" << "\n";
  }
  auto client = std::make_shared<FixtureRetriever>(FixtureRetriever::from_file(path));
  CHECK(retrieve(client, "river flood today", 500ms).passages == std::vector<std::string>{"a", "b", "c"});
  CHECK(retrieve(client, "今天洪水", 500ms).passages == std::vector<std::string>{"zh"});
  CHECK(retrieve(client, "nothing", 500ms).degraded);

  {
    std::ofstream f(path);
    f << R"({"match": 3})" << "\n";
  }
  CHECK_THROWS_AS(FixtureRetriever::from_file(path), ValidationError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(FixtureRetriever::from_file(path), IoError);
}

TEST_CASE("http retriever against a local server") {
  httplib::Server server;
  server.Get("/search", [](const httplib::Request& req, httplib::Response& res) {
    const std::string q = req.get_param_value("q");
    if (q.find("slow") != std::string::npos) std::this_thread::sleep_for(600ms);
    if (q.find("broken") != std::string::npos) {
      res.status = 500;
      return;
    }
    res.set_content(R"({"passages": ["first for )" + q + R"(", "second", "third", "fourth"]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto client = std::make_shared<HttpRetriever>("http://127.0.0.1:" + std::to_string(port));
  const auto ok = retrieve(client, "flood ⟂ 洪水", 2000ms);
  CHECK_FALSE(ok.degraded);
  REQUIRE(ok.passages.size() == 3);
  CHECK(ok.passages[0] == "first for flood ⟂ 洪水");

  CHECK(retrieve(client, "broken", 2000ms).degraded);
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(retrieve(client, "slow", 150ms).degraded);
  CHECK(elapsed_ms(t0) <= 150 + 50);

  auto nobody = std::make_shared<HttpRetriever>("http://127.0.0.1:1");
  CHECK(retrieve(nobody, "q", 300ms).degraded);

  server.stop();
  worker.join();
}

TEST_CASE("prompt assembly") {
  RetrievedContext empty;
  empty.degraded = true;
  const Prompt bare = assemble_prompt(empty, "img-1", "EN", "ZH");
  CHECK(bare.flatten() ==
        "<image id=\"img-1\"/>\n<subtitle lang=\"en\">EN</subtitle>\n<subtitle lang=\"zh\">ZH</subtitle>");

  RetrievedContext three;
  three.passages = {"one", "two", "three"};
  const std::string text = assemble_prompt(three, "img-1", "EN", "ZH").flatten();
  CHECK(text.rfind("<passage>one</passage>\n<passage>two</passage>\n<passage>three</passage>\n<image", 0) == 0);
  CHECK(text.find("three") < text.find("<image"));
  CHECK(text.find("<image") < text.find("lang=\"en\""));
  CHECK(text.find("lang=\"en\"") < text.find("lang=\"zh\""));
  CHECK(text == assemble_prompt(three, "img-1", "EN", "ZH").flatten());
}
