#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bimi/environment.hpp"
#include "bimi/error.hpp"
#include "bimi/reward.hpp"

using namespace bimi;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() / "bimi_env_test") {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool is_clean(const StateTriple& t) {
  return t == StateTriple{ModalityState::Original, ModalityState::Original, ModalityState::Original};
}

}  // namespace

TEST_CASE("manipulated combinations") {
  const auto& combos = manipulated_combinations();
  std::set<StateTriple> seen(combos.begin(), combos.end());
  CHECK(seen.size() == 7);
  for (const auto& t : combos) CHECK_FALSE(is_clean(t));
}

TEST_CASE("assign_labels clean fraction") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) CHECK(is_clean(assign_labels(rng, 1.0)));
  int clean = 0;
  for (int i = 0; i < 100000; ++i) clean += is_clean(assign_labels(rng, 0.0)) ? 1 : 0;
  CHECK(clean == 0);

  const int n = 100000;
  clean = 0;
  for (int i = 0; i < n; ++i) clean += is_clean(assign_labels(rng, 0.2)) ? 1 : 0;
  CHECK(std::abs(clean - 0.2 * n) <= 3 * std::sqrt(n * 0.2 * 0.8));
}

TEST_CASE("manipulated combinations are uniform under a chi-square test") {
  Rng rng(2);
  std::map<StateTriple, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[assign_labels(rng, 0.0)];
  REQUIRE(counts.size() == 7);
  const double expected = n / 7.0;
  double chi2 = 0.0;
  for (const auto& [t, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 16.812);  // 6 degrees of freedom, alpha = 0.01
}

TEST_CASE("weighted combinations") {
  std::array<double, 7> w{};
  w[3] = 1.0;
  Rng rng(3);
  for (int i = 0; i < 100; ++i) CHECK(assign_labels(rng, 0.0, w) == manipulated_combinations()[3]);
}

TEST_CASE("generated samples satisfy the record invariants") {
  GeneratorConfig g;
  g.multi_box = true;
  const auto data = generate_dataset(g, 3000);
  for (const auto& t : data) {
    CHECK_NOTHROW(validate_sample(t.sample));
    CHECK(t.sample.category == derive_category(t.sample.image_state, t.sample.en_state, t.sample.zh_state));
    CHECK((t.sample.image_state == ModalityState::Manipulated) == !t.sample.gt_boxes.empty());
    CHECK(t.sample.gt_boxes.size() <= g.max_boxes);
    CHECK(t.obs.dim() == kObservationDim);
    CHECK(t.target.template_id == 0);
    CHECK(t.target.category_id == category_index(t.sample.category));
    for (const auto& b : t.sample.gt_boxes) {
      CHECK(b.x_min >= 0.0);
      CHECK(b.x_max <= g.canvas_width);
      CHECK(b.y_max <= g.canvas_height);
    }
  }
}

TEST_CASE("generation is deterministic") {
  GeneratorConfig g;
  g.seed = 5;
  const auto a = generate_dataset(g, 50);
  const auto b = generate_dataset(g, 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sample == b[i].sample);
    CHECK(a[i].obs == b[i].obs);
    CHECK(a[i].target == b[i].target);
  }
  CHECK(a[7].sample.id == "syn-5-000007");
  Rng r1(9), r2(9);
  CHECK(generate_sample(r1, g).obs == generate_sample(r2, g).obs);
}

TEST_CASE("noiseless observations carry an exact one-hot") {
  GeneratorConfig g;
  g.noise_sigma = 0.0;
  for (const auto& t : generate_dataset(g, 500)) {
    const std::size_t c = category_index(t.sample.category);
    for (std::size_t k = 0; k < kNumCategories; ++k) CHECK(t.obs.features[k] == (k == c ? 1.0 : 0.0));
    // argmax of the block is then a perfect linear classifier
    CHECK(std::max_element(t.obs.features.begin(), t.obs.features.begin() + 6) - t.obs.features.begin() ==
          static_cast<std::ptrdiff_t>(c));
    if (t.sample.gt_boxes.empty()) {
      for (std::size_t k = 6; k < 10; ++k) CHECK(t.obs.features[k] == 0.0);
    } else {
      CHECK(t.obs.features[6] == t.sample.gt_boxes[0].x_min / g.canvas_width);
      CHECK(t.obs.features[9] == t.sample.gt_boxes[0].y_max / g.canvas_height);
    }
  }
}

TEST_CASE("quantized target boxes overlap the ground truth") {
  GeneratorConfig g;
  const BinCoder coder = g.coder();
  double sum = 0.0, worst = 1.0;
  std::size_t count = 0;
  for (const auto& t : generate_dataset(g, 10000)) {
    if (t.sample.gt_boxes.empty()) continue;
    const BBox decoded = coder.decode(t.target.box_bins);
    const double iou = region_iou(std::vector<BBox>{decoded}, std::vector<BBox>{t.sample.gt_boxes[0]});
    sum += iou;
    worst = std::min(worst, iou);
    ++count;
  }
  REQUIRE(count > 4000);
  CHECK(sum / count >= 0.8);
  CHECK(worst > 0.5);
}

TEST_CASE("unreadable Chinese marker splits the category block") {
  const Sample s = make_sample("x", ModalityState::Original, ModalityState::Original, ModalityState::Manipulated,
                               "[EN original]", "[中文 篡改] text", {});
  FeatureOptions opts;
  opts.noise_sigma = 0.0;
  Rng rng(1);
  const Observation seen = featurize(s, rng, opts, std::string_view("[□文 篡改] text"));
  CHECK(seen.features[category_index(Category::AllConsistent)] == 0.5);
  CHECK(seen.features[category_index(Category::ChineseMisaligned)] == 0.5);
  const Observation intact = featurize(s, rng, opts, std::string_view("[中文 篡改] text"));
  CHECK(intact.features[category_index(Category::ChineseMisaligned)] == 1.0);
}

TEST_CASE("corrupt_text") {
  Rng rng(4);
  CHECK(corrupt_text("中文 abc", 0.0, rng) == "中文 abc");
  CHECK(corrupt_text("中文", 1.0, rng) == "□□");
  CHECK_THROWS_AS(corrupt_text("x", 1.5, rng), InvalidArgument);
}

TEST_CASE("manifest round trip") {
  TempDir dir;
  GeneratorConfig g;
  g.multi_box = true;
  std::vector<Sample> samples;
  for (const auto& t : generate_dataset(g, 200)) samples.push_back(t.sample);
  samples[3].explanation_ref = "a reference explanation";
  write_manifest(samples, dir.path / "a.jsonl");
  CHECK(load_manifest(dir.path / "a.jsonl") == samples);
  write_manifest(samples, dir.path / "b.jsonl");
  CHECK(slurp(dir.path / "a.jsonl") == slurp(dir.path / "b.jsonl"));

  const std::string line = manifest_line(samples[0]);
  CHECK(line.rfind("{\"id\":", 0) == 0);
  CHECK(line.find("\"image_state\"") < line.find("\"en_state\""));
  CHECK(line.find("\"gt_boxes\"") < line.find("\"en_text\""));
}

TEST_CASE("empty manifest") {
  TempDir dir;
  std::ofstream(dir.path / "e.jsonl").close();
  CHECK(load_manifest(dir.path / "e.jsonl").empty());
  write_manifest({}, dir.path / "w.jsonl");
  CHECK(slurp(dir.path / "w.jsonl").empty());
}

TEST_CASE("manifest errors report the line") {
  TempDir dir;
  const Sample good = make_sample("a", ModalityState::Original, ModalityState::Original, ModalityState::Original,
                                  "en", "zh", {});
  const std::string bad_category =
      R"({"id":"b","image_state":"manipulated","en_state":"original","zh_state":"original","category":"all consistent","gt_boxes":[[1,1,5,5]],"en_text":"e","zh_text":"z"})";
  {
    std::ofstream f(dir.path / "m.jsonl");
    f << manifest_line(good) << "\n\n" << bad_category << "\n";
  }
  try {
    load_manifest(dir.path / "m.jsonl");
    FAIL("expected a manifest error");
  } catch (const ManifestError& e) {
    CHECK(e.line() == 3);
  }

  const std::string cases[] = {
      "not json",
      R"({"id":"b","image_state":"original","en_state":"original","zh_state":"original","category":"all consistent","gt_boxes":[[1,1,5,5]],"en_text":"e","zh_text":"z"})",
      R"({"id":"b","image_state":"sideways","en_state":"original","zh_state":"original","category":"all consistent","gt_boxes":[],"en_text":"e","zh_text":"z"})",
      R"({"id":"b","image_state":"original","en_state":"original","zh_state":"original","category":"all consistent","gt_boxes":[],"en_text":"e","zh_text":"z","extra":1})",
      R"({"id":"b","image_state":"original","en_state":"original","zh_state":"original","category":"all consistent","gt_boxes":[],"en_text":"e"})",
      R"({"id":"b","image_state":"manipulated","en_state":"original","zh_state":"original","category":"image manipulated","gt_boxes":[[5,5,1,1]],"en_text":"e","zh_text":"z"})",
  };
  for (const auto& c : cases) {
    CHECK_THROWS_AS(parse_manifest_line(c, 7), ManifestError);
  }
  CHECK_THROWS_AS(load_manifest(dir.path / "absent.jsonl"), IoError);
}

TEST_CASE("manifest throughput") {
  TempDir dir;
  GeneratorConfig g;
  std::vector<Sample> samples;
  for (const auto& t : generate_dataset(g, 10000)) samples.push_back(t.sample);
  const auto t0 = std::chrono::steady_clock::now();
  write_manifest(samples, dir.path / "big.jsonl");
  const auto back = load_manifest(dir.path / "big.jsonl");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(back.size() == 10000);
  CHECK(secs < 2.0);
}

TEST_CASE("generator config validation") {
  GeneratorConfig g;
  CHECK_NOTHROW(g.validate());
  g.p_clean = 1.5;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
  g = {};
  g.noise_sigma = -0.1;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
  g = {};
  g.box_max_extent = 200.0;
  CHECK_THROWS_AS(g.validate(), InvalidArgument);
}
