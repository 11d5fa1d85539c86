#include "bimi/environment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "bimi/error.hpp"

namespace bimi {

namespace {

using nlohmann::ordered_json;

constexpr std::uint64_t kSampleStream = 0x73616d70;  // "samp"
constexpr std::string_view kOcrGlyph = "\xE2\x96\xA1";  // U+25A1

std::vector<double> one_hot(Category c) {
  std::vector<double> v(kNumCategories, 0.0);
  v[category_index(c)] = 1.0;
  return v;
}

BBox draw_box(Rng& rng, const GeneratorConfig& config) {
  std::uniform_real_distribution<double> extent(config.box_min_extent, config.box_max_extent);
  const double w = extent(rng);
  const double h = extent(rng);
  const double x0 = std::uniform_real_distribution<double>(0.0, config.canvas_width - w)(rng);
  const double y0 = std::uniform_real_distribution<double>(0.0, config.canvas_height - h)(rng);
  return BBox{x0, y0, x0 + w, y0 + h};
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (!(p_clean >= 0.0 && p_clean <= 1.0)) throw InvalidArgument("p_clean must be in [0, 1]");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InvalidArgument("noise_sigma must be >= 0");
  if (!(canvas_width > 0.0 && canvas_height > 0.0)) throw InvalidArgument("canvas must be positive");
  if (!(box_min_extent > 0.0 && box_min_extent <= box_max_extent)) {
    throw InvalidArgument("box extents must satisfy 0 < min <= max");
  }
  if (box_max_extent > canvas_width || box_max_extent > canvas_height) {
    throw InvalidArgument("box_max_extent exceeds the canvas");
  }
  if (max_boxes < 1) throw InvalidArgument("max_boxes must be >= 1");
  if (bins < 2) throw InvalidArgument("bins must be >= 2");
  if (manipulated_weights) {
    double total = 0.0;
    for (double w : *manipulated_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("category weights must be >= 0");
      total += w;
    }
    if (!(total > 0.0)) throw InvalidArgument("category weights must not all be zero");
  }
}

const std::array<StateTriple, 7>& manipulated_combinations() {
  static const std::array<StateTriple, 7> combos = [] {
    std::array<StateTriple, 7> out{};
    for (unsigned bits = 1; bits < 8; ++bits) {
      auto state = [&](unsigned mask) {
        return (bits & mask) ? ModalityState::Manipulated : ModalityState::Original;
      };
      out[bits - 1] = {state(4), state(2), state(1)};
    }
    return out;
  }();
  return combos;
}

StateTriple assign_labels(Rng& rng, double p_clean, const std::optional<std::array<double, 7>>& weights) {
  if (!(p_clean >= 0.0 && p_clean <= 1.0)) throw InvalidArgument("p_clean must be in [0, 1]");
  if (uniform01(rng) < p_clean) {
    return {ModalityState::Original, ModalityState::Original, ModalityState::Original};
  }
  std::size_t pick = 0;
  if (weights) {
    std::discrete_distribution<std::size_t> dist(weights->begin(), weights->end());
    pick = dist(rng);
  } else {
    pick = std::uniform_int_distribution<std::size_t>(0, 6)(rng);
  }
  return manipulated_combinations()[pick];
}

std::string subtitle_marker(bool chinese, ModalityState state) {
  if (chinese) {
    return state == ModalityState::Original ? "[中文 原始]" : "[中文 篡改]";
  }
  return state == ModalityState::Original ? "[EN original]" : "[EN manipulated]";
}

Observation featurize(const Sample& sample, Rng& rng, const FeatureOptions& options,
                      std::optional<std::string_view> zh_text_seen) {
  std::vector<double> category = one_hot(sample.category);
  if (zh_text_seen) {
    const std::string marker = subtitle_marker(true, sample.zh_state);
    const bool had_marker = sample.zh_text.find(marker) != std::string::npos;
    if (had_marker && zh_text_seen->find(marker) == std::string_view::npos) {
      const auto flipped = sample.zh_state == ModalityState::Original ? ModalityState::Manipulated
                                                                      : ModalityState::Original;
      const Category other = derive_category(sample.image_state, sample.en_state, flipped);
      category.assign(kNumCategories, 0.0);
      category[category_index(sample.category)] += 0.5;
      category[category_index(other)] += 0.5;
    }
  }

  Observation obs;
  obs.features = std::move(category);
  if (sample.gt_boxes.empty()) {
    obs.features.insert(obs.features.end(), 4, 0.0);
  } else {
    const BBox& b = sample.gt_boxes.front();
    obs.features.push_back(b.x_min / options.canvas_width);
    obs.features.push_back(b.y_min / options.canvas_height);
    obs.features.push_back(b.x_max / options.canvas_width);
    obs.features.push_back(b.y_max / options.canvas_height);
  }
  if (options.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, options.noise_sigma);
    for (double& f : obs.features) f += noise(rng);
  }
  return obs;
}

ResponseTokens target_tokens(const Sample& sample, const BinCoder& coder) {
  ResponseTokens t;
  t.template_id = 0;
  t.category_id = category_index(sample.category);
  if (!sample.gt_boxes.empty()) t.box_bins = coder.encode(sample.gt_boxes.front());
  return t;
}

ToySample generate_sample(Rng& rng, const GeneratorConfig& config, std::string id) {
  const auto [image, en, zh] = assign_labels(rng, config.p_clean, config.manipulated_weights);
  std::vector<BBox> boxes;
  if (image == ModalityState::Manipulated) {
    std::size_t count = 1;
    if (config.multi_box) count = std::uniform_int_distribution<std::size_t>(1, config.max_boxes)(rng);
    for (std::size_t i = 0; i < count; ++i) boxes.push_back(draw_box(rng, config));
  }
  std::string en_text = subtitle_marker(false, en) + " Synthetic news caption for " + id + ".";
  std::string zh_text = subtitle_marker(true, zh) + " " + id + " 的合成新闻字幕。";

  ToySample out;
  out.sample = make_sample(std::move(id), image, en, zh, std::move(en_text), std::move(zh_text),
                           std::move(boxes));
  out.obs = featurize(out.sample, rng,
                      FeatureOptions{config.noise_sigma, config.canvas_width, config.canvas_height});
  out.target = target_tokens(out.sample, config.coder());
  return out;
}

std::vector<ToySample> generate_dataset(const GeneratorConfig& config, std::size_t n) {
  config.validate();
  std::vector<ToySample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = substream(config.seed, kSampleStream, i);
    char id[48];
    std::snprintf(id, sizeof id, "syn-%llu-%06zu", static_cast<unsigned long long>(config.seed), i);
    out.push_back(generate_sample(rng, config, id));
  }
  return out;
}

std::string corrupt_text(std::string_view text, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidArgument("corruption rate must be in [0, 1]");
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t len = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
    if (rate > 0.0 && uniform01(rng) < rate) {
      out.append(kOcrGlyph);
    } else {
      out.append(text.substr(i, len));
    }
    i += len;
  }
  return out;
}

std::string manifest_line(const Sample& s) {
  ordered_json rec;
  rec["id"] = s.id;
  rec["image_state"] = modality_state_name(s.image_state);
  rec["en_state"] = modality_state_name(s.en_state);
  rec["zh_state"] = modality_state_name(s.zh_state);
  rec["category"] = category_label(s.category);
  ordered_json boxes = ordered_json::array();
  for (const auto& b : s.gt_boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
  rec["gt_boxes"] = std::move(boxes);
  rec["en_text"] = s.en_text;
  rec["zh_text"] = s.zh_text;
  if (s.explanation_ref) rec["explanation_ref"] = *s.explanation_ref;
  return rec.dump();
}

Sample parse_manifest_line(std::string_view line, std::size_t line_number) {
  const ordered_json rec = ordered_json::parse(line.begin(), line.end(), nullptr, false);
  if (rec.is_discarded() || !rec.is_object()) throw ManifestError(line_number, "not a JSON object");

  static constexpr std::array<std::string_view, 9> kKnown = {
      "id", "image_state", "en_state", "zh_state", "category", "gt_boxes", "en_text", "zh_text", "explanation_ref"};
  for (const auto& [key, value] : rec.items()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      throw ManifestError(line_number, "unknown field \"" + key + "\"");
    }
  }
  auto string_field = [&](const char* key) -> std::string {
    const auto it = rec.find(key);
    if (it == rec.end() || !it->is_string()) {
      throw ManifestError(line_number, std::string("missing or non-string field \"") + key + "\"");
    }
    return it->get<std::string>();
  };
  auto state_field = [&](const char* key) {
    const auto state = modality_state_from_name(string_field(key));
    if (!state) throw ManifestError(line_number, std::string("bad value for \"") + key + "\"");
    return *state;
  };

  Sample s;
  s.id = string_field("id");
  s.image_state = state_field("image_state");
  s.en_state = state_field("en_state");
  s.zh_state = state_field("zh_state");
  const auto category = category_from_label(string_field("category"));
  if (!category) throw ManifestError(line_number, "unknown category label");
  s.category = *category;
  s.en_text = string_field("en_text");
  s.zh_text = string_field("zh_text");

  const auto boxes = rec.find("gt_boxes");
  if (boxes == rec.end() || !boxes->is_array()) throw ManifestError(line_number, "missing \"gt_boxes\" array");
  for (const auto& b : *boxes) {
    if (!b.is_array() || b.size() != 4) throw ManifestError(line_number, "each box must have 4 numbers");
    std::array<double, 4> v{};
    for (std::size_t i = 0; i < 4; ++i) {
      if (!b[i].is_number()) throw ManifestError(line_number, "box coordinates must be numbers");
      v[i] = b[i].get<double>();
    }
    s.gt_boxes.push_back(BBox{v[0], v[1], v[2], v[3]});
  }
  if (const auto ex = rec.find("explanation_ref"); ex != rec.end() && !ex->is_null()) {
    if (!ex->is_string()) throw ManifestError(line_number, "\"explanation_ref\" must be a string");
    s.explanation_ref = ex->get<std::string>();
  }

  try {
    validate_sample(s);
  } catch (const ValidationError& e) {
    throw ManifestError(line_number, e.what());
  }
  return s;
}

void write_manifest(std::span<const Sample> samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open manifest for writing: " + path.string());
  for (const auto& s : samples) out << manifest_line(s) << '\n';
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

std::vector<Sample> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::vector<Sample> samples;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    samples.push_back(parse_manifest_line(line, number));
  }
  return samples;
}

}  // namespace bimi
