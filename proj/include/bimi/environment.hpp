#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "bimi/domain.hpp"
#include "bimi/policy.hpp"
#include "bimi/rng.hpp"

namespace bimi {

struct GeneratorConfig {
  std::uint64_t seed = 42;
  double p_clean = 0.2;
  double noise_sigma = 0.1;
  double canvas_width = 100.0;
  double canvas_height = 100.0;
  /// Side lengths of generated boxes are uniform in [min, max] pixels.
  double box_min_extent = 20.0;
  double box_max_extent = 60.0;
  bool multi_box = false;
  std::size_t max_boxes = 3;
  /// Bins per coordinate used to quantize target boxes.
  std::size_t bins = 16;
  /// Relative weights of the 7 non-clean state combinations, in
  /// manipulated_combinations() order. Uniform when unset.
  std::optional<std::array<double, 7>> manipulated_weights;

  void validate() const;
  BinCoder coder() const { return BinCoder{bins, canvas_width, canvas_height}; }
};

/// Observation layout: 6 category indicators followed by the normalized
/// (x_min, y_min, x_max, y_max) of the first ground-truth box (zeros when
/// there is none), each with additive N(0, sigma^2) noise.
inline constexpr std::size_t kObservationDim = 10;

using StateTriple = std::tuple<ModalityState, ModalityState, ModalityState>;

/// The 7 (image, en, zh) combinations with at least one manipulated
/// modality, ordered by the bit pattern image*4 + en*2 + zh.
const std::array<StateTriple, 7>& manipulated_combinations();

/// Clean triple with probability p_clean, else one of the 7 manipulated
/// combinations (uniform unless weights are given).
StateTriple assign_labels(Rng& rng, double p_clean,
                          const std::optional<std::array<double, 7>>& weights = std::nullopt);

/// Synthetic subtitles carry a visible state marker, e.g. "[EN original]".
std::string subtitle_marker(bool chinese, ModalityState state);

struct FeatureOptions {
  double noise_sigma = 0.1;
  double canvas_width = 100.0;
  double canvas_height = 100.0;
};

/// Noisy observation for a sample. `zh_text_seen` is the Chinese subtitle
/// as the pipeline received it; when the sample's state marker no longer
/// survives in it, the Chinese state is unreadable and the category block
/// splits its mass between the two categories the other states allow.
Observation featurize(const Sample& sample, Rng& rng, const FeatureOptions& options,
                      std::optional<std::string_view> zh_text_seen = std::nullopt);

/// Ideal response: template 0, the true category, quantized first box
/// (zero bins when there is no box).
ResponseTokens target_tokens(const Sample& sample, const BinCoder& coder);

struct ToySample {
  Sample sample;
  Observation obs;
  ResponseTokens target;
};

ToySample generate_sample(Rng& rng, const GeneratorConfig& config, std::string id = "sample");

/// n samples, sample i drawn from its own substream of config.seed with id
/// "syn-<seed>-<i>".
std::vector<ToySample> generate_dataset(const GeneratorConfig& config, std::size_t n);

/// Replaces each code point of `text` with probability `rate` by a
/// replacement glyph, emulating OCR misreads.
std::string corrupt_text(std::string_view text, double rate, Rng& rng);

/// One JSON object per line with a fixed field order.
std::string manifest_line(const Sample& sample);
Sample parse_manifest_line(std::string_view line, std::size_t line_number);

void write_manifest(std::span<const Sample> samples, const std::filesystem::path& path);

/// Throws IoError for a missing file and ManifestError (with the line
/// number) for malformed or invalid records. Blank lines are skipped.
std::vector<Sample> load_manifest(const std::filesystem::path& path);

}  // namespace bimi
