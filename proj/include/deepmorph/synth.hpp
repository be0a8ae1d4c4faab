#ifndef DEEPMORPH_SYNTH_HPP_
#define DEEPMORPH_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepmorph/feature_map.hpp"
#include "deepmorph/geometry.hpp"

namespace deepmorph {

struct IntRange {
  int lo = 0;
  int hi = 0;
  bool operator==(const IntRange&) const = default;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const RealRange&) const = default;
};

/// Synthetic text-centre corpus: curved horizontal strips (half-sine arcs)
/// with gaps cut out of them and small text-like blobs sprinkled around.
struct SynthConfig {
  int map_size = 80;
  IntRange instances{2, 4};
  /// Text-centre strip thickness, exact pixels per column.
  IntRange thickness{4, 5};
  /// Strip value on its outermost rows; the centre line is 1 and values fall
  /// off linearly in between, like a text-centre probability map. Blobs take
  /// a uniform value in [edge_value, 1].
  double edge_value = 0.8;
  /// Full text-band height around the strip centre line.
  RealRange band_height{9.0, 12.0};
  IntRange length{24, 44};
  /// Peak curvature of the arc, radians per pixel.
  RealRange curvature{0.0, 0.02};
  IntRange noise_blobs{2, 5};
  /// Blob edge lengths (each side), pixels.
  IntRange noise_size{1, 3};
  IntRange gaps{1, 3};
  IntRange gap_width{1, 4};
  /// Minimum Chebyshev distance between a blob and any text-band pixel.
  int noise_clearance = 3;
  /// Minimum distance from any band or blob pixel to the map edge.
  int border = 8;
  /// Minimum spacing between text-band bounding boxes.
  int instance_spacing = 10;
  int placement_retries = 200;
  std::uint64_t seed = 0;

  bool operator==(const SynthConfig&) const = default;
};

/// Throws InvalidArgument when a range is empty or out of bounds.
void validate(const SynthConfig& config);

struct SynthSample {
  FeatureMap corrupted;  ///< 1 channel, text-centre probabilities
  FeatureMap clean;      ///< 1 channel, text-centre probabilities
  FeatureMap th;         ///< text height at strip and blob pixels
  FeatureMap ta;         ///< distance-line angle at strip and blob pixels
  std::vector<TextPolygon> truths;
  std::size_t gap_pixels = 0;
  std::size_t noise_pixels = 0;

  int width() const { return clean.width(); }
  int height() const { return clean.height(); }
};

/// One sample; std::nullopt when instances or blobs cannot be placed within
/// the retry budget.
std::optional<SynthSample> generate(const SynthConfig& config);

struct Corpus {
  std::vector<SynthSample> train;
  std::vector<SynthSample> test;
  std::size_t skipped = 0;
};

/// Samples use derive_seed(config.seed, index) (test indices continue after
/// the training ones); infeasible draws are skipped, counted and redrawn.
Corpus make_corpus(const SynthConfig& config, std::size_t train_count, std::size_t test_count);

/// <dir>/<split>/NNNN.map holds [corrupted, clean, th, ta]; NNNN.txt the
/// ground-truth polygons.
void save_split(const std::filesystem::path& dir, const std::string& split,
                const std::vector<SynthSample>& samples);
std::vector<SynthSample> load_split(const std::filesystem::path& dir, const std::string& split);

struct DetectionReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;

  DetectionReport& operator+=(const DetectionReport& other);
};

DetectionReport make_report(std::size_t tp, std::size_t fp, std::size_t fn);

/// Pixel-centre IoU of two polygons (no image bounds).
double polygon_iou(const TextPolygon& a, const TextPolygon& b);

/// One-to-one greedy matching in descending IoU; pairs at or above
/// `iou_threshold` count as true positives.
DetectionReport evaluate(const std::vector<TextPolygon>& detections,
                         const std::vector<TextPolygon>& truths, double iou_threshold = 0.5);

struct RunStats {
  std::size_t runs = 0;
  std::size_t missing = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std_population = 0.0;
};

/// Descriptive statistics over the runs that produced a value.
RunStats summarize(const std::vector<std::optional<double>>& values);

}  // namespace deepmorph

#endif  // DEEPMORPH_SYNTH_HPP_
