#ifndef DEEPMORPH_PIPELINE_HPP_
#define DEEPMORPH_PIPELINE_HPP_

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "deepmorph/geometry.hpp"
#include "deepmorph/morph.hpp"
#include "deepmorph/synth.hpp"
#include "deepmorph/trainer.hpp"

namespace deepmorph {

/// Regularizer applied to the text-centre map before segment proposal.
enum class FrontStage { none, op, dmop };
/// Regularizer applied to the rasterized segment map before contouring.
enum class BackStage { none, cl, dmcl };

std::string_view to_string(FrontStage s);
std::string_view to_string(BackStage s);
FrontStage parse_front_stage(std::string_view name);
BackStage parse_back_stage(std::string_view name);
/// "dmop+dmcl", "op+cl", "none+none", ...
std::string variant_name(FrontStage f, BackStage b);

struct PipelineConfig {
  /// Gain turning a text-centre margin into the segment score used by NMS.
  double logit_scale = 8.0;
  double nms_iou = 0.5;
  std::size_t min_area = kDefaultMinRegionArea;
  double match_iou = 0.5;
};

/// 2-channel [1 - p, p] text-centre map from a 1-channel probability map.
FeatureMap tc_two_channel(const FeatureMap& probability);

/// Foreground decision on a 2-channel text-centre output is
/// y1 - y0 > front_level. A residual block sums two votes (input and opened
/// input), so its level 1 keeps a pixel only when both agree; a zero-weight
/// residual DMOP then decides exactly like the flat opening it starts from.
double front_level(const MorphBlock* block);
/// Foreground decision on a 1-channel segment output is y > 0.5 with or
/// without residual: a pixel set by the input or by the closing is kept.
inline constexpr double kSegmentLevel = 0.5;

struct Models {
  std::optional<MorphBlock> dmop;
  std::optional<MorphBlock> dmcl;
};

struct PipelineTrace {
  BinaryMap tc_mask;
  std::vector<TextSegment> segments;  ///< after NMS
  FeatureMap ts;                      ///< rasterized segments
  BinaryMap final_mask;
  std::vector<TextPolygon> detections;
};

/// Front half: TC map (+ optional regularizer) -> segments -> NMS -> TS map.
PipelineTrace run_front(const SynthSample& s, FrontStage front, const Models& models,
                        const PipelineConfig& config);
/// Full pipeline for one sample.
PipelineTrace run_pipeline(const SynthSample& s, FrontStage front, BackStage back,
                           const Models& models, const PipelineConfig& config);

/// Aggregated detection counts over a sample set.
DetectionReport evaluate_variant(const std::vector<SynthSample>& samples, FrontStage front,
                                 BackStage back, const Models& models,
                                 const PipelineConfig& config);

/// DMOP training pairs: corrupted TC map (2-channel) -> the text pixels it
/// still contains (clean AND corrupted), i.e. a pure denoising target.
std::vector<TrainExample> dmop_examples(const std::vector<SynthSample>& samples);
/// DMCL training pairs: TS map from the given front stage -> the map plus
/// the rasterized ground-truth text regions. Segment overshoot beyond the
/// annotation is left alone: a closing can only add pixels, so the target
/// asks it to add the missing text and nothing else.
std::vector<TrainExample> dmcl_examples(const std::vector<SynthSample>& samples,
                                        FrontStage front, const Models& models,
                                        const PipelineConfig& config);

struct StageSpec {
  int se_size = 2;
  int depth = 2;
  /// Gain between block output margins and the loss head's logits.
  double logit_scale = 8.0;
};

TrainConfig default_dmop_training();
TrainConfig default_dmcl_training();

struct ExperimentConfig {
  StageSpec dmop{2, 2, 32.0};
  StageSpec dmcl{3, 4, 8.0};
  TrainConfig dmop_train = default_dmop_training();
  TrainConfig dmcl_train = default_dmcl_training();
  PipelineConfig pipeline;
};

/// Trains DMOP on the corrupted maps, then DMCL on segment maps produced
/// behind the trained DMOP. Throws NumericError if either run diverges.
Models train_models(const std::vector<SynthSample>& train, const ExperimentConfig& config,
                    std::vector<TrainReport>* reports = nullptr);

struct SweepSpec {
  /// Which block the grid varies: "dmop" or "dmcl". The other block keeps
  /// its configuration from `experiment`.
  std::string block = "dmcl";
  /// Grid axes; an empty list means the block's value from `experiment`.
  std::vector<int> se_sizes;
  std::vector<int> depths;
  int repetitions = 5;
  SynthConfig synth;
  std::size_t train_count = 100;
  std::size_t test_count = 50;
  ExperimentConfig experiment;
};

struct SweepRow {
  std::string block;
  int se_size = 0;
  int depth = 0;
  std::vector<std::optional<double>> f_measures;
  RunStats stats;
};

/// One row per (se_size, depth) pair, se_size outermost. Repetition r of
/// every configuration uses seeds XOR r, so all configurations see the same
/// corpora. A failed run is recorded as missing.
std::vector<SweepRow> ablation_sweep(const SweepSpec& spec);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace deepmorph

#endif  // DEEPMORPH_PIPELINE_HPP_
