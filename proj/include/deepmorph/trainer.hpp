#ifndef DEEPMORPH_TRAINER_HPP_
#define DEEPMORPH_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "deepmorph/feature_map.hpp"
#include "deepmorph/losses.hpp"
#include "deepmorph/morph.hpp"

namespace deepmorph {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 100;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double lr_decay_factor = 0.1;
  /// Epochs between learning-rate decays; 0 disables the schedule.
  int lr_decay_every = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Worker threads for the per-sample passes; results do not depend on it.
  int threads = 1;
};

/// Throws InvalidArgument for out-of-range settings. lr may be 0 (frozen run).
void validate(const TrainConfig& config);

/// velocity = momentum * velocity + grad + weight_decay * weights;
/// weights -= lr * velocity; grad zeroed. Throws NumericError (weights left
/// untouched) when the gradient is not finite.
void sgd_step(StructElem& se, FeatureMap& velocity, double lr, double momentum,
              double weight_decay);

struct AdamState {
  FeatureMap m;
  FeatureMap v;
  std::int64_t t = 0;
};

/// Adam with L2 weight decay folded into the gradient.
void adam_step(StructElem& se, AdamState& state, double lr, double beta1, double beta2,
               double epsilon, double weight_decay);

/// Scalar functional of a block output; writes dL/d(output) into `grad`.
using ScalarLoss = std::function<double(const FeatureMap& output, FeatureMap& grad)>;

/// L = sum of all output values.
ScalarLoss sum_loss();
/// L = 0.5 * sum w * y^2 with fixed per-pixel weights.
ScalarLoss weighted_square_loss(FeatureMap weights);

struct GradCheckOptions {
  double eps = 1e-3;
  double tol = 1e-4;
  bool check_input = true;
};

struct GradCheckReport {
  double max_se_deviation = 0.0;
  double max_input_deviation = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +/- eps probes changed some window winner.
  std::size_t skipped = 0;
  bool passed = true;
};

/// Central finite differences over every SE weight of the block (and every
/// input value when requested) against the analytic backward pass.
/// Coordinates whose perturbation flips any argmax/argmin are skipped and
/// counted instead of compared.
GradCheckReport grad_check(MorphBlock& block, const FeatureMap& input, const ScalarLoss& loss,
                           const GradCheckOptions& options = {});

/// Random {0,1} map plus per-pixel jitter uniform in [0, 1e-3); together with
/// distinct random SE weights this makes window winners unique.
FeatureMap jittered_map(std::uint64_t seed, int channels, int width, int height);
/// Random SE weights in [-0.5, 0.5) for every layer.
void randomize_weights(MorphBlock& block, std::uint64_t seed);

struct TrainExample {
  FeatureMap input;
  BinaryMap target;
};

/// Maps a block output to a loss bundle and writes dL/d(output) into grad.
using LossHead =
    std::function<LossBundle(const FeatureMap& output, const BinaryMap& target, FeatureMap& grad)>;

/// Text-centre head for 2-channel blocks: foreground logit
/// scale * (y1 - y0 - level), loss lambda_TC * balanced_ce_tc.
LossHead tc_head(double logit_scale, double level = 0.0,
                 const std::array<double, 5>& weights = kDefaultLossWeights);
/// Text-map head for 1-channel blocks: logits = [0, scale * (output - level)],
/// loss lambda_TM * balanced_ce_ohem.
LossHead tm_head(double logit_scale, double level,
                 const std::array<double, 5>& weights = kDefaultLossWeights);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  LossBundle loss;
  double seconds = 0.0;
};

struct TrainReport {
  MorphBlock block;
  std::vector<EpochRecord> history;
  std::size_t optimizer_steps = 0;
  bool diverged = false;
  std::string message;
};

/// Mini-batch training of the block's trainable SEs. Samples are shuffled per
/// epoch from `seed`; per-sample gradients are reduced in sample order, so
/// the result is bit-identical for every thread count. A non-finite loss or
/// gradient stops training and returns the history so far with diverged set.
TrainReport train(MorphBlock block, const std::vector<TrainExample>& data, const LossHead& head,
                  const TrainConfig& config);

/// epoch,l_tc,l_tm,total
void write_loss_csv(std::ostream& out, const TrainReport& report);
/// epoch,seconds (wall clock, not reproducible)
void write_timing_csv(std::ostream& out, const TrainReport& report);

}  // namespace deepmorph

#endif  // DEEPMORPH_TRAINER_HPP_
