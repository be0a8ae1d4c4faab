#ifndef DEEPMORPH_LOSSES_HPP_
#define DEEPMORPH_LOSSES_HPP_

#include <array>
#include <cstddef>
#include <vector>

#include "deepmorph/feature_map.hpp"

namespace deepmorph {

inline constexpr double kProbabilityClip = 1e-7;

/// How a 2-channel prediction encodes the foreground probability.
///   logits:        p = softmax(channel 0, channel 1)[1]
///   probabilities: p = channel 1 (channel 0 is ignored)
/// Either way p is clipped to [1e-7, 1 - 1e-7] before any log; clipped
/// pixels contribute no gradient.
enum class ScoreKind { logits, probabilities };

/// Scalar loss and its gradient with respect to the prediction map.
struct LossValue {
  double value = 0.0;
  FeatureMap grad;
};

/// Foreground probability per pixel (unclipped) of a 2-channel prediction.
std::vector<double> foreground_probability(const FeatureMap& pred, ScoreKind kind);

struct OhemOptions {
  double negative_ratio = 3.0;
  /// Negatives kept when the target has no positive pixel at all.
  std::size_t negatives_without_positives = 100;
};

/// Which pixels online hard example mining keeps: every positive plus the
/// highest-loss negatives (ties broken by scan order).
struct OhemSelection {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

OhemSelection ohem_select(const std::vector<double>& negative_loss, const BinaryMap& target,
                          const OhemOptions& options = {});

/// Cross-entropy averaged over all positives and the hardest
/// negative_ratio x |positives| negatives.
LossValue balanced_ce_ohem(const FeatureMap& pred, const BinaryMap& target,
                           ScoreKind kind = ScoreKind::logits, const OhemOptions& options = {});

/// Class-balanced cross-entropy: mean over all pixels of
/// w * y * -ln p + (1 - w) * (1 - y) * -ln(1 - p) with w = positive_weight.
LossValue balanced_ce_tc(const FeatureMap& pred, const BinaryMap& target,
                         ScoreKind kind = ScoreKind::logits, double positive_weight = 0.75);

/// Mean smoothed-L1 over pixels where mask == 1. An empty mask yields 0.
LossValue smooth_l1(const FeatureMap& pred, const FeatureMap& target, const BinaryMap& mask);

enum LossTerm : std::size_t { kTR = 0, kTC = 1, kTH = 2, kTA = 3, kTM = 4 };

inline constexpr std::array<double, 5> kDefaultLossWeights = {1.0, 2.0, 1.0, 1.0, 1.0};

/// The five-term objective L = sum_k lambda_k * L_k over (TR, TC, TH, TA, TM).
struct LossBundle {
  std::array<double, 5> components{};
  std::array<double, 5> weights = kDefaultLossWeights;
  double total = 0.0;

  double l_tr() const { return components[kTR]; }
  double l_tc() const { return components[kTC]; }
  double l_th() const { return components[kTH]; }
  double l_ta() const { return components[kTA]; }
  double l_tm() const { return components[kTM]; }
};

/// Throws NumericError when a component is not finite.
LossBundle total_loss(const std::array<double, 5>& components,
                      const std::array<double, 5>& weights = kDefaultLossWeights);

}  // namespace deepmorph

#endif  // DEEPMORPH_LOSSES_HPP_
