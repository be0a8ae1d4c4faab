#include "deepmorph/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepmorph/errors.hpp"

namespace deepmorph {

namespace {

void check_prediction(const FeatureMap& pred, const BinaryMap& target, const char* op) {
  if (pred.channels() != 2) {
    throw ShapeError(std::string(op) + ": prediction must have 2 channels, got " +
                     pred.shape_string());
  }
  if (pred.width() != target.width() || pred.height() != target.height()) {
    throw ShapeError(std::string(op) + ": prediction " + pred.shape_string() +
                     " does not match target extent");
  }
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// d(-ln p)/dp = -1/p and d(-ln(1-p))/dp = 1/(1-p), pushed through the score
// encoding into the two prediction channels. `dloss_dp` is zero for clipped p.
void add_prob_grad(FeatureMap& grad, std::size_t pixel, double p, double dloss_dp,
                   ScoreKind kind) {
  const std::size_t plane = grad.plane_size();
  auto g = grad.values();
  if (kind == ScoreKind::logits) {
    // p = sigmoid(z1 - z0)
    const double dp_dz = p * (1.0 - p);
    g[plane + pixel] += dloss_dp * dp_dz;
    g[pixel] -= dloss_dp * dp_dz;
  } else {
    g[plane + pixel] += dloss_dp;
  }
}

struct PixelTerm {
  double loss;
  double dloss_dp;
};

PixelTerm positive_term(double p) {
  if (p < kProbabilityClip) return {-std::log(kProbabilityClip), 0.0};
  if (p > 1.0 - kProbabilityClip) return {-std::log(1.0 - kProbabilityClip), 0.0};
  return {-std::log(p), -1.0 / p};
}

PixelTerm negative_term(double p) {
  if (p < kProbabilityClip) return {-std::log(1.0 - kProbabilityClip), 0.0};
  if (p > 1.0 - kProbabilityClip) return {-std::log(kProbabilityClip), 0.0};
  return {-std::log(1.0 - p), 1.0 / (1.0 - p)};
}

}  // namespace

std::vector<double> foreground_probability(const FeatureMap& pred, ScoreKind kind) {
  if (pred.channels() != 2) throw ShapeError("prediction must have 2 channels");
  const std::size_t plane = pred.plane_size();
  auto v = pred.values();
  std::vector<double> p(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    p[i] = kind == ScoreKind::logits ? sigmoid(v[plane + i] - v[i]) : v[plane + i];
  }
  return p;
}

OhemSelection ohem_select(const std::vector<double>& negative_loss, const BinaryMap& target,
                          const OhemOptions& options) {
  if (negative_loss.size() != target.size()) throw ShapeError("ohem_select: size mismatch");
  OhemSelection sel;
  std::vector<std::size_t> negatives;
  auto t = target.values();
  for (std::size_t i = 0; i < t.size(); ++i) (t[i] ? sel.positives : negatives).push_back(i);
  std::size_t keep = sel.positives.empty()
                         ? options.negatives_without_positives
                         : static_cast<std::size_t>(std::llround(
                               options.negative_ratio * static_cast<double>(sel.positives.size())));
  keep = std::min(keep, negatives.size());
  std::stable_sort(negatives.begin(), negatives.end(), [&](std::size_t a, std::size_t b) {
    return negative_loss[a] > negative_loss[b];
  });
  negatives.resize(keep);
  std::sort(negatives.begin(), negatives.end());
  sel.negatives = std::move(negatives);
  return sel;
}

LossValue balanced_ce_ohem(const FeatureMap& pred, const BinaryMap& target, ScoreKind kind,
                           const OhemOptions& options) {
  check_prediction(pred, target, "balanced_ce_ohem");
  const auto p = foreground_probability(pred, kind);
  std::vector<double> neg_loss(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) neg_loss[i] = negative_term(p[i]).loss;
  const OhemSelection sel = ohem_select(neg_loss, target, options);

  LossValue out{0.0, FeatureMap(2, pred.width(), pred.height())};
  const std::size_t count = sel.positives.size() + sel.negatives.size();
  if (count == 0) return out;
  const double scale = 1.0 / static_cast<double>(count);
  double sum = 0.0;
  for (std::size_t i : sel.positives) {
    const PixelTerm t = positive_term(p[i]);
    sum += t.loss;
    add_prob_grad(out.grad, i, p[i], t.dloss_dp * scale, kind);
  }
  for (std::size_t i : sel.negatives) {
    const PixelTerm t = negative_term(p[i]);
    sum += t.loss;
    add_prob_grad(out.grad, i, p[i], t.dloss_dp * scale, kind);
  }
  out.value = sum * scale;
  return out;
}

LossValue balanced_ce_tc(const FeatureMap& pred, const BinaryMap& target, ScoreKind kind,
                         double positive_weight) {
  check_prediction(pred, target, "balanced_ce_tc");
  const auto p = foreground_probability(pred, kind);
  LossValue out{0.0, FeatureMap(2, pred.width(), pred.height())};
  const double scale = 1.0 / static_cast<double>(p.size());
  auto t = target.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double w = t[i] ? positive_weight : 1.0 - positive_weight;
    const PixelTerm term = t[i] ? positive_term(p[i]) : negative_term(p[i]);
    sum += w * term.loss;
    add_prob_grad(out.grad, i, p[i], w * term.dloss_dp * scale, kind);
  }
  out.value = sum * scale;
  return out;
}

LossValue smooth_l1(const FeatureMap& pred, const FeatureMap& target, const BinaryMap& mask) {
  if (!pred.same_shape(target) || pred.channels() != 1 || pred.width() != mask.width() ||
      pred.height() != mask.height()) {
    throw ShapeError("smooth_l1: prediction " + pred.shape_string() + ", target " +
                     target.shape_string() + " and mask must share one 1-channel extent");
  }
  LossValue out{0.0, FeatureMap(1, pred.width(), pred.height())};
  const std::size_t count = mask.count();
  if (count == 0) return out;
  const double scale = 1.0 / static_cast<double>(count);
  auto pv = pred.values();
  auto tv = target.values();
  auto m = mask.values();
  auto g = out.grad.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!m[i]) continue;
    const double d = pv[i] - tv[i];
    if (std::abs(d) < 1.0) {
      sum += 0.5 * d * d;
      g[i] = d * scale;
    } else {
      sum += std::abs(d) - 0.5;
      g[i] = (d > 0 ? 1.0 : -1.0) * scale;
    }
  }
  out.value = sum * scale;
  return out;
}

LossBundle total_loss(const std::array<double, 5>& components, const std::array<double, 5>& weights) {
  LossBundle b;
  b.components = components;
  b.weights = weights;
  for (std::size_t k = 0; k < components.size(); ++k) {
    if (!std::isfinite(components[k]) || !std::isfinite(weights[k])) {
      throw NumericError("total_loss: non-finite loss component " + std::to_string(k));
    }
    b.total += weights[k] * components[k];
  }
  return b;
}

}  // namespace deepmorph
