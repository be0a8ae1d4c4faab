#include "deepmorph/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <thread>

#include "deepmorph/errors.hpp"
#include "deepmorph/rng.hpp"

namespace deepmorph {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

void validate(const TrainConfig& c) {
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw InvalidArgument("lr must be finite and >= 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (!(c.weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
  if (c.epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (c.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(c.lr_decay_factor > 0.0)) throw InvalidArgument("lr_decay_factor must be > 0");
  if (c.lr_decay_every < 0) throw InvalidArgument("lr_decay_every must be >= 0");
  if (c.threads < 1) throw InvalidArgument("threads must be >= 1");
}

void sgd_step(StructElem& se, FeatureMap& velocity, double lr, double momentum,
              double weight_decay) {
  require_finite(se.gradient(), "SE gradient");
  if (!velocity.same_shape(se.weights())) {
    velocity = FeatureMap(se.channels(), se.m(), se.n());
  }
  auto w = se.weights().values();
  auto g = se.gradient().values();
  auto v = velocity.values();
  for (std::size_t k = 0; k < w.size(); ++k) {
    v[k] = momentum * v[k] + g[k] + weight_decay * w[k];
    w[k] -= lr * v[k];
  }
  se.zero_grad();
}

void adam_step(StructElem& se, AdamState& state, double lr, double beta1, double beta2,
               double epsilon, double weight_decay) {
  require_finite(se.gradient(), "SE gradient");
  if (!state.m.same_shape(se.weights())) {
    state.m = FeatureMap(se.channels(), se.m(), se.n());
    state.v = state.m;
    state.t = 0;
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, double(state.t));
  const double c2 = 1.0 - std::pow(beta2, double(state.t));
  auto w = se.weights().values();
  auto g = se.gradient().values();
  auto m = state.m.values();
  auto v = state.v.values();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double gk = g[k] + weight_decay * w[k];
    m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
    v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
    w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + epsilon);
  }
  se.zero_grad();
}

ScalarLoss sum_loss() {
  return [](const FeatureMap& y, FeatureMap& grad) {
    grad = FeatureMap(y.channels(), y.width(), y.height(), 1.0);
    double s = 0.0;
    for (double v : y.values()) s += v;
    return s;
  };
}

ScalarLoss weighted_square_loss(FeatureMap weights) {
  return [weights = std::move(weights)](const FeatureMap& y, FeatureMap& grad) {
    if (!weights.same_shape(y)) throw ShapeError("loss weights do not match the output shape");
    grad = FeatureMap(y.channels(), y.width(), y.height());
    double s = 0.0;
    const auto yv = y.values();
    const auto wv = weights.values();
    auto gv = grad.values();
    for (std::size_t k = 0; k < yv.size(); ++k) {
      s += 0.5 * wv[k] * yv[k] * yv[k];
      gv[k] = wv[k] * yv[k];
    }
    return s;
  };
}

namespace {

struct Probe {
  double loss = 0.0;
  std::vector<std::vector<std::int32_t>> caches;
};

Probe probe(MorphBlock& block, const FeatureMap& input, const ScalarLoss& loss) {
  Probe p;
  const FeatureMap y = block.forward(input);
  FeatureMap g;
  p.loss = loss(y, g);
  for (const auto& layer : block.layers()) p.caches.push_back(layer.argcache());
  return p;
}

// Central difference at one coordinate, or nothing when a probe changed any
// window winner relative to the base pass.
std::optional<double> central_difference(MorphBlock& block, const FeatureMap& input,
                                         const ScalarLoss& loss, double& slot, double eps,
                                         const Probe& base) {
  const double original = slot;
  slot = original + eps;
  const Probe plus = probe(block, input, loss);
  slot = original - eps;
  const Probe minus = probe(block, input, loss);
  slot = original;
  if (plus.caches != base.caches || minus.caches != base.caches) return std::nullopt;
  return (plus.loss - minus.loss) / (2.0 * eps);
}

}  // namespace

GradCheckReport grad_check(MorphBlock& block, const FeatureMap& input, const ScalarLoss& loss,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0.0) || !(options.tol > 0.0)) {
    throw InvalidArgument("grad_check needs eps > 0 and tol > 0");
  }
  block.zero_grad();
  const Probe base = probe(block, input, loss);
  FeatureMap upstream;
  {
    const FeatureMap y = block.forward(input);
    loss(y, upstream);
  }
  const FeatureMap input_grad = block.backward(upstream);
  std::vector<FeatureMap> se_grads;
  for (const auto& layer : block.layers()) se_grads.push_back(layer.se().gradient());

  GradCheckReport report;
  for (std::size_t l = 0; l < block.layers().size(); ++l) {
    auto w = block.layers()[l].se().weights().values();
    const auto g = se_grads[l].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const auto fd = central_difference(block, input, loss, w[k], options.eps, base);
      if (!fd) {
        ++report.skipped;
        continue;
      }
      ++report.checked;
      report.max_se_deviation = std::max(report.max_se_deviation, std::abs(*fd - g[k]));
    }
  }
  if (options.check_input) {
    FeatureMap x = input;
    auto xv = x.values();
    const auto gx = input_grad.values();
    for (std::size_t k = 0; k < xv.size(); ++k) {
      const auto fd = central_difference(block, x, loss, xv[k], options.eps, base);
      if (!fd) {
        ++report.skipped;
        continue;
      }
      ++report.checked;
      report.max_input_deviation = std::max(report.max_input_deviation, std::abs(*fd - gx[k]));
    }
  }
  block.zero_grad();
  report.passed = report.max_se_deviation < options.tol && report.max_input_deviation < options.tol;
  return report;
}

FeatureMap jittered_map(std::uint64_t seed, int channels, int width, int height) {
  Rng rng(seed);
  FeatureMap m(channels, width, height);
  for (double& v : m.values()) v = (rng.coin() ? 1.0 : 0.0) + rng.uniform(0.0, 1e-3);
  return m;
}

void randomize_weights(MorphBlock& block, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : block.layers()) {
    for (double& w : layer.se().weights().values()) w = rng.uniform(-0.5, 0.5);
  }
}

LossHead tc_head(double logit_scale, double level, const std::array<double, 5>& weights) {
  return [logit_scale, level, weights](const FeatureMap& y, const BinaryMap& target,
                                       FeatureMap& grad) {
    if (y.channels() != 2) throw ShapeError("text-centre head expects a 2-channel output");
    FeatureMap logits = scaled(y, logit_scale);
    for (double& v : logits.plane(0)) v += logit_scale * level;
    const LossValue lv = balanced_ce_tc(logits, target, ScoreKind::logits);
    grad = scaled(lv.grad, logit_scale * weights[kTC]);
    std::array<double, 5> c{};
    c[kTC] = lv.value;
    return total_loss(c, weights);
  };
}

LossHead tm_head(double logit_scale, double level, const std::array<double, 5>& weights) {
  return [logit_scale, level, weights](const FeatureMap& y, const BinaryMap& target,
                                       FeatureMap& grad) {
    if (y.channels() != 1) throw ShapeError("text-map head expects a 1-channel output");
    FeatureMap logits(2, y.width(), y.height());
    auto z1 = logits.plane(1);
    const auto yv = y.values();
    for (std::size_t k = 0; k < yv.size(); ++k) z1[k] = logit_scale * (yv[k] - level);
    const LossValue lv = balanced_ce_ohem(logits, target, ScoreKind::logits);
    grad = scaled(extract_channel(lv.grad, 1), logit_scale * weights[kTM]);
    std::array<double, 5> c{};
    c[kTM] = lv.value;
    return total_loss(c, weights);
  };
}

namespace {

struct SampleResult {
  std::vector<FeatureMap> grads;
  LossBundle bundle;
  std::string error;
};

void run_sample(MorphBlock& local, const TrainExample& ex, const LossHead& head, double scale,
                SampleResult& out) {
  try {
    local.zero_grad();
    const FeatureMap y = local.forward(ex.input);
    FeatureMap g;
    out.bundle = head(y, ex.target, g);
    local.backward(scaled(g, scale));
    out.grads.clear();
    for (const auto& layer : local.layers()) out.grads.push_back(layer.se().gradient());
  } catch (const std::exception& e) {
    out.error = e.what();
  }
}

}  // namespace

TrainReport train(MorphBlock block, const std::vector<TrainExample>& data, const LossHead& head,
                  const TrainConfig& config) {
  validate(config);
  if (data.empty()) throw InvalidArgument("training set is empty");

  TrainReport report;
  const std::size_t n = data.size();
  const std::size_t layer_count = block.layers().size();
  std::vector<FeatureMap> velocity(layer_count);
  std::vector<AdamState> adam(layer_count);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const auto threads = static_cast<std::size_t>(config.threads);

  for (int epoch = 0; epoch < config.epochs && !report.diverged; ++epoch) {
    const auto start_time = std::chrono::steady_clock::now();
    const int decays = config.lr_decay_every > 0 ? epoch / config.lr_decay_every : 0;
    const double lr = config.lr * std::pow(config.lr_decay_factor, decays);

    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next() % i)]);
    }

    std::array<double, 5> sums{};
    std::array<double, 5> weights = kDefaultLossWeights;
    for (std::size_t begin = 0; begin < n && !report.diverged; begin += batch) {
      const std::size_t count = std::min(batch, n - begin);
      const double scale = 1.0 / double(count);
      std::vector<SampleResult> results(count);
      const std::size_t workers = std::min(threads, count);
      auto work = [&](std::size_t w) {
        MorphBlock local = block;
        for (std::size_t k = w; k < count; k += workers) {
          run_sample(local, data[order[begin + k]], head, scale, results[k]);
        }
      };
      if (workers <= 1) {
        work(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
      }

      // Ordered reduction keeps the sum independent of the worker count.
      block.zero_grad();
      for (const SampleResult& r : results) {
        if (!r.error.empty()) {
          report.diverged = true;
          report.message = "epoch " + std::to_string(epoch) + ": " + r.error;
          break;
        }
        if (!std::isfinite(r.bundle.total)) {
          report.diverged = true;
          report.message = "epoch " + std::to_string(epoch) + ": loss is not finite";
          break;
        }
        weights = r.bundle.weights;
        for (std::size_t t = 0; t < 5; ++t) sums[t] += r.bundle.components[t];
        for (std::size_t l = 0; l < layer_count; ++l) {
          auto dst = block.layers()[l].se().gradient().values();
          const auto src = r.grads[l].values();
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
      }
      if (report.diverged) break;

      try {
        for (std::size_t l = 0; l < layer_count; ++l) {
          MorphLayer& layer = block.layers()[l];
          if (!layer.trainable()) {
            layer.se().zero_grad();
            continue;
          }
          if (config.optimizer == OptimizerKind::sgd) {
            sgd_step(layer.se(), velocity[l], lr, config.momentum, config.weight_decay);
          } else {
            adam_step(layer.se(), adam[l], lr, config.adam_beta1, config.adam_beta2,
                      config.adam_epsilon, config.weight_decay);
          }
        }
      } catch (const NumericError& e) {
        report.diverged = true;
        report.message = "epoch " + std::to_string(epoch) + ": " + e.what();
        break;
      }
      ++report.optimizer_steps;
    }
    if (report.diverged) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    for (double& s : sums) s /= double(n);
    rec.loss = total_loss(sums, weights);
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    report.history.push_back(rec);
  }
  block.zero_grad();
  report.block = std::move(block);
  return report;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_loss_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,l_tc,l_tm,total\n";
  for (const auto& r : report.history) {
    out << r.epoch << ',' << shortest(r.loss.l_tc()) << ',' << shortest(r.loss.l_tm()) << ','
        << shortest(r.loss.total) << '\n';
  }
}

void write_timing_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,seconds\n";
  for (const auto& r : report.history) out << r.epoch << ',' << shortest(r.seconds) << '\n';
}

}  // namespace deepmorph
