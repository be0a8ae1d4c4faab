#include <doctest.h>

#include <cmath>
#include <sstream>

#include "deepmorph/errors.hpp"
#include "deepmorph/pipeline.hpp"
#include "deepmorph/synth.hpp"
#include "deepmorph/trainer.hpp"
#include "oracles.hpp"

using namespace deepmorph;

namespace {

std::vector<TrainExample> denoise_set(std::size_t n, std::uint64_t seed) {
  SynthConfig sc;
  sc.seed = seed;
  return dmop_examples(make_corpus(sc, n, 0).train);
}

LossHead dmop_head() {
  const ExperimentConfig ec;
  return tc_head(ec.dmop.logit_scale, 1.0);
}

}  // namespace

TEST_CASE("SGD arithmetic") {
  StructElem se(1, 1, 1);
  FeatureMap vel(1, 1, 1);
  sgd_step(se, vel, 0.1, 0.9, 0.0);
  CHECK(se.weight(0, 0, 0) == 0.0);

  se.grad(0, 0, 0) = 1.0;
  sgd_step(se, vel, 0.1, 0.0, 0.0);
  CHECK(se.weight(0, 0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(se.grad(0, 0, 0) == 0.0);

  StructElem m(1, 1, 1);
  FeatureMap v(1, 1, 1);
  m.grad(0, 0, 0) = 1.0;
  sgd_step(m, v, 0.1, 0.9, 0.0);
  m.grad(0, 0, 0) = 1.0;
  sgd_step(m, v, 0.1, 0.9, 0.0);
  CHECK(m.weight(0, 0, 0) == doctest::Approx(-0.29).epsilon(1e-12));

  StructElem bad(1, 1, 1);
  bad.weight(0, 0, 0) = 0.5;
  bad.grad(0, 0, 0) = std::nan("");
  CHECK_THROWS_AS(sgd_step(bad, v, 0.1, 0.9, 0.0), NumericError);
  CHECK(bad.weight(0, 0, 0) == 0.5);
}

TEST_CASE("Adam moves against the gradient by about lr on the first step") {
  StructElem se(1, 1, 1);
  AdamState st;
  se.grad(0, 0, 0) = 3.0;
  adam_step(se, st, 0.01, 0.9, 0.999, 1e-8, 0.0);
  CHECK(se.weight(0, 0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("gradient check: identity block, DMOP, DMCL and the sign-flip control") {
  MorphBlock id("identity", {MorphLayer(MorphKind::dilation, StructElem(1, 1, 1))}, false);
  const FeatureMap in = jittered_map(1, 1, 7, 5);
  id.forward(in);
  id.backward(FeatureMap(1, 7, 5, 1.0));
  CHECK(id.layers()[0].se().grad(0, 0, 0) == 35.0);
  id.zero_grad();
  CHECK(grad_check(id, in, sum_loss()).passed);

  for (int t = 0; t < 4; ++t) {
    MorphBlock op = MorphBlock::dmop(1);
    randomize_weights(op, 10 + t);
    const FeatureMap x = jittered_map(20 + t, 1, 8, 8);
    const FeatureMap w = jittered_map(30 + t, 1, 8, 8);
    const auto rep = grad_check(op, x, weighted_square_loss(w));
    CHECK(rep.passed);
    CHECK(rep.max_se_deviation < 1e-4);

    MorphBlock cl = MorphBlock::dmcl(1);
    randomize_weights(cl, 40 + t);
    CHECK(grad_check(cl, x, weighted_square_loss(w)).passed);

    op.set_gradient_fault(true);
    CHECK_FALSE(grad_check(op, x, weighted_square_loss(w)).passed);
  }
}

TEST_CASE("jittered maps are binary plus sub-1e-3 noise") {
  const FeatureMap m = jittered_map(5, 2, 9, 9);
  for (double v : m.values()) {
    const double frac = v - std::floor(v);
    CHECK(frac < 1e-3);
    CHECK(v >= 0.0);
    CHECK(v < 1.001);
  }
  CHECK(jittered_map(5, 2, 9, 9) == m);
}

TEST_CASE("training: frozen run, step count, determinism") {
  const auto data = denoise_set(12, 3);
  TrainConfig tc = default_dmop_training();
  tc.epochs = 3;

  SUBCASE("lr = 0 leaves every parameter byte-identical") {
    tc.lr = 0.0;
    const MorphBlock start = MorphBlock::dmop(2);
    const TrainReport r = train(start, data, dmop_head(), tc);
    REQUIRE(r.history.size() == 3);
    for (std::size_t k = 0; k < start.layers().size(); ++k) {
      CHECK(r.block.layers()[k].se().weights() == start.layers()[k].se().weights());
    }
    CHECK(r.history[0].loss.total == r.history[2].loss.total);
  }
  SUBCASE("one sample, one epoch, one optimizer step") {
    tc.epochs = 1;
    const TrainReport r = train(MorphBlock::dmop(2), {data[0]}, dmop_head(), tc);
    CHECK(r.optimizer_steps == 1);
    CHECK(r.history.size() == 1);
  }
  SUBCASE("bit-identical across runs and thread counts") {
    const TrainReport a = train(MorphBlock::dmop(2), data, dmop_head(), tc);
    const TrainReport b = train(MorphBlock::dmop(2), data, dmop_head(), tc);
    tc.threads = 3;
    const TrainReport c = train(MorphBlock::dmop(2), data, dmop_head(), tc);
    std::ostringstream la, lb, lc;
    write_loss_csv(la, a);
    write_loss_csv(lb, b);
    write_loss_csv(lc, c);
    CHECK(la.str() == lb.str());
    CHECK(la.str() == lc.str());
    CHECK(la.str().rfind("epoch,l_tc,l_tm,total\n", 0) == 0);
    for (std::size_t k = 0; k < a.block.layers().size(); ++k) {
      CHECK(a.block.layers()[k].se().weights() == b.block.layers()[k].se().weights());
      CHECK(a.block.layers()[k].se().weights() == c.block.layers()[k].se().weights());
    }
  }
  SUBCASE("frozen baselines never move") {
    tc.lr = 0.5;
    const TrainReport r = train(MorphBlock::flat_opening(2), data, dmop_head(), tc);
    for (const auto& layer : r.block.layers()) {
      for (double v : layer.se().weights().values()) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("training reports divergence and validates its config") {
  const auto data = denoise_set(4, 4);
  TrainConfig tc = default_dmop_training();
  tc.lr = 1e300;
  tc.epochs = 3;
  const TrainReport r = train(MorphBlock::dmop(2), data, dmop_head(), tc);
  CHECK(r.diverged);
  CHECK(r.history.size() < 3);
  CHECK_FALSE(r.message.empty());

  TrainConfig bad;
  bad.lr = -1.0;
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate(bad), InvalidArgument);
  CHECK_THROWS_AS(train(MorphBlock::dmop(2), {}, dmop_head(), TrainConfig{}), InvalidArgument);
}

TEST_CASE("denoise task: the text-centre loss goes down") {
  const auto data = denoise_set(40, 5);
  TrainConfig tc = default_dmop_training();
  tc.epochs = 25;
  const TrainReport r = train(MorphBlock::dmop(2), data, dmop_head(), tc);
  REQUIRE(r.history.size() == 25);
  CHECK(r.history.back().loss.l_tc() < r.history.front().loss.l_tc());
  // Five-epoch running means never rise after epoch 10.
  auto window = [&](std::size_t end) {
    double s = 0.0;
    for (std::size_t k = end - 5; k < end; ++k) s += r.history[k].loss.total;
    return s / 5.0;
  };
  for (std::size_t end = 11; end < r.history.size(); ++end) {
    CHECK(window(end + 1) <= window(end) + 1e-12);
  }
}
