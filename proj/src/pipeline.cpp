#include "deepmorph/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

#include "deepmorph/errors.hpp"

namespace deepmorph {

std::string_view to_string(FrontStage s) {
  switch (s) {
    case FrontStage::none: return "none";
    case FrontStage::op: return "op";
    case FrontStage::dmop: return "dmop";
  }
  return "?";
}

std::string_view to_string(BackStage s) {
  switch (s) {
    case BackStage::none: return "none";
    case BackStage::cl: return "cl";
    case BackStage::dmcl: return "dmcl";
  }
  return "?";
}

FrontStage parse_front_stage(std::string_view name) {
  if (name == "none") return FrontStage::none;
  if (name == "op") return FrontStage::op;
  if (name == "dmop") return FrontStage::dmop;
  throw InvalidArgument("unknown front stage '" + std::string(name) + "'");
}

BackStage parse_back_stage(std::string_view name) {
  if (name == "none") return BackStage::none;
  if (name == "cl") return BackStage::cl;
  if (name == "dmcl") return BackStage::dmcl;
  throw InvalidArgument("unknown back stage '" + std::string(name) + "'");
}

std::string variant_name(FrontStage f, BackStage b) {
  return std::string(to_string(f)) + "+" + std::string(to_string(b));
}

FeatureMap tc_two_channel(const FeatureMap& probability) {
  if (probability.channels() != 1) throw ShapeError("expected a 1-channel probability map");
  FeatureMap out(2, probability.width(), probability.height());
  auto bg = out.plane(0);
  auto fg = out.plane(1);
  const auto p = probability.values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    bg[k] = 1.0 - p[k];
    fg[k] = p[k];
  }
  return out;
}

double front_level(const MorphBlock* block) {
  return block != nullptr && block->residual() ? 1.0 : 0.0;
}

TrainConfig default_dmop_training() {
  TrainConfig c;
  c.lr = 0.002;
  c.epochs = 20;
  return c;
}

TrainConfig default_dmcl_training() {
  TrainConfig c;
  c.lr = 0.01;
  c.epochs = 30;
  return c;
}

namespace {

const MorphBlock& require(const std::optional<MorphBlock>& b, const char* what) {
  if (!b) throw InvalidArgument(std::string("pipeline needs a trained ") + what + " block");
  return *b;
}

}  // namespace

PipelineTrace run_front(const SynthSample& s, FrontStage front, const Models& models,
                        const PipelineConfig& config) {
  const int w = s.width();
  const int h = s.height();
  PipelineTrace t;
  FeatureMap score(1, w, h);
  if (front == FrontStage::none) {
    t.tc_mask = threshold(s.corrupted, 0, 0.5);
    score = s.corrupted;
  } else {
    MorphBlock block = front == FrontStage::op ? MorphBlock::flat_opening(2, 2, 1)
                                               : require(models.dmop, "DMOP");
    const FeatureMap y = block.forward(tc_two_channel(s.corrupted));
    const double level = front_level(&block);
    t.tc_mask = BinaryMap(w, h);
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        const double margin = y.at(1, yy, xx) - y.at(0, yy, xx) - level;
        t.tc_mask.set(xx, yy, margin > 0.0);
        score.at(0, yy, xx) = 1.0 / (1.0 + std::exp(-config.logit_scale * margin));
      }
    }
  }
  t.segments = nms_segments(propose_segments(t.tc_mask, s.th, s.ta, &score), config.nms_iou);
  t.ts = rasterize_segments(t.segments, w, h);
  return t;
}

PipelineTrace run_pipeline(const SynthSample& s, FrontStage front, BackStage back,
                           const Models& models, const PipelineConfig& config) {
  PipelineTrace t = run_front(s, front, models, config);
  if (back == BackStage::none) {
    t.final_mask = threshold(t.ts, 0, 0.5);
  } else {
    MorphBlock block = back == BackStage::cl ? MorphBlock::flat_closing(1, 3, 1)
                                             : require(models.dmcl, "DMCL");
    const FeatureMap y = block.forward(t.ts);
    t.final_mask = threshold(y, 0, kSegmentLevel);
  }
  t.detections = extract_regions(t.final_mask, config.min_area);
  return t;
}

DetectionReport evaluate_variant(const std::vector<SynthSample>& samples, FrontStage front,
                                 BackStage back, const Models& models,
                                 const PipelineConfig& config) {
  DetectionReport total;
  for (const SynthSample& s : samples) {
    const PipelineTrace t = run_pipeline(s, front, back, models, config);
    total += evaluate(t.detections, s.truths, config.match_iou);
  }
  return total;
}

std::vector<TrainExample> dmop_examples(const std::vector<SynthSample>& samples) {
  std::vector<TrainExample> out;
  out.reserve(samples.size());
  for (const SynthSample& s : samples) {
    // Text pixels that survived the corruption: blobs must go, gaps stay
    // (an opening cannot bridge them; that is the closing stage's job).
    BinaryMap target = threshold(s.clean, 0, 0.5);
    const BinaryMap present = threshold(s.corrupted, 0, 0.5);
    for (int y = 0; y < target.height(); ++y) {
      for (int x = 0; x < target.width(); ++x) target.set(x, y, target.at(x, y) && present.at(x, y));
    }
    out.push_back({tc_two_channel(s.corrupted), std::move(target)});
  }
  return out;
}

std::vector<TrainExample> dmcl_examples(const std::vector<SynthSample>& samples,
                                        FrontStage front, const Models& models,
                                        const PipelineConfig& config) {
  std::vector<TrainExample> out;
  out.reserve(samples.size());
  for (const SynthSample& s : samples) {
    PipelineTrace t = run_front(s, front, models, config);
    BinaryMap target = rasterize_polygons(s.truths, s.width(), s.height());
    for (int y = 0; y < target.height(); ++y) {
      for (int x = 0; x < target.width(); ++x) {
        if (t.ts.at(0, y, x) > kSegmentLevel) target.set(x, y, true);
      }
    }
    out.push_back({std::move(t.ts), std::move(target)});
  }
  return out;
}

namespace {

MorphBlock finish(TrainReport report, const char* what, std::vector<TrainReport>* reports) {
  if (report.diverged) throw NumericError(std::string(what) + " training diverged: " + report.message);
  MorphBlock b = report.block;
  if (reports) reports->push_back(std::move(report));
  return b;
}

MorphBlock train_dmop(const std::vector<SynthSample>& train_set, const ExperimentConfig& c,
                      std::vector<TrainReport>* reports) {
  MorphBlock block = MorphBlock::dmop(2, c.dmop.se_size, c.dmop.depth);
  const double level = front_level(&block);
  return finish(train(std::move(block), dmop_examples(train_set),
                      tc_head(c.dmop.logit_scale, level), c.dmop_train),
                "DMOP", reports);
}

MorphBlock train_dmcl(const std::vector<SynthSample>& train_set, const Models& front,
                      const ExperimentConfig& c, std::vector<TrainReport>* reports) {
  const auto data = dmcl_examples(train_set, FrontStage::dmop, front, c.pipeline);
  return finish(train(MorphBlock::dmcl(1, c.dmcl.se_size, c.dmcl.depth), data,
                      tm_head(c.dmcl.logit_scale, kSegmentLevel), c.dmcl_train),
                "DMCL", reports);
}

}  // namespace

Models train_models(const std::vector<SynthSample>& train_set, const ExperimentConfig& config,
                    std::vector<TrainReport>* reports) {
  Models m;
  m.dmop = train_dmop(train_set, config, reports);
  m.dmcl = train_dmcl(train_set, m, config, reports);
  return m;
}

std::vector<SweepRow> ablation_sweep(const SweepSpec& spec) {
  if (spec.repetitions < 1) throw InvalidArgument("sweep needs at least one repetition");
  if (spec.block != "dmop" && spec.block != "dmcl") {
    throw InvalidArgument("sweep block must be dmop or dmcl");
  }
  const StageSpec& base = spec.block == "dmop" ? spec.experiment.dmop : spec.experiment.dmcl;
  const std::vector<int> sizes = spec.se_sizes.empty() ? std::vector<int>{base.se_size} : spec.se_sizes;
  const std::vector<int> depths = spec.depths.empty() ? std::vector<int>{base.depth} : spec.depths;

  const auto reps = static_cast<std::size_t>(spec.repetitions);
  std::vector<std::optional<Corpus>> corpora(reps);
  // With a DMCL grid the DMOP of each repetition is shared by every cell.
  std::vector<std::optional<MorphBlock>> fronts(reps);

  std::vector<SweepRow> rows;
  for (int size : sizes) {
    for (int depth : depths) {
      SweepRow row;
      row.block = spec.block;
      row.se_size = size;
      row.depth = depth;
      for (std::size_t r = 0; r < reps; ++r) {
        std::optional<double> f;
        try {
          ExperimentConfig ec = spec.experiment;
          StageSpec& stage = spec.block == "dmop" ? ec.dmop : ec.dmcl;
          stage.se_size = size;
          stage.depth = depth;
          ec.dmop_train.seed ^= r;
          ec.dmcl_train.seed ^= r;
          if (!corpora[r]) {
            SynthConfig sc = spec.synth;
            sc.seed ^= r;
            corpora[r] = make_corpus(sc, spec.train_count, spec.test_count);
          }
          Models m;
          if (spec.block == "dmcl") {
            if (!fronts[r]) fronts[r] = train_dmop(corpora[r]->train, ec, nullptr);
            m.dmop = fronts[r];
          } else {
            m.dmop = train_dmop(corpora[r]->train, ec, nullptr);
          }
          m.dmcl = train_dmcl(corpora[r]->train, m, ec, nullptr);
          f = evaluate_variant(corpora[r]->test, FrontStage::dmop, BackStage::dmcl, m,
                               ec.pipeline)
                  .f_measure;
        } catch (const Error&) {
          f.reset();
        }
        row.f_measures.push_back(f);
      }
      row.stats = summarize(row.f_measures);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "# std_f_population is the population standard deviation (divisor n)\n";
  out << "block,se,layers,runs,missing,min_f,max_f,mean_f,std_f_population\n";
  for (const SweepRow& r : rows) {
    out << r.block << ',' << r.se_size << ',' << r.depth << ',' << r.stats.runs << ','
        << r.stats.missing << ',' << shortest(r.stats.min) << ',' << shortest(r.stats.max) << ','
        << shortest(r.stats.mean) << ',' << shortest(r.stats.std_population) << '\n';
  }
}

}  // namespace deepmorph
