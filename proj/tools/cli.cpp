#include "deepmorph/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deepmorph/checkpoint.hpp"
#include "deepmorph/errors.hpp"
#include "deepmorph/pipeline.hpp"
#include "deepmorph/rng.hpp"
#include "deepmorph/synth.hpp"
#include "deepmorph/trainer.hpp"

namespace deepmorph {
namespace {

namespace fs = std::filesystem;

/// Bad flag values discovered after parsing; reported with exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
std::string fmt(const T& v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::string fmt(const IntRange& r) { return fmt(r.lo) + ":" + fmt(r.hi); }
std::string fmt(const RealRange& r) { return fmt(r.lo) + ":" + fmt(r.hi); }

std::string fmt(const std::vector<int>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + fmt(v[k]);
  return s;
}

/// Every setting a command ran with, in the config-file syntax it accepts.
class Resolved {
 public:
  explicit Resolved(std::string section) : section_(std::move(section)) {}

  template <class T>
  void add(const std::string& key, const T& value) {
    entries_.emplace_back(key, fmt(value));
  }

  std::string text() const {
    std::string s = "[" + section_ + "]\n";
    for (const auto& [k, v] : entries_) s += k + " = " + v + "\n";
    return s;
  }

  void write(const fs::path& dir) const {
    std::ofstream f(dir / "resolved_config.ini", std::ios::binary);
    f << text();
    if (!f) throw IoError("cannot write " + (dir / "resolved_config.ini").string());
  }

 private:
  std::string section_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <class T>
T parse_number(const std::string& text, const std::string& what) {
  T v{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw UsageError("bad " + what + ": '" + text + "'");
  return v;
}

/// "lo:hi" or a single value meaning lo == hi.
template <class Range, class T>
Range parse_range(const std::string& text, const std::string& what) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    const T v = parse_number<T>(text, what);
    return {v, v};
  }
  return {parse_number<T>(text.substr(0, colon), what),
          parse_number<T>(text.substr(colon + 1), what)};
}

/// "3", "3x3" -> 3. Only square windows are built by the block factories.
int parse_se(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) return parse_number<int>(text, "SE size");
  const int m = parse_number<int>(text.substr(0, x), "SE size");
  const int n = parse_number<int>(text.substr(x + 1), "SE size");
  if (m != n) throw UsageError("only square structuring elements are supported, got " + text);
  return m;
}

std::vector<int> parse_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) out.push_back(parse_se(item));
  if (out.empty()) throw UsageError("empty " + what + " list");
  return out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : std::string()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

struct Common {
  std::string out = ".";
  std::uint64_t seed = 0;
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads (1 = reference path)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_common(Resolved& r, const Common& c) {
  r.add("out", c.out);
  r.add("seed", c.seed);
  r.add("threads", c.threads);
}

// ---------------------------------------------------------------- generate

struct SynthFlags {
  std::string instances, thickness, band_height, length, curvature;
  std::string noise_blobs, noise_size, gaps, gap_width;
  SynthConfig base;

  SynthFlags() {
    instances = fmt(base.instances);
    thickness = fmt(base.thickness);
    band_height = fmt(base.band_height);
    length = fmt(base.length);
    curvature = fmt(base.curvature);
    noise_blobs = fmt(base.noise_blobs);
    noise_size = fmt(base.noise_size);
    gaps = fmt(base.gaps);
    gap_width = fmt(base.gap_width);
  }

  void bind(CLI::App* cmd) {
    cmd->add_option("--map-size", base.map_size, "Map width and height")->capture_default_str();
    cmd->add_option("--border", base.border, "Clear margin at the map edge")->capture_default_str();
    cmd->add_option("--spacing", base.instance_spacing, "Gap between text bands")
        ->capture_default_str();
    cmd->add_option("--edge-value", base.edge_value, "Strip value on its outer rows")
        ->capture_default_str();
    cmd->add_option("--clearance", base.noise_clearance, "Blob distance from text")
        ->capture_default_str();
    cmd->add_option("--instances", instances, "Strips per map, lo:hi")->capture_default_str();
    cmd->add_option("--thickness", thickness, "Strip thickness, lo:hi")->capture_default_str();
    cmd->add_option("--band-height", band_height, "Text band height, lo:hi")->capture_default_str();
    cmd->add_option("--length", length, "Strip length, lo:hi")->capture_default_str();
    cmd->add_option("--curvature", curvature, "Peak curvature, lo:hi")->capture_default_str();
    cmd->add_option("--noise-blobs", noise_blobs, "Blobs per map, lo:hi")->capture_default_str();
    cmd->add_option("--noise-size", noise_size, "Blob side, lo:hi")->capture_default_str();
    cmd->add_option("--gaps", gaps, "Gaps per map, lo:hi")->capture_default_str();
    cmd->add_option("--gap-width", gap_width, "Gap width, lo:hi")->capture_default_str();
  }

  SynthConfig resolve(std::uint64_t seed) const {
    SynthConfig c = base;
    c.instances = parse_range<IntRange, int>(instances, "instances");
    c.thickness = parse_range<IntRange, int>(thickness, "thickness");
    c.band_height = parse_range<RealRange, double>(band_height, "band-height");
    c.length = parse_range<IntRange, int>(length, "length");
    c.curvature = parse_range<RealRange, double>(curvature, "curvature");
    c.noise_blobs = parse_range<IntRange, int>(noise_blobs, "noise-blobs");
    c.noise_size = parse_range<IntRange, int>(noise_size, "noise-size");
    c.gaps = parse_range<IntRange, int>(gaps, "gaps");
    c.gap_width = parse_range<IntRange, int>(gap_width, "gap-width");
    c.seed = seed;
    try {
      validate(c);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

void add_synth(Resolved& r, const SynthConfig& c) {
  r.add("map-size", c.map_size);
  r.add("border", c.border);
  r.add("spacing", c.instance_spacing);
  r.add("edge-value", c.edge_value);
  r.add("clearance", c.noise_clearance);
  r.add("instances", c.instances);
  r.add("thickness", c.thickness);
  r.add("band-height", c.band_height);
  r.add("length", c.length);
  r.add("curvature", c.curvature);
  r.add("noise-blobs", c.noise_blobs);
  r.add("noise-size", c.noise_size);
  r.add("gaps", c.gaps);
  r.add("gap-width", c.gap_width);
}

struct GenerateCmd {
  Common common;
  SynthFlags synth;
  std::size_t train_count = 500;
  std::size_t test_count = 200;

  void bind(CLI::App* cmd) {
    add_common(cmd, common);
    synth.bind(cmd);
    cmd->add_option("--train", train_count, "Training maps")->capture_default_str();
    cmd->add_option("--test", test_count, "Test maps")->capture_default_str();
  }

  int run(std::ostream& out) const {
    const SynthConfig sc = synth.resolve(common.seed);
    // The hash covers what determines the corpus, not where it is written.
    Resolved content("generate");
    content.add("seed", sc.seed);
    add_synth(content, sc);
    content.add("train", train_count);
    content.add("test", test_count);
    Resolved r("generate");
    add_common(r, common);
    add_synth(r, sc);
    r.add("train", train_count);
    r.add("test", test_count);

    const fs::path dir = common.out;
    make_dir(dir);
    const Corpus corpus = make_corpus(sc, train_count, test_count);
    save_split(dir, "train", corpus.train);
    save_split(dir, "test", corpus.test);
    r.write(dir);

    std::ostringstream m;
    m << "deepmorph-corpus 1\n"
      << "seed " << sc.seed << "\n"
      << "config_hash " << std::hex << std::setw(16) << std::setfill('0') << fnv1a(content.text())
      << std::dec << "\n"
      << "train " << corpus.train.size() << "\n"
      << "test " << corpus.test.size() << "\n"
      << "skipped " << corpus.skipped << "\n";
    write_text(dir / "manifest.txt", m.str());
    out << "wrote " << corpus.train.size() << " train and " << corpus.test.size()
        << " test maps to " << dir.string() << " (" << corpus.skipped << " draws skipped)\n";
    return kExitOk;
  }
};

// ------------------------------------------------------------------- train

struct TrainCmd {
  Common common;
  std::string corpus;
  std::string block = "dmop";
  std::optional<std::string> se;
  std::optional<int> layers;
  std::string optimizer = "sgd";
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<double> logit_scale;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch = 8;
  double decay_factor = 0.1;
  int decay_every = 0;
  std::string front = "auto";
  std::string dmop_checkpoint;

  void bind(CLI::App* cmd) {
    add_common(cmd, common);
    cmd->add_option("--corpus", corpus, "Corpus directory from generate")->required();
    cmd->add_option("--block", block, "dmop or dmcl")
        ->check(CLI::IsMember({"dmop", "dmcl"}))
        ->capture_default_str();
    cmd->add_option("--se", se, "Structuring element size, e.g. 3x3");
    cmd->add_option("--layers", layers, "Erosions (dilations) per half of the block");
    cmd->add_option("--optimizer", optimizer, "sgd or adam")->capture_default_str();
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--logit-scale", logit_scale, "Gain from block margins to logits");
    cmd->add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
    cmd->add_option("--weight-decay", weight_decay, "L2 weight decay")->capture_default_str();
    cmd->add_option("--batch", batch, "Mini-batch size")->capture_default_str();
    cmd->add_option("--decay-factor", decay_factor, "Learning-rate decay factor")
        ->capture_default_str();
    cmd->add_option("--decay-every", decay_every, "Epochs between decays (0 = off)")
        ->capture_default_str();
    cmd->add_option("--front", front, "Front stage feeding a DMCL: auto, none, op or dmop")
        ->check(CLI::IsMember({"auto", "none", "op", "dmop"}))
        ->capture_default_str();
    cmd->add_option("--dmop", dmop_checkpoint, "Trained DMOP checkpoint (DMCL front)");
  }

  int run(std::ostream& out, std::ostream& err) const {
    const bool is_dmop = block == "dmop";
    const ExperimentConfig defaults;
    const StageSpec& stage = is_dmop ? defaults.dmop : defaults.dmcl;
    TrainConfig tc = is_dmop ? defaults.dmop_train : defaults.dmcl_train;
    const int se_size = se ? parse_se(*se) : stage.se_size;
    const int depth = layers.value_or(stage.depth);
    const double scale = logit_scale.value_or(stage.logit_scale);
    try {
      tc.optimizer = parse_optimizer(optimizer);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    tc.lr = lr.value_or(tc.lr);
    tc.epochs = epochs.value_or(tc.epochs);
    tc.momentum = momentum;
    tc.weight_decay = weight_decay;
    tc.batch_size = batch;
    tc.lr_decay_factor = decay_factor;
    tc.lr_decay_every = decay_every;
    tc.seed = common.seed;
    tc.threads = common.threads;
    try {
      validate(tc);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }

    std::string front_used = "none";
    if (!is_dmop) {
      front_used = front == "auto" ? (dmop_checkpoint.empty() ? "none" : "dmop") : front;
      if (front_used == "dmop" && dmop_checkpoint.empty()) {
        throw UsageError("--front dmop needs --dmop <checkpoint>");
      }
    }

    Resolved r("train");
    add_common(r, common);
    r.add("corpus", corpus);
    r.add("block", block);
    r.add("se", fmt(se_size) + "x" + fmt(se_size));
    r.add("layers", depth);
    r.add("optimizer", to_string(tc.optimizer));
    r.add("lr", tc.lr);
    r.add("epochs", tc.epochs);
    r.add("logit-scale", scale);
    r.add("momentum", tc.momentum);
    r.add("weight-decay", tc.weight_decay);
    r.add("batch", tc.batch_size);
    r.add("decay-factor", tc.lr_decay_factor);
    r.add("decay-every", tc.lr_decay_every);
    if (!is_dmop) {
      r.add("front", front_used);
      if (!dmop_checkpoint.empty()) r.add("dmop", dmop_checkpoint);
    }

    const std::vector<SynthSample> samples = load_split(corpus, "train");
    if (samples.empty()) throw IoError("corpus " + corpus + " has no training maps");

    TrainReport report;
    if (is_dmop) {
      MorphBlock b = MorphBlock::dmop(2, se_size, depth);
      report = train(std::move(b), dmop_examples(samples), tc_head(scale, front_level(&b)), tc);
    } else {
      Models models;
      if (front_used == "dmop") models.dmop = load_checkpoint(dmop_checkpoint);
      const auto data =
          dmcl_examples(samples, parse_front_stage(front_used), models, defaults.pipeline);
      report = train(MorphBlock::dmcl(1, se_size, depth), data, tm_head(scale, kSegmentLevel), tc);
    }

    const fs::path dir = common.out;
    make_dir(dir);
    r.write(dir);
    save_checkpoint(report.block, dir / (block + ".ckpt"));
    std::ofstream loss(dir / "loss.csv", std::ios::binary);
    write_loss_csv(loss, report);
    std::ofstream timing(dir / "timing.csv", std::ios::binary);
    write_timing_csv(timing, report);
    if (!loss || !timing) throw IoError("cannot write training curves under " + dir.string());

    if (report.diverged) {
      err << "error: training diverged: " << report.message << " (partial artifacts in "
          << dir.string() << ")\n";
      return kExitFailure;
    }
    const double last = report.history.empty() ? 0.0 : report.history.back().loss.total;
    out << "trained " << block << " " << se_size << "x" << se_size << " x" << depth << " for "
        << report.history.size() << " epochs (" << report.optimizer_steps
        << " steps), final loss " << fmt(last) << "\n";
    return kExitOk;
  }
};

// -------------------------------------------------------------------- eval

struct EvalCmd {
  Common common;
  std::string corpus;
  std::string split = "test";
  std::string dmop_checkpoint;
  std::string dmcl_checkpoint;
  std::string baseline = "opcl";
  bool all = false;
  PipelineConfig pipeline;

  void bind(CLI::App* cmd) {
    add_common(cmd, common);
    cmd->add_option("--corpus", corpus, "Corpus directory from generate")->required();
    cmd->add_option("--split", split, "Corpus split to evaluate")->capture_default_str();
    cmd->add_option("--dmop", dmop_checkpoint, "Trained DMOP checkpoint");
    cmd->add_option("--dmcl", dmcl_checkpoint, "Trained DMCL checkpoint");
    cmd->add_option("--baseline", baseline, "none, op, cl or opcl")
        ->check(CLI::IsMember({"none", "op", "cl", "opcl"}))
        ->capture_default_str();
    cmd->add_flag("--all", all, "Report every front/back combination the models allow");
    cmd->add_option("--logit-scale", pipeline.logit_scale, "Segment score gain")
        ->capture_default_str();
    cmd->add_option("--nms-iou", pipeline.nms_iou, "NMS overlap threshold")->capture_default_str();
    cmd->add_option("--min-area", pipeline.min_area, "Smallest detection in pixels")
        ->capture_default_str();
    cmd->add_option("--match-iou", pipeline.match_iou, "IoU for a true positive")
        ->capture_default_str();
  }

  int run(std::ostream& out) const {
    Resolved r("eval");
    add_common(r, common);
    r.add("corpus", corpus);
    r.add("split", split);
    if (!dmop_checkpoint.empty()) r.add("dmop", dmop_checkpoint);
    if (!dmcl_checkpoint.empty()) r.add("dmcl", dmcl_checkpoint);
    r.add("baseline", baseline);
    r.add("all", all ? "true" : "false");
    r.add("logit-scale", pipeline.logit_scale);
    r.add("nms-iou", pipeline.nms_iou);
    r.add("min-area", pipeline.min_area);
    r.add("match-iou", pipeline.match_iou);

    Models models;
    if (!dmop_checkpoint.empty()) models.dmop = load_checkpoint(dmop_checkpoint);
    if (!dmcl_checkpoint.empty()) models.dmcl = load_checkpoint(dmcl_checkpoint);
    const std::vector<SynthSample> samples = load_split(corpus, split);
    if (samples.empty()) throw IoError("corpus split " + split + " under " + corpus + " is empty");

    std::vector<std::pair<FrontStage, BackStage>> variants;
    if (all) {
      std::vector<FrontStage> fronts{FrontStage::none, FrontStage::op};
      std::vector<BackStage> backs{BackStage::none, BackStage::cl};
      if (models.dmop) fronts.push_back(FrontStage::dmop);
      if (models.dmcl) backs.push_back(BackStage::dmcl);
      for (FrontStage f : fronts) {
        for (BackStage b : backs) variants.emplace_back(f, b);
      }
    } else {
      const bool op = baseline == "op" || baseline == "opcl";
      const bool cl = baseline == "cl" || baseline == "opcl";
      variants.emplace_back(op ? FrontStage::op : FrontStage::none,
                            cl ? BackStage::cl : BackStage::none);
      if (models.dmop || models.dmcl) {
        variants.emplace_back(models.dmop ? FrontStage::dmop : FrontStage::none,
                              models.dmcl ? BackStage::dmcl : BackStage::none);
      }
    }

    std::ostringstream csv;
    csv << "variant,tp,fp,fn,precision,recall,f_measure\n";
    for (const auto& [f, b] : variants) {
      const DetectionReport rep = evaluate_variant(samples, f, b, models, pipeline);
      csv << variant_name(f, b) << ',' << rep.tp << ',' << rep.fp << ',' << rep.fn << ','
          << fmt(rep.precision) << ',' << fmt(rep.recall) << ',' << fmt(rep.f_measure) << '\n';
    }
    const fs::path dir = common.out;
    make_dir(dir);
    r.write(dir);
    write_text(dir / "report.csv", csv.str());
    out << csv.str();
    return kExitOk;
  }
};

// --------------------------------------------------------------- gradcheck

struct GradcheckCmd {
  Common common;
  std::string block = "dmop";
  std::optional<std::string> se;
  std::optional<int> layers;
  int channels = 1;
  int size = 8;
  int trials = 20;
  GradCheckOptions options;
  bool corrupt_backward = false;

  void bind(CLI::App* cmd) {
    add_common(cmd, common);
    cmd->add_option("--block", block, "dmop or dmcl")
        ->check(CLI::IsMember({"dmop", "dmcl"}))
        ->capture_default_str();
    cmd->add_option("--se", se, "Structuring element size, e.g. 2x2");
    cmd->add_option("--layers", layers, "Erosions (dilations) per half of the block");
    cmd->add_option("--channels", channels, "Input channels")->capture_default_str();
    cmd->add_option("--size", size, "Input width and height")->capture_default_str();
    cmd->add_option("--trials", trials, "Random instances")->capture_default_str();
    cmd->add_option("--eps", options.eps, "Finite-difference step")->capture_default_str();
    cmd->add_option("--tol", options.tol, "Maximum tolerated deviation")->capture_default_str();
    cmd->add_flag("--corrupt-backward", corrupt_backward,
                  "Negate SE gradients (negative control; must fail)");
  }

  int run(std::ostream& out, std::ostream& err) const {
    const bool is_dmop = block == "dmop";
    const StageSpec stage = is_dmop ? ExperimentConfig{}.dmop : ExperimentConfig{}.dmcl;
    const int se_size = se ? parse_se(*se) : stage.se_size;
    const int depth = layers.value_or(stage.depth);
    if (trials < 0 || channels < 1 || size < 1) {
      throw UsageError("trials must be >= 0, channels and size >= 1");
    }
    Resolved r("gradcheck");
    add_common(r, common);
    r.add("block", block);
    r.add("se", fmt(se_size) + "x" + fmt(se_size));
    r.add("layers", depth);
    r.add("channels", channels);
    r.add("size", size);
    r.add("trials", trials);
    r.add("eps", options.eps);
    r.add("tol", options.tol);
    r.add("corrupt-backward", corrupt_backward ? "true" : "false");

    std::ostringstream csv;
    csv << "trial,checked,skipped,max_se_deviation,max_input_deviation,passed\n";
    bool ok = true;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
      const auto k = static_cast<std::uint64_t>(t);
      MorphBlock b = is_dmop ? MorphBlock::dmop(channels, se_size, depth)
                             : MorphBlock::dmcl(channels, se_size, depth);
      randomize_weights(b, derive_seed(common.seed, 3 * k));
      if (corrupt_backward) b.set_gradient_fault(true);
      const FeatureMap input = jittered_map(derive_seed(common.seed, 3 * k + 1), channels, size, size);
      const FeatureMap weights =
          jittered_map(derive_seed(common.seed, 3 * k + 2), channels, size, size);
      const GradCheckReport rep = grad_check(b, input, weighted_square_loss(weights), options);
      ok = ok && rep.passed;
      checked += rep.checked;
      skipped += rep.skipped;
      worst = std::max({worst, rep.max_se_deviation, rep.max_input_deviation});
      csv << t << ',' << rep.checked << ',' << rep.skipped << ',' << fmt(rep.max_se_deviation)
          << ',' << fmt(rep.max_input_deviation) << ',' << (rep.passed ? 1 : 0) << '\n';
    }
    const fs::path dir = common.out;
    make_dir(dir);
    r.write(dir);
    write_text(dir / "gradcheck.csv", csv.str());
    if (trials == 0) {
      err << "warning: --trials 0 checks nothing; passing vacuously\n";
    }
    out << "gradcheck " << block << " " << se_size << "x" << se_size << " x" << depth << ": "
        << (ok ? "PASS" : "FAIL") << " (" << trials << " trials, " << checked << " checked, "
        << skipped << " skipped, max deviation " << fmt(worst) << ")\n";
    return ok ? kExitOk : kExitFailure;
  }
};

// ------------------------------------------------------------------- sweep

struct SweepCmd {
  Common common;
  SynthFlags synth;
  std::string block = "dmcl";
  std::string se;
  std::string layers;
  int repetitions = 5;
  std::size_t train_count = 100;
  std::size_t test_count = 50;

  void bind(CLI::App* cmd) {
    add_common(cmd, common);
    synth.bind(cmd);
    cmd->add_option("--block", block, "Block whose grid is swept: dmop or dmcl")
        ->check(CLI::IsMember({"dmop", "dmcl"}))
        ->capture_default_str();
    cmd->add_option("--se", se, "SE sizes, comma separated (default: block default)");
    cmd->add_option("--layers", layers, "Layer counts, comma separated (default: block default)");
    cmd->add_option("--repetitions", repetitions, "Runs per configuration")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--train", train_count, "Training maps per run")->capture_default_str();
    cmd->add_option("--test", test_count, "Test maps per run")->capture_default_str();
  }

  int run(std::ostream& out) const {
    SweepSpec spec;
    spec.block = block;
    if (!se.empty()) spec.se_sizes = parse_list(se, "SE size");
    if (!layers.empty()) spec.depths = parse_list(layers, "layer");
    spec.repetitions = repetitions;
    spec.synth = synth.resolve(common.seed);
    spec.train_count = train_count;
    spec.test_count = test_count;
    spec.experiment.dmop_train.seed = common.seed;
    spec.experiment.dmcl_train.seed = common.seed;
    spec.experiment.dmop_train.threads = common.threads;
    spec.experiment.dmcl_train.threads = common.threads;

    Resolved r("sweep");
    add_common(r, common);
    add_synth(r, spec.synth);
    r.add("block", block);
    const StageSpec& stage = block == "dmop" ? spec.experiment.dmop : spec.experiment.dmcl;
    r.add("se", spec.se_sizes.empty() ? fmt(stage.se_size) : fmt(spec.se_sizes));
    r.add("layers", spec.depths.empty() ? fmt(stage.depth) : fmt(spec.depths));
    r.add("repetitions", repetitions);
    r.add("train", train_count);
    r.add("test", test_count);

    const std::vector<SweepRow> rows = ablation_sweep(spec);
    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    const fs::path dir = common.out;
    make_dir(dir);
    r.write(dir);
    write_text(dir / "sweep.csv", csv.str());
    out << csv.str();
    return kExitOk;
  }
};

// --------------------------------------------------------------- visualize

std::vector<std::uint8_t> to_gray(std::span<const double> v, bool unit_range) {
  std::vector<std::uint8_t> g(v.size(), 128);
  if (v.empty()) return g;
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (unit_range && lo >= 0.0 && hi <= 1.0) {
    lo = 0.0;
    hi = 1.0;
  } else if (!(hi > lo)) {
    return g;  // a constant tile carries no contrast: render mid-gray
  }
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double t = std::clamp((v[k] - lo) / (hi - lo), 0.0, 1.0);
    g[k] = static_cast<std::uint8_t>(std::lround(255.0 * t));
  }
  return g;
}

void save_gray(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& g) {
  std::ofstream f(path, std::ios::binary);
  write_pgm(f, width, height, g);
  if (!f) throw IoError("cannot write " + path.string());
}

bool is_map_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  unsigned char magic[2] = {0, 0};
  f.read(reinterpret_cast<char*>(magic), 2);
  return f.gcount() == 2 && magic[0] == (kMapMagic & 0xff) && magic[1] == (kMapMagic >> 8);
}

struct VisualizeCmd {
  Common common;
  std::string input;
  int scale = 16;

  void bind(CLI::App* cmd) {
    add_common(cmd, common);
    cmd->add_option("--input", input, "Checkpoint manifest or map file")->required();
    cmd->add_option("--scale", scale, "Pixels per SE weight in tiles")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  int run(std::ostream& out) const {
    if (!fs::exists(input)) throw IoError("no such artifact: " + input);
    Resolved r("visualize");
    add_common(r, common);
    r.add("input", input);
    r.add("scale", scale);
    const fs::path dir = common.out;

    if (is_checkpoint(input)) {
      const MorphBlock block = load_checkpoint(input);
      make_dir(dir);
      int k = 0;
      for (const MorphLayer& layer : block.layers()) {
        const StructElem& se = layer.se();
        const auto gray = to_gray(se.weights().values(), false);
        // Channels side by side, each weight a scale x scale square.
        const int w = se.channels() * se.m() * scale;
        const int h = se.n() * scale;
        std::vector<std::uint8_t> tile(static_cast<std::size_t>(w) * h);
        for (int c = 0; c < se.channels(); ++c) {
          for (int j = 0; j < se.n(); ++j) {
            for (int i = 0; i < se.m(); ++i) {
              const std::uint8_t g = gray[se.weights().index(c, j, i)];
              for (int dy = 0; dy < scale; ++dy) {
                for (int dx = 0; dx < scale; ++dx) {
                  const int x = (c * se.m() + i) * scale + dx;
                  tile[static_cast<std::size_t>(j * scale + dy) * w + x] = g;
                }
              }
            }
          }
        }
        const std::string kind = layer.kind() == MorphKind::dilation ? "dilation" : "erosion";
        save_gray(dir / ("layer" + fmt(k) + "_" + kind + ".pgm"), w, h, tile);
        ++k;
      }
      r.write(dir);
      out << "wrote " << k << " SE tiles to " << dir.string() << "\n";
      return kExitOk;
    }
    if (is_map_file(input)) {
      const FeatureMap m = load_map(input);
      make_dir(dir);
      const std::string stem = fs::path(input).stem().string();
      for (int c = 0; c < m.channels(); ++c) {
        save_gray(dir / (stem + "_c" + fmt(c) + ".pgm"), m.width(), m.height(),
                  to_gray(m.plane(c), true));
      }
      r.write(dir);
      out << "wrote " << m.channels() << " channel images to " << dir.string() << "\n";
      return kExitOk;
    }
    throw IoError("unknown artifact kind: " + input + " is neither a checkpoint nor a map");
  }
};

std::optional<std::string> config_argument(int argc, const char* const* argv) {
  for (int k = 1; k < argc; ++k) {
    const std::string a = argv[k];
    if (a == "--config" && k + 1 < argc) return std::string(argv[k + 1]);
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return std::nullopt;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trainable deep morphology for text-segment maps", "deepmorph"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI file; [command] sections, flags override");

  GenerateCmd generate;
  TrainCmd train_cmd;
  EvalCmd eval;
  GradcheckCmd gradcheck;
  SweepCmd sweep;
  VisualizeCmd visualize;
  CLI::App* g = app.add_subcommand("generate", "Write a synthetic corpus");
  CLI::App* t = app.add_subcommand("train", "Train a DMOP or DMCL block");
  CLI::App* e = app.add_subcommand("eval", "Evaluate pipelines on a corpus split");
  CLI::App* c = app.add_subcommand("gradcheck", "Finite-difference check of backward passes");
  CLI::App* s = app.add_subcommand("sweep", "Repeated train/eval over an SE size x depth grid");
  CLI::App* v = app.add_subcommand("visualize", "Render SEs or maps as PGM images");
  generate.bind(g);
  train_cmd.bind(t);
  eval.bind(e);
  gradcheck.bind(c);
  sweep.bind(s);
  visualize.bind(v);

  if (const auto cfg = config_argument(argc, argv); cfg && !fs::is_regular_file(*cfg)) {
    err << "error: config not found: " << *cfg << "\n";
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (g->parsed()) return generate.run(out);
    if (t->parsed()) return train_cmd.run(out, err);
    if (e->parsed()) return eval.run(out);
    if (c->parsed()) return gradcheck.run(out, err);
    if (s->parsed()) return sweep.run(out);
    if (v->parsed()) return visualize.run(out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace deepmorph
