#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "deepmorph/checkpoint.hpp"
#include "deepmorph/cli.hpp"
#include "deepmorph/feature_map.hpp"

using namespace deepmorph;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "deepmorph");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "deepmorph_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Pgm {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;
};

Pgm read_pgm(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string magic;
  int maxval = 0;
  Pgm g;
  in >> magic >> g.width >> g.height >> maxval;
  in.get();
  g.pixels.resize(static_cast<std::size_t>(g.width) * g.height);
  in.read(reinterpret_cast<char*>(g.pixels.data()), static_cast<std::streamsize>(g.pixels.size()));
  return g;
}

// A small corpus shared by the commands that consume one.
const fs::path& corpus() {
  static const fs::path dir = [] {
    const fs::path d = scratch("corpus");
    const Result r = run({"generate", "--out", d.string(), "--train", "12", "--test", "6",
                          "--seed", "3"});
    REQUIRE(r.code == kExitOk);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("generate: defaults, manifest determinism, missing config") {
  const fs::path a = scratch("gen_a");
  const Result r = run({"generate", "--out", a.string()});
  REQUIRE(r.code == kExitOk);
  const std::string manifest = slurp(a / "manifest.txt");
  CHECK(manifest.find("train 500\n") != std::string::npos);
  CHECK(manifest.find("test 200\n") != std::string::npos);
  CHECK(manifest.find("seed 0\n") != std::string::npos);
  CHECK(manifest.find("config_hash ") != std::string::npos);
  CHECK(fs::exists(a / "train" / "0499.map"));
  CHECK(fs::exists(a / "resolved_config.ini"));

  const fs::path b = scratch("gen_b");
  const fs::path c = scratch("gen_c");
  REQUIRE(run({"generate", "--out", b.string(), "--train", "5", "--test", "2", "--seed", "9"})
              .code == kExitOk);
  REQUIRE(run({"generate", "--out", c.string(), "--train", "5", "--test", "2", "--seed", "9"})
              .code == kExitOk);
  CHECK(slurp(b / "manifest.txt") == slurp(c / "manifest.txt"));
  CHECK(slurp(b / "train" / "0003.map") == slurp(c / "train" / "0003.map"));

  const Result missing = run({"generate", "--config", "/nonexistent/run.ini"});
  CHECK(missing.code == kExitUsage);
  CHECK(missing.err.find("config not found") != std::string::npos);
}

TEST_CASE("config sections apply and flags override them") {
  const fs::path dir = scratch("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "run.ini") << "[generate]\ntrain = 4\ntest = 3\nseed = 21\n";
  const Result r = run({"generate", "--config", (dir / "run.ini").string(), "--out",
                        (dir / "out").string(), "--test", "2"});
  REQUIRE(r.code == kExitOk);
  const std::string manifest = slurp(dir / "out" / "manifest.txt");
  CHECK(manifest.find("train 4\n") != std::string::npos);
  CHECK(manifest.find("test 2\n") != std::string::npos);
  CHECK(manifest.find("seed 21\n") != std::string::npos);
  const std::string resolved = slurp(dir / "out" / "resolved_config.ini");
  CHECK(resolved.rfind("[generate]\n", 0) == 0);
  CHECK(resolved.find("test = 2\n") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"generate", "--no-such-flag"}).code == kExitUsage);
  CHECK(run({"gradcheck", "--se", "2x3"}).code == kExitUsage);
  CHECK(run({"train", "--corpus", corpus().string(), "--block", "dmxx"}).code == kExitUsage);
  CHECK(run({"generate", "--out", scratch("bad").string(), "--thickness", "5:4"}).code ==
        kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("train: default block shapes, frozen run, determinism, divergence") {
  const fs::path op = scratch("train_op");
  const Result a = run({"train", "--corpus", corpus().string(), "--block", "dmop", "--se", "2x2",
                        "--layers", "2", "--epochs", "2", "--out", op.string()});
  REQUIRE(a.code == kExitOk);
  const MorphBlock dmop = load_checkpoint(op / "dmop.ckpt");
  CHECK(dmop.layers().size() == 4);
  CHECK(dmop.layers()[0].se().m() == 2);
  CHECK(fs::exists(op / "loss.csv"));
  CHECK(fs::exists(op / "timing.csv"));
  CHECK(fs::exists(op / "resolved_config.ini"));

  const fs::path cl = scratch("train_cl");
  const Result b = run({"train", "--corpus", corpus().string(), "--block", "dmcl", "--se", "3x3",
                        "--layers", "4", "--epochs", "2", "--dmop", (op / "dmop.ckpt").string(),
                        "--out", cl.string()});
  REQUIRE(b.code == kExitOk);
  const MorphBlock dmcl = load_checkpoint(cl / "dmcl.ckpt");
  CHECK(dmcl.layers().size() == 8);
  CHECK(dmcl.layers()[0].se().m() == 3);

  const fs::path frozen = scratch("train_frozen");
  REQUIRE(run({"train", "--corpus", corpus().string(), "--lr", "0", "--epochs", "1", "--out",
               frozen.string()})
              .code == kExitOk);
  const MorphBlock still = load_checkpoint(frozen / "dmop.ckpt");
  for (const auto& layer : still.layers()) {
    for (double v : layer.se().weights().values()) CHECK(v == 0.0);
  }

  const fs::path r1 = scratch("train_r1");
  const fs::path r2 = scratch("train_r2");
  for (const auto& dir : {r1, r2}) {
    REQUIRE(run({"train", "--corpus", corpus().string(), "--epochs", "2", "--seed", "8",
                 "--threads", "1", "--out", dir.string()})
                .code == kExitOk);
  }
  CHECK(slurp(r1 / "dmop.ckpt") == slurp(r2 / "dmop.ckpt"));
  CHECK(slurp(r1 / "dmop.ckpt.se") == slurp(r2 / "dmop.ckpt.se"));
  CHECK(slurp(r1 / "loss.csv") == slurp(r2 / "loss.csv"));

  const fs::path div = scratch("train_div");
  const Result d = run({"train", "--corpus", corpus().string(), "--block", "dmcl", "--lr", "1e300",
                        "--epochs", "3", "--out", div.string()});
  CHECK(d.code == kExitFailure);
  CHECK(d.err.find("diverged") != std::string::npos);
  CHECK(fs::exists(div / "loss.csv"));
  CHECK(fs::exists(div / "dmcl.ckpt"));

  CHECK(run({"train", "--corpus", scratch("nothing").string(), "--out", scratch("x").string()})
            .code == kExitFailure);
}

TEST_CASE("eval: rows per variant and failure modes") {
  const fs::path ck = scratch("eval_ck");
  REQUIRE(run({"train", "--corpus", corpus().string(), "--lr", "0", "--epochs", "1", "--out",
               (ck / "op").string()})
              .code == kExitOk);
  REQUIRE(run({"train", "--corpus", corpus().string(), "--block", "dmcl", "--lr", "0",
               "--epochs", "1", "--out", (ck / "cl").string()})
              .code == kExitOk);
  const fs::path out = scratch("eval_out");
  const Result r = run({"eval", "--corpus", corpus().string(), "--dmop",
                        (ck / "op" / "dmop.ckpt").string(), "--dmcl",
                        (ck / "cl" / "dmcl.ckpt").string(), "--baseline", "opcl", "--out",
                        out.string()});
  REQUIRE(r.code == kExitOk);
  const std::string csv = slurp(out / "report.csv");
  CHECK(csv.rfind("variant,tp,fp,fn,precision,recall,f_measure\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.find("\nop+cl,") != std::string::npos);
  CHECK(csv.find("\ndmop+dmcl,") != std::string::npos);

  const Result all = run({"eval", "--corpus", corpus().string(), "--baseline", "none", "--all",
                          "--out", out.string()});
  REQUIRE(all.code == kExitOk);
  CHECK(std::count(all.out.begin(), all.out.end(), '\n') == 5);

  CHECK(run({"eval", "--corpus", corpus().string(), "--dmop", "/nonexistent.ckpt", "--out",
             out.string()})
            .code == kExitFailure);
  const fs::path empty = scratch("eval_empty");
  fs::create_directories(empty / "test");
  const Result e = run({"eval", "--corpus", empty.string(), "--out", out.string()});
  CHECK(e.code == kExitFailure);
  CHECK(e.err.find("empty") != std::string::npos);
}

TEST_CASE("gradcheck: pass, negative control, vacuous run") {
  const fs::path out = scratch("gc");
  const Result ok = run({"gradcheck", "--out", out.string()});
  CHECK(ok.code == kExitOk);
  CHECK(ok.out.find("PASS (20 trials") != std::string::npos);
  CHECK(run({"gradcheck", "--block", "dmcl", "--se", "3x3", "--layers", "4", "--trials", "5",
             "--out", out.string()})
            .code == kExitOk);
  const Result bad = run({"gradcheck", "--corrupt-backward", "--out", out.string()});
  CHECK(bad.code == kExitFailure);
  CHECK(bad.out.find("FAIL") != std::string::npos);
  const Result none = run({"gradcheck", "--trials", "0", "--out", out.string()});
  CHECK(none.code == kExitOk);
  CHECK(none.err.find("warning") != std::string::npos);
}

TEST_CASE("sweep writes one row per grid cell") {
  const fs::path out = scratch("sweep");
  const Result r = run({"sweep", "--block", "dmcl", "--se", "2,3", "--layers", "1,2",
                        "--repetitions", "2", "--train", "3", "--test", "2", "--out",
                        out.string()});
  REQUIRE(r.code == kExitOk);
  const std::string csv = slurp(out / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(csv.find("population") != std::string::npos);
  CHECK(csv.find("\ndmcl,3,2,2,") != std::string::npos);
}

TEST_CASE("visualize: SE tiles, probability maps, unknown artifacts") {
  const fs::path ck = scratch("vis_ck");
  REQUIRE(run({"train", "--corpus", corpus().string(), "--lr", "0", "--epochs", "1", "--out",
               ck.string()})
              .code == kExitOk);
  const fs::path tiles = scratch("vis_tiles");
  REQUIRE(run({"visualize", "--input", (ck / "dmop.ckpt").string(), "--out", tiles.string()})
              .code == kExitOk);
  int count = 0;
  for (const auto& e : fs::directory_iterator(tiles)) {
    if (e.path().extension() != ".pgm") continue;
    ++count;
    const Pgm g = read_pgm(e.path());
    CHECK(g.width == 2 * 2 * 16);
    CHECK(std::all_of(g.pixels.begin(), g.pixels.end(), [](unsigned char v) { return v == 128; }));
  }
  CHECK(count == 4);

  const fs::path maps = scratch("vis_map");
  fs::create_directories(maps);
  FeatureMap prob(1, 5, 4, 0.25);
  prob.at(0, 2, 3) = 1.0;
  save_map(prob, maps / "prob.map");
  REQUIRE(run({"visualize", "--input", (maps / "prob.map").string(), "--out", maps.string()})
              .code == kExitOk);
  const Pgm g = read_pgm(maps / "prob_c0.pgm");
  CHECK(g.width == 5);
  CHECK(*std::max_element(g.pixels.begin(), g.pixels.end()) == 255);

  std::ofstream(maps / "notes.txt") << "hello\n";
  CHECK(run({"visualize", "--input", (maps / "notes.txt").string(), "--out", maps.string()})
            .code == kExitFailure);
  CHECK(run({"visualize", "--input", (maps / "absent.map").string(), "--out", maps.string()})
            .code == kExitFailure);
}
