#include <doctest.h>

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "acsseg/cli.hpp"
#include "acsseg/config.hpp"
#include "acsseg/data_model.hpp"
#include "acsseg/train_runtime.hpp"
#include "temp_dir.hpp"

using namespace acsseg;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Exactly one machine-parsable diagnostic line.
bool diagnostic(const Run& r, const std::string& kind) {
  static const std::regex line(R"(error kind=(config|data|numerical) exit=(\d) msg="[^"\n]*"\n)");
  std::smatch m;
  return std::regex_match(r.err, m, line) && m[1] == kind && m[2] == std::to_string(r.code);
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kQuickConfig =
    "[model]\nencoder = tiny\nablation = full\n"
    "[data]\ninput_resize = 64x64\ncrop = 64x64\nsplit = 1,0,0\n"
    "[schedule]\ninit_lr = 0.01\nnEpoch = 2\n"
    "[train]\nbatch_size = 2\nmax_iters = 3\n";

// Synthetic 64x64 dataset, quickstart config and one trained run shared by the tests below.
struct Fixture {
  testing::TempDir dir{"cli"};
  fs::path data = dir / "synth";
  fs::path config = dir / "tiny.cfg";
  fs::path run = dir / "run1";
  Run synth, train;

  Fixture() {
    synth = cli({"synth", "--out", data.string(), "--count", "4", "--size", "64x64", "--seed", "3"});
    std::ofstream(config) << kQuickConfig;
    train = cli({"train", "--config", config.string(), "--data", data.string(), "--out", run.string(), "--seed", "42",
                 "--set", "schedule.nEpoch=150", "--strict-determinism"});
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("usage errors exit 1 with one diagnostic line") {
  const Run none = cli({});
  CHECK(none.code == 1);
  CHECK(diagnostic(none, "config"));
  const Run unknown = cli({"train", "--bogus"});
  CHECK(unknown.code == 1);
  CHECK(diagnostic(unknown, "config"));
  const Run missing = cli({"eval", "--data", "x"});
  CHECK(missing.code == 1);
  const Run help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("synth") != std::string::npos);
}

TEST_CASE("synth writes a deterministic dataset") {
  Fixture& f = fixture();
  REQUIRE(f.synth.code == 0);
  const DatasetManifest m = load_manifest(f.data);
  CHECK(m.entries.size() == 4);
  CHECK(fs::exists(f.data / "manifest.csv"));
  for (const auto& e : m.entries) {
    const std::size_t fg = read_mask(e.mask).foreground();
    // 0.05 and 0.2 of 64 * 64.
    CHECK(fg >= 205);
    CHECK(fg <= 819);
  }

  testing::TempDir other("cli_synth");
  const fs::path root = other / "d";
  REQUIRE(cli({"synth", "--out", root.string(), "--count", "16", "--seed", "7"}).code == 0);
  CHECK(load_manifest(root).entries.size() == 16);
  const std::string first = bytes(root / "images" / "synth_0005.png");
  const std::string first_mask = bytes(root / "masks" / "synth_0005.png");

  const Run again = cli({"synth", "--out", root.string(), "--count", "16", "--seed", "7"});
  CHECK(again.code == 1);
  CHECK(diagnostic(again, "config"));
  CHECK(again.err.find("--force") != std::string::npos);

  REQUIRE(cli({"synth", "--out", root.string(), "--count", "16", "--seed", "7", "--force"}).code == 0);
  CHECK(bytes(root / "images" / "synth_0005.png") == first);
  CHECK(bytes(root / "masks" / "synth_0005.png") == first_mask);

  CHECK(cli({"synth", "--out", (other / "e").string(), "--size", "100x96"}).code == 1);
}

TEST_CASE("train quickstart writes the run directory") {
  Fixture& f = fixture();
  INFO(f.train.err);
  REQUIRE(f.train.code == 0);
  for (const char* name : {"last.ckpt", "best.ckpt", "train_log.csv", "config.resolved.cfg"})
    CHECK_MESSAGE(fs::exists(f.run / name), name);
  const ExperimentConfig snap = load_config(f.run / "config.resolved.cfg");
  CHECK(snap.schedule.n_epoch == 150);
  CHECK(snap.seed == 42);
  CHECK(snap.max_iters == 3);
  CHECK(read_checkpoint_meta(f.run / "last.ckpt").config_hash == config_hash(snap));
  CHECK(f.train.out.find("trained ") != std::string::npos);
}

TEST_CASE("training is reproducible from its snapshot") {
  Fixture& f = fixture();
  REQUIRE(f.train.code == 0);
  const fs::path rerun = f.dir / "rerun";
  const Run r = cli({"train", "--config", (f.run / "config.resolved.cfg").string(), "--data", f.data.string(), "--out",
                     rerun.string(), "--strict-determinism"});
  REQUIRE(r.code == 0);
  CHECK(bytes(rerun / "last.ckpt") == bytes(f.run / "last.ckpt"));
  CHECK(bytes(rerun / "train_log.csv") == bytes(f.run / "train_log.csv"));
}

TEST_CASE("train error taxonomy") {
  Fixture& f = fixture();
  testing::TempDir dir("cli_train_err");
  fs::create_directories(dir / "nomask" / "images");
  const Run data = cli({"train", "--config", f.config.string(), "--data", (dir / "nomask").string(), "--out",
                        (dir / "o1").string()});
  CHECK(data.code == 2);
  CHECK(diagnostic(data, "data"));

  const Run cfg = cli({"train", "--config", f.config.string(), "--data", f.data.string(), "--out",
                       (dir / "o2").string(), "--set", "eval.threshold=1.5"});
  CHECK(cfg.code == 1);
  CHECK(diagnostic(cfg, "config"));
  CHECK(cfg.err.find("threshold out of (0,1)") != std::string::npos);

  const Run nofile = cli({"train", "--config", (dir / "none.cfg").string(), "--data", f.data.string(), "--out",
                          (dir / "o3").string()});
  CHECK(nofile.code == 1);

  // A learning rate this large drives the weights to infinity within a few steps.
  const Run blowup = cli({"train", "--config", f.config.string(), "--data", f.data.string(), "--out",
                          (dir / "o4").string(), "--set", "schedule.init_lr=1e30", "--set", "train.max_iters=6"});
  CHECK(blowup.code == 3);
  CHECK(diagnostic(blowup, "numerical"));
  CHECK(fs::exists(dir / "o4" / "abort.ckpt"));
}

TEST_CASE("eval writes metrics and prints the mean row") {
  Fixture& f = fixture();
  REQUIRE(f.train.code == 0);
  const fs::path out = f.dir / "eval1";
  const Run r = cli({"eval", "--checkpoint", (f.run / "best.ckpt").string(), "--data", f.data.string(), "--out",
                     out.string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  std::ifstream in(out / "metrics.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 6);
  CHECK(lines[0] == "id,recall,specificity,precision,dice,ioup,ioub,miou,accuracy");
  CHECK(lines[5].rfind("MEAN,", 0) == 0);
  CHECK(r.out.find(lines[5]) != std::string::npos);

  // Default threshold 0.5 equals an explicit one.
  const Run explicit_t = cli({"eval", "--checkpoint", (f.run / "best.ckpt").string(), "--data", f.data.string(),
                              "--out", (f.dir / "eval2").string(), "--threshold", "0.5"});
  CHECK(explicit_t.code == 0);
  CHECK(bytes(f.dir / "eval2" / "metrics.csv") == bytes(out / "metrics.csv"));
}

TEST_CASE("eval error taxonomy") {
  Fixture& f = fixture();
  REQUIRE(f.train.code == 0);
  // manifest.csv places every sample in train, so the test split is empty.
  const Run empty = cli({"eval", "--checkpoint", (f.run / "best.ckpt").string(), "--data", f.data.string(), "--out",
                         (f.dir / "eval_empty").string(), "--split", "test"});
  CHECK(empty.code == 2);
  CHECK(diagnostic(empty, "data"));

  testing::TempDir dir("cli_eval_err");
  const std::string ck = bytes(f.run / "best.ckpt");
  fs::copy_file(f.run / "config.resolved.cfg", dir / "config.resolved.cfg");
  std::ofstream(dir / "cut.ckpt", std::ios::binary) << ck.substr(0, ck.size() / 2);
  const Run corrupt = cli({"eval", "--checkpoint", (dir / "cut.ckpt").string(), "--data", f.data.string(), "--out",
                           (dir / "o").string()});
  CHECK(corrupt.code == 2);
  CHECK(corrupt.err.find("corrupt archive") != std::string::npos);

  // A config that differs from the one the checkpoint was trained with.
  ExperimentConfig other = load_config(f.run / "config.resolved.cfg");
  other.seed += 1;
  save_config(dir / "other.cfg", other);
  const Run mismatch = cli({"eval", "--checkpoint", (f.run / "best.ckpt").string(), "--config",
                            (dir / "other.cfg").string(), "--data", f.data.string(), "--out", (dir / "o2").string()});
  CHECK(mismatch.code == 1);
  CHECK(diagnostic(mismatch, "config"));
}

TEST_CASE("predict writes masks, probabilities and attention maps") {
  Fixture& f = fixture();
  REQUIRE(f.train.code == 0);
  testing::TempDir dir("cli_predict");
  const fs::path in = dir / "in";
  fs::create_directories(in);
  const fs::path src = f.data / "images" / "synth_0001.png";
  fs::copy_file(src, in / "a.png");
  std::ofstream(in / "broken.png") << "not a png";

  const fs::path out = dir / "out";
  const Run r = cli({"predict", "--checkpoint", (f.run / "best.ckpt").string(), "--input", in.string(), "--out",
                     out.string(), "--prob", "--att"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.err.find("skipped") != std::string::npos);
  CHECK_FALSE(fs::exists(out / "broken_mask.png"));
  const BinaryMask mask = read_mask(out / "a_mask.png");
  CHECK(mask.height == 64);
  CHECK(mask.width == 64);
  for (int k = 1; k <= 4; ++k) CHECK(fs::exists(out / ("a_att" + std::to_string(k) + ".png")));
  CHECK_FALSE(fs::exists(out / "a_att5.png"));

  // Probability pixels are round(255 p) of the reloaded model's output.
  const ExperimentConfig cfg = load_config(f.run / "config.resolved.cfg");
  auto model = build_model<float>(cfg.model(), 0);
  load_checkpoint(f.run / "best.ckpt", *model);
  model->set_training(false);
  const ImageTensor image = read_image(src);
  NoGradGuard guard;
  const auto preds = model->forward(Var<float>(image_batch<float>({&image})));
  const Tensor<float> p = ops::sigmoid(preds.final).value();
  const ImageTensor prob = read_image(out / "a_prob.png");
  std::size_t off = 0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const float expected = static_cast<float>(std::lround(p[i] * 255.0f)) / 255.0f;
    off += prob.values[i] != expected;
    // Mask agrees with the probability at the 0.5 threshold.
    off += mask.values[i] != (p[i] >= 0.5f ? 1 : 0);
  }
  CHECK(off == 0);

  const Run none = cli({"predict", "--checkpoint", (f.run / "best.ckpt").string(), "--input",
                        (in / "broken.png").string(), "--out", (dir / "out2").string()});
  CHECK(none.code == 2);
}
