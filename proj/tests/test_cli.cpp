#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "deoccl/dataset.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace deoccl;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(DEOCCL_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string kTiny = "--set image_size=16 --set base_filters=4 --set bottleneck_dim=8 --set batch_size=4";

// Two sessions of one subject with different appearances.
fs::path prepared_root(const std::string& name) {
  const fs::path root = testing_support::scratch_dir(name);
  for (int a = 0; a < 2; ++a) {
    const fs::path raw = root / ("raw" + std::to_string(a));
    fs::create_directories(raw);
    for (int i = 0; i < 3; ++i)
      save_image(to_range(render_synthetic_face(40, 20 + i, a), ValueRange::unit),
                 raw / ("f" + std::to_string(i) + ".png"));
    const Run r = run("prepare --frames " + raw.string() + " --data-root " + (root / "data").string() +
                      " --subject u --session s" + std::to_string(a) + " --appearance look" + std::to_string(a) +
                      " --size 16");
    CAPTURE(r.output);
    REQUIRE(r.code == 0);
    CHECK(r.output.find("masked: 3") != std::string::npos);
  }
  return root;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("train --set nonsense=1").code == 1);
  CHECK(run("--device gpu train").code == 1);
  CHECK(run("train --step 3").code == 1);
}

TEST_CASE("prepare, train, infer and evaluate") {
  const fs::path root = prepared_root("cli-flow");
  const std::string data = " --data-root " + (root / "data").string();
  const fs::path out = root / "run";

  const Run train = run("train --step all --epoch-scale 0.01 --seed 3 --out " + out.string() + data + " " + kTiny);
  CAPTURE(train.output);
  REQUIRE(train.code == 0);
  CHECK(train.output.find("# resolved configuration") != std::string::npos);
  const auto summary = nlohmann::json::parse(slurp(out / "run_summary.json"));
  CHECK(summary["status"] == "completed");
  CHECK(summary["stage_boundaries"].size() == 6);
  CHECK(summary["cursor"]["phase"] == "finished");
  CHECK(summary["cursor"]["step"] == 13);
  CHECK(fs::exists(out / "step1b.ckpt"));
  CHECK(fs::exists(out / "step2.ckpt"));
  CHECK(fs::exists(out / "checkpoints" / "latest.ckpt"));
  CHECK(slurp(out / "train_log.csv").rfind("step,stage,rec,adv_g,adv_d,ssim,mask,total\n", 0) == 0);

  const fs::path frames = root / "data" / "u" / "s1" / "frames";
  const fs::path ckpt = out / "latest.ckpt";
  const Run i1 = run("infer --checkpoint " + ckpt.string() + " --input " + frames.string() + " --out " +
                     (root / "inf1").string() + " --mask " + (root / "data/u/s1/masks/000000.png").string());
  CAPTURE(i1.output);
  REQUIRE(i1.code == 0);
  REQUIRE(run("infer --checkpoint " + ckpt.string() + " --input " + frames.string() + " --out " +
              (root / "inf2").string() + " --mask " + (root / "data/u/s1/masks/000000.png").string())
              .code == 0);
  for (const char* f : {"000000.png", "000001.png", "000002.png"}) {
    REQUIRE(fs::exists(root / "inf1" / f));
    CHECK(slurp(root / "inf1" / f) == slurp(root / "inf2" / f));
  }

  const Run eval = run("evaluate --checkpoint " + ckpt.string() + " --labels ours --oracle --masked-only --out " +
                       (root / "eval").string() + data);
  CAPTURE(eval.output);
  REQUIRE(eval.code == 0);
  const std::string csv = slurp(root / "eval" / "comparison.csv");
  CHECK(csv.rfind("method,SSIM,PSNR\n", 0) == 0);
  CHECK(csv.find("\nours,") != std::string::npos);
  CHECK(csv.find("\noracle,1.000000,100.0000") != std::string::npos);
  const auto reports = nlohmann::json::parse(slurp(root / "eval" / "report.json"));
  REQUIRE(reports.size() == 2);
  CHECK(reports[0]["per_frame"].size() == 3);
  CHECK(reports[0]["metadata"]["split"] == reports[1]["metadata"]["split"]);
}

TEST_CASE("generic pretraining then user finetuning") {
  const fs::path root = prepared_root("cli-generic");
  const fs::path corpus = root / "corpus";
  fs::create_directories(corpus);
  for (int i = 0; i < 6; ++i)
    save_image(to_range(render_synthetic_face(16, 300 + i, i % 3), ValueRange::unit),
               corpus / ("g" + std::to_string(i) + ".png"));
  const std::string common = " --epoch-scale 0.01 --out " + (root / "run").string() + " --data-root " +
                             (root / "data").string() + " --generic-corpus " + corpus.string() + " " + kTiny;
  const Run a = run("train --step 1a" + common);
  CAPTURE(a.output);
  REQUIRE(a.code == 0);
  CHECK(fs::exists(root / "run" / "step1a.ckpt"));
  CHECK(nlohmann::json::parse(slurp(root / "run" / "run_summary.json"))["cursor"]["phase"] == "user");
  const Run b = run("train --step 1b" + common);
  CAPTURE(b.output);
  REQUIRE(b.code == 0);
  const auto summary = nlohmann::json::parse(slurp(root / "run" / "run_summary.json"));
  CHECK(summary["cursor"]["phase"] == "occluded");
  CHECK(summary["stage_boundaries"].size() == 6);
}

TEST_CASE("step 2 without a step-1 checkpoint fails") {
  const fs::path root = prepared_root("cli-step2");
  const Run r = run("train --step 2 --out " + (root / "empty").string() + " --data-root " +
                    (root / "data").string() + " " + kTiny);
  CHECK(r.code == 2);
  CHECK(r.output.find("step1b.ckpt") != std::string::npos);
}

TEST_CASE("paused runs resume to the same result") {
  const fs::path root = prepared_root("cli-resume");
  const std::string common = " --epoch-scale 0.01 --seed 4 --data-root " + (root / "data").string() + " " + kTiny;
  REQUIRE(run("train --step all --out " + (root / "full").string() + common).code == 0);
  const Run paused = run("train --step all --max-steps 5 --out " + (root / "part").string() + common);
  REQUIRE(paused.code == 0);
  CHECK(nlohmann::json::parse(slurp(root / "part" / "run_summary.json"))["status"] == "paused");
  const Run resumed = run("train --step all --resume " + (root / "part" / "latest.ckpt").string() + " --out " +
                          (root / "part").string() + common);
  CAPTURE(resumed.output);
  REQUIRE(resumed.code == 0);
  const auto a = nlohmann::json::parse(slurp(root / "full" / "run_summary.json"));
  const auto b = nlohmann::json::parse(slurp(root / "part" / "run_summary.json"));
  CHECK(a["parameter_checksum"] == b["parameter_checksum"]);
  CHECK(slurp(root / "full" / "train_log.csv") == slurp(root / "part" / "train_log.csv"));
}

TEST_CASE("config files and precedence") {
  const fs::path root = testing_support::scratch_dir("cli-config");
  std::ofstream(root / "run.cfg") << "deoccl-config v1\n# tiny\nimage_size = 16\nbase_filters=4\nseed=7\n";
  const fs::path raw = root / "raw";
  fs::create_directories(raw);
  save_image(to_range(render_synthetic_face(24, 1), ValueRange::unit), raw / "a.png");
  const Run r = run("prepare --config " + (root / "run.cfg").string() + " --set seed=9 --frames " + raw.string() +
                    " --data-root " + (root / "data").string() + " --subject u --session s --appearance a");
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("image_size=16\n") != std::string::npos);
  CHECK(r.output.find("seed=9\n") != std::string::npos);
  CHECK(load_image(root / "data/u/s/frames/000000.png", ValueRange::unit).height() == 16);

  std::ofstream(root / "bad.cfg") << "deoccl-config v1\nimage_size=abc\n";
  CHECK(run("prepare --config " + (root / "bad.cfg").string() + " --frames " + raw.string() +
            " --subject u --session s --appearance a")
            .code == 1);
}
