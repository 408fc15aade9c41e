#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "objn/data.hpp"

using namespace objn;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

fs::path work_root() {
  const auto dir = fs::temp_directory_path() / "objn_cli_test";
  fs::create_directories(dir);
  return dir;
}

RunResult run(const std::string& args) {
  const auto out_file = work_root() / "cmd_output.txt";
  const std::string cmd = std::string(OBJN_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(out_file);
  std::stringstream ss;
  ss << is.rdbuf();
  r.output = ss.str();
  return r;
}

const std::string kMicroCfg =
    "data.num_classes = 10\n"
    "data.train_images = 50\n"
    "data.val_images = 20\n"
    "data.image_size = 16\n"
    "data.max_objects = 1\n"
    "data.scale_min = 0.3\n"
    "data.scale_max = 0.55\n"
    "data.seed = 77\n"
    "net.input_size = 16\n"
    "net.trunk = conv:8:3:1:1,relu,maxpool:2:2,conv:16:3:1:1,relu,maxpool:2:2,dense:32,relu\n"
    "net.feature_dim = 32\n"
    "net.num_classes = 10\n"
    "grid.nx = 4\n"
    "grid.ny = 4\n"
    "grid.ns = 2\n"
    "grid.na = 1\n"
    "grid.scale_min = 0.2\n"
    "grid.scale_max = 0.8\n"
    "grid.aspect_min = 0.5\n"
    "grid.aspect_max = 2.0\n"
    "train.epochs = 1\n"
    "train.batch_size = 16\n"
    "experiment.pretrain_epochs = 1\n"
    "experiment.detect_epochs = 1\n"
    "experiment.classify_epochs = 1\n";

fs::path write_config(const std::string& name, const std::string& extra) {
  const auto path = work_root() / name;
  std::ofstream os(path, std::ios::trunc);
  os << kMicroCfg << extra;
  return path;
}

std::size_t file_hash(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return std::hash<std::string>{}(bytes);
}

// shared fixtures, generated once
struct Fixture {
  fs::path cfg = write_config("micro.cfg", "");
  fs::path data_dir = work_root() / "data";
  fs::path manifest = data_dir / "manifest.jsonl";
  fs::path cls_ckpt = work_root() / "cls.ckpt";
  fs::path det_ckpt = work_root() / "det.ckpt";

  Fixture() {
    if (!fs::exists(manifest)) {
      REQUIRE(run("gen-data --config " + cfg.string() + " --out " + data_dir.string()).exit_code == 0);
    }
    if (!fs::exists(cls_ckpt)) {
      REQUIRE(run("train --task classify --config " + cfg.string() + " --data " +
                  manifest.string() + " --out " + cls_ckpt.string())
                  .exit_code == 0);
    }
    if (!fs::exists(det_ckpt)) {
      REQUIRE(run("train --task detect --config " + cfg.string() + " --data " + manifest.string() +
                  " --out " + det_ckpt.string())
                  .exit_code == 0);
    }
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("gen-data happy path, determinism, and config rejection") {
  auto& f = fixture();
  CHECK(fs::exists(f.manifest));

  // identical seed -> identical bytes
  const auto dir_b = work_root() / "data_b";
  fs::remove_all(dir_b);
  REQUIRE(run("gen-data --config " + f.cfg.string() + " --out " + dir_b.string()).exit_code == 0);
  CHECK(file_hash(f.manifest) == file_hash(dir_b / "manifest.jsonl"));
  for (const auto& rec : load_manifest(f.manifest.string()))
    CHECK(file_hash(f.data_dir / rec.image) == file_hash(dir_b / rec.image));

  const auto bad = work_root() / "bad.cfg";
  {
    std::ofstream os(bad, std::ios::trunc);
    os << "foo.bar = 1\n";
  }
  const auto r = run("gen-data --config " + bad.string() + " --out " + (work_root() / "x").string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("foo.bar") != std::string::npos);
}

TEST_CASE("train detect respects held-out classes and logs box counts") {
  auto& f = fixture();
  const auto out = work_root() / "det_heldout.ckpt";
  const auto r = run("train --task detect --config " + f.cfg.string() + " --data " +
                     f.manifest.string() + " --held-out 8,9 --out " + out.string());
  REQUIRE(r.exit_code == 0);
  const auto pos = r.output.find("training boxes per class:");
  REQUIRE(pos != std::string::npos);
  const auto line = r.output.substr(pos, r.output.find('\n', pos) - pos);
  CHECK(line.find(" 8=") == std::string::npos);
  CHECK(line.find(" 9=") == std::string::npos);
  CHECK(line.find(" 0=") != std::string::npos);
  CHECK(fs::exists(work_root() / "det_heldout_log.csv"));
}

TEST_CASE("train detect from a classification checkpoint logs the head swap") {
  auto& f = fixture();
  const auto out = work_root() / "det_from_cls.ckpt";
  const auto r = run("train --task detect --config " + f.cfg.string() + " --data " +
                     f.manifest.string() + " --init " + f.cls_ckpt.string() + " --out " +
                     out.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("head swap") != std::string::npos);
  CHECK(r.output.find("classification head") != std::string::npos);
}

TEST_CASE("train with a missing manifest exits 3") {
  auto& f = fixture();
  const auto r = run("train --task classify --config " + f.cfg.string() +
                     " --data /nonexistent/manifest.jsonl --out " + (work_root() / "x.ckpt").string());
  CHECK(r.exit_code == 3);
  CHECK(r.output.find("/nonexistent/manifest.jsonl") != std::string::npos);
}

TEST_CASE("detect output format and flag contracts") {
  auto& f = fixture();
  const auto records = load_manifest(f.manifest.string());
  std::string image_path;
  for (const auto& r : records)
    if (r.split == "val") {
      image_path = r.image_path;
      break;
    }
  REQUIRE(!image_path.empty());

  const auto r = run("detect --model " + f.det_ckpt.string() + " --image " + image_path +
                     " --score-min 0 --max-det 3");
  REQUIRE(r.exit_code == 0);
  std::istringstream lines(r.output);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    ++count;
    double score, x0, y0, x1, y1;
    REQUIRE(std::sscanf(line.c_str(), "%lf %lf %lf %lf %lf", &score, &x0, &y0, &x1, &y1) == 5);
    CHECK(score >= 0.0);
    CHECK(x0 < x1);
    CHECK(y0 < y1);
    // six decimal places per field
    CHECK(line.find('.') != std::string::npos);
    const auto first_field = line.substr(0, line.find(' '));
    CHECK(first_field.size() - first_field.find('.') - 1 == 6);
  }
  CHECK(count <= 3);
  CHECK(count >= 1);

  const auto one = run("detect --model " + f.det_ckpt.string() + " --image " + image_path +
                       " --score-min 0 --max-det 1");
  REQUIRE(one.exit_code == 0);
  int one_count = 0;
  std::istringstream ls(one.output);
  while (std::getline(ls, line)) one_count += !line.empty();
  CHECK(one_count <= 1);

  // non-image input exits 3
  CHECK(run("detect --model " + f.det_ckpt.string() + " --image " + f.cfg.string()).exit_code == 3);
  // classification checkpoint exits 4
  CHECK(run("detect --model " + f.cls_ckpt.string() + " --image " + image_path).exit_code == 4);
}

TEST_CASE("eval restricts to classes and reports the ground-truth tally") {
  auto& f = fixture();
  const auto records = load_manifest(f.manifest.string());
  long gt_89 = 0, gt_all = 0;
  for (const auto& r : records) {
    if (r.split != "val") continue;
    gt_all += static_cast<long>(r.boxes.size());
    if (r.class_id == 8 || r.class_id == 9) gt_89 += static_cast<long>(r.boxes.size());
  }
  REQUIRE(gt_89 > 0);

  const auto report_path = work_root() / "report89.csv";
  const auto r = run("eval --model " + f.det_ckpt.string() + " --data " + f.manifest.string() +
                     " --classes 8,9 --out " + report_path.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("AUC ") != std::string::npos);

  const auto total_of = [](const fs::path& p) {
    std::ifstream is(p);
    std::string line;
    long total = -1;
    while (std::getline(is, line))
      if (line.rfind("total_gt,", 0) == 0) total = std::stol(line.substr(9));
    return total;
  };
  CHECK(total_of(report_path) == gt_89);

  const auto report_all = work_root() / "report_all.csv";
  REQUIRE(run("eval --model " + f.det_ckpt.string() + " --data " + f.manifest.string() +
              " --out " + report_all.string())
              .exit_code == 0);
  CHECK(total_of(report_all) == gt_all);

  CHECK(run("eval --model " + f.cls_ckpt.string() + " --data " + f.manifest.string() + " --out " +
            (work_root() / "r.csv").string())
            .exit_code == 4);
}

TEST_CASE("heldout experiment writes 4 checkpoints, 4 PR curves, 1 summary") {
  auto& f = fixture();
  const auto cfg1 = write_config("exp1.cfg", "experiment.seeds = 1\n");
  const auto out = work_root() / "exp_heldout";
  fs::remove_all(out);
  const auto r = run("experiment --protocol heldout --config " + cfg1.string() + " --data " +
                     f.manifest.string() + " --out " + out.string());
  REQUIRE(r.exit_code == 0);

  int ckpts = 0, prs = 0, summaries = 0;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name.size() > 5 && name.substr(name.size() - 5) == ".ckpt") ++ckpts;
    if (name.size() > 7 && name.substr(name.size() - 7) == "_pr.csv") ++prs;
    if (name == "summary.csv") ++summaries;
  }
  CHECK(ckpts == 4);
  CHECK(prs == 4);
  CHECK(summaries == 1);
  CHECK(fs::exists(out / "table1.csv"));
  CHECK(fs::exists(out / "table2.csv"));

  // refuses to overwrite without --force
  const auto again = run("experiment --protocol heldout --config " + cfg1.string() + " --data " +
                         f.manifest.string() + " --out " + out.string());
  CHECK(again.exit_code == 1);
  CHECK(run("experiment --protocol heldout --config " + cfg1.string() + " --data " +
            f.manifest.string() + " --out " + out.string() + " --force")
            .exit_code == 0);
}

TEST_CASE("transfer experiment over 5 seeds logs 10 classification runs") {
  auto& f = fixture();
  const auto cfg5 = write_config("exp5.cfg", "experiment.seeds = 5\n");
  const auto out = work_root() / "exp_transfer";
  fs::remove_all(out);
  const auto r = run("experiment --protocol transfer --config " + cfg5.string() + " --data " +
                     f.manifest.string() + " --out " + out.string());
  REQUIRE(r.exit_code == 0);

  int classify_logs = 0;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name.rfind("classify_", 0) == 0 && name.find("_log.csv") != std::string::npos)
      ++classify_logs;
  }
  CHECK(classify_logs == 10);
  CHECK(fs::exists(out / "transfer_summary.csv"));
}
