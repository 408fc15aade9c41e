// Command-line entry point: data generation, training, inference, evaluation
// and the two experiment protocols. Exit codes: 0 success, 1 I/O, 2 config,
// 3 data, 4 model/checkpoint.

#include <CLI11.hpp>
#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "objn/checkpoint.hpp"
#include "objn/config.hpp"
#include "objn/errors.hpp"
#include "objn/trainer.hpp"

namespace fs = std::filesystem;
using namespace objn;

namespace {

void apply_thread_cap() {
  if (const char* env = std::getenv("OBJN_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) omp_set_num_threads(n);
  }
}

std::string log_path_for(const std::string& checkpoint_path) {
  fs::path p(checkpoint_path);
  const auto stem = p.stem().string();
  return (p.parent_path() / (stem + "_log.csv")).string();
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  const auto cfg = RunConfig::load(config_path);
  const auto synth = cfg.synth();
  const auto result = generate(synth, out_dir);
  std::printf("manifest %s\n", result.manifest_path.c_str());
  for (int c = 0; c < synth.num_classes; ++c)
    std::printf("class %d: train=%d val=%d\n", c, result.per_class_train[static_cast<std::size_t>(c)],
                result.per_class_val[static_cast<std::size_t>(c)]);
  return 0;
}

int cmd_train(const std::string& task, const std::string& config_path, const std::string& data_path,
              const std::string& init_path, const std::string& held_out_text,
              const std::string& out_path) {
  const auto cfg = RunConfig::load(config_path);
  SampleStore store(load_manifest(data_path));
  TrainConfig tc = cfg.train();
  tc.held_out_classes = parse_class_list(held_out_text);

  Model init_model = Model::build(task == "detect" ? cfg.network_bbox() : cfg.network_classification());
  const Model* init = nullptr;
  if (!init_path.empty()) {
    init_model = load_checkpoint(init_path);
    init = &init_model;
    std::printf("init from %s (%s head), trunk copied via head swap\n", init_path.c_str(),
                init_model.config().is_bbox_head() ? "bbox" : "classification");
  }

  TrainResult result{Model::build(cfg.network_classification()), TrainLog{}, -1};
  if (task == "classify") {
    result = train_classification(store, tc, cfg.network_classification(), init);
  } else if (task == "detect") {
    // per-class box counts of the effective training pool
    std::map<int, long> box_counts;
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& rec = store.record(i);
      if (rec.split != "train" || !rec.has_bbox_labels || tc.held_out_classes.count(rec.class_id))
        continue;
      box_counts[rec.class_id] += static_cast<long>(rec.boxes.size());
    }
    std::printf("training boxes per class:");
    for (const auto& [c, n] : box_counts) std::printf(" %d=%ld", c, n);
    std::printf("\n");
    result = train_detection(store, tc, cfg.network_bbox(), DetectionEvalParams{cfg.nms(), cfg.iou_match()}, init);
  } else {
    throw ConfigError("train: task must be classify or detect");
  }

  save_checkpoint(result.model, out_path);
  write_train_log_csv(result.log, log_path_for(out_path));
  std::printf("checkpoint %s (best epoch %d)\n", out_path.c_str(), result.best_epoch);
  return 0;
}

int cmd_detect(const std::string& model_path, const std::string& image_path, double iou_nms,
               double score_min, int max_det) {
  const Model model = load_checkpoint(model_path);
  if (!model.config().is_bbox_head())
    throw ModelError("detect: checkpoint " + model_path + " has a classification head");
  const auto img = read_png(image_path);
  const auto tensor = image_to_tensor(img);
  if (tensor.dim(1) != model.config().in_h || tensor.dim(2) != model.config().in_w)
    throw DataError("image " + image_path + " is " + std::to_string(img.width) + "x" +
                    std::to_string(img.height) + ", model expects " +
                    std::to_string(model.config().in_w) + "x" + std::to_string(model.config().in_h));
  const auto dist = predict_distribution(model, tensor);
  const auto& grid = std::get<BBoxHead>(model.config().head).grid;
  const auto dets = nms(dist, grid, NmsParams{iou_nms, score_min, max_det});
  for (const auto& d : dets)
    std::printf("%.6f %.6f %.6f %.6f %.6f\n", d.score, d.box.x_min, d.box.y_min, d.box.x_max,
                d.box.y_max);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& classes_text, const std::string& out_path, double iou_nms,
             double score_min, int max_det, double iou_match) {
  const Model model = load_checkpoint(model_path);
  if (!model.config().is_bbox_head())
    throw ModelError("eval: checkpoint " + model_path + " has a classification head");
  SampleStore store(load_manifest(data_path));
  const auto restrict_to = parse_class_list(classes_text);

  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& rec = store.record(i);
    if (rec.split != "val" || !rec.has_bbox_labels) continue;
    if (!restrict_to.empty() && !restrict_to.count(rec.class_id)) continue;
    indices.push_back(i);
  }
  if (indices.empty()) throw DataError("eval: no matching validation records in " + data_path);

  const auto report =
      evaluate_detector(model, store, indices, NmsParams{iou_nms, score_min, max_det}, iou_match);
  write_eval_csv(report, out_path);
  std::printf("AUC %.17g\n", report.auc);
  return 0;
}

int cmd_experiment(const std::string& protocol, const std::string& config_path,
                   const std::string& data_path, const std::string& out_dir, bool force) {
  const auto cfg = RunConfig::load(config_path);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
    throw IoError("output directory " + out_dir + " exists; pass --force to reuse it");
  fs::create_directories(out_dir);

  std::string manifest = data_path;
  if (manifest.empty()) {
    const auto result = generate(cfg.synth(), (fs::path(out_dir) / "dataset").string());
    manifest = result.manifest_path;
    std::printf("dataset %s\n", manifest.c_str());
  }
  SampleStore store(load_manifest(manifest));
  const auto exp = cfg.experiment();

  if (protocol == "heldout") {
    const auto report = run_heldout_experiment(store, exp, out_dir);
    std::printf("baseline auc: heldout=%.17g all=%.17g\n", report.baseline_auc_heldout,
                report.baseline_auc_all);
    std::printf("table1 (withheld training, held-out eval): pretrained=%.17g random=%.17g\n",
                report.mean_table1_pretrained, report.mean_table1_random);
    std::printf("table2 (full training, full eval): pretrained=%.17g random=%.17g\n",
                report.mean_table2_pretrained, report.mean_table2_random);
  } else if (protocol == "transfer") {
    const auto report = run_recognition_transfer(store, exp, out_dir);
    std::printf("mean top1: pretrained=%.17g random=%.17g\n", report.mean_top1_pretrained,
                report.mean_top1_random);
    std::printf("mean top5: pretrained=%.17g random=%.17g\n", report.mean_top5_pretrained,
                report.mean_top5_random);
  } else {
    throw ConfigError("experiment: protocol must be heldout or transfer");
  }
  std::printf("reports in %s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"class-generic object detection workbench"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, task, init_path, held_out, model_path, image_path,
      classes_text, protocol;
  double iou_nms = 0.5, score_min = 0.01, iou_match = 0.5;
  int max_det = 5;
  bool force = false;

  auto* gen = app.add_subcommand("gen-data", "render the synthetic shapes dataset");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out_path)->required();

  auto* train = app.add_subcommand("train", "train a classification or detection network");
  train->add_option("--task", task)->required()->check(CLI::IsMember({"classify", "detect"}));
  train->add_option("--config", config_path)->required();
  train->add_option("--data", data_path)->required();
  train->add_option("--init", init_path);
  train->add_option("--held-out", held_out);
  train->add_option("--out", out_path)->required();

  auto* detect = app.add_subcommand("detect", "run detection on one image");
  detect->add_option("--model", model_path)->required();
  detect->add_option("--image", image_path)->required();
  detect->add_option("--iou-nms", iou_nms);
  detect->add_option("--score-min", score_min);
  detect->add_option("--max-det", max_det);

  auto* eval = app.add_subcommand("eval", "evaluate a detection checkpoint on a manifest");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--data", data_path)->required();
  eval->add_option("--classes", classes_text);
  eval->add_option("--out", out_path)->required();
  eval->add_option("--iou-nms", iou_nms);
  eval->add_option("--score-min", score_min);
  eval->add_option("--max-det", max_det);
  eval->add_option("--iou-match", iou_match);

  auto* exp = app.add_subcommand("experiment", "run the heldout or transfer protocol");
  exp->add_option("--protocol", protocol)->required()->check(CLI::IsMember({"heldout", "transfer"}));
  exp->add_option("--config", config_path)->required();
  exp->add_option("--data", data_path);
  exp->add_option("--out", out_path)->required();
  exp->add_flag("--force", force);

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(config_path, out_path);
    if (train->parsed()) return cmd_train(task, config_path, data_path, init_path, held_out, out_path);
    if (detect->parsed()) return cmd_detect(model_path, image_path, iou_nms, score_min, max_det);
    if (eval->parsed())
      return cmd_eval(model_path, data_path, classes_text, out_path, iou_nms, score_min, max_det,
                      iou_match);
    if (exp->parsed()) return cmd_experiment(protocol, config_path, data_path, out_path, force);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const ModelError& e) {
    std::fprintf(stderr, "model error: %s\n", e.what());
    return 4;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
