#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "objn/data.hpp"
#include "objn/eval.hpp"
#include "objn/model.hpp"

namespace objn {

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 1;
  double lr_decay = 0.5;
  int lr_decay_every = 0;  // epochs between decays; 0 disables
  std::set<int> held_out_classes;
  std::string init_checkpoint;  // empty = random init

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;  // top-1 error or detection AUC; NaN without a val split
  double seconds = 0.0;
};

struct TrainLog {
  std::string metric_name;
  std::vector<EpochLog> epochs;
};

struct TrainResult {
  Model model;  // best-validation snapshot
  TrainLog log;
  int best_epoch = -1;
};

// v <- momentum * v - lr * (g + weight_decay * p); p <- p + v
void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
              std::vector<Tensor>& velocity, double lr, double momentum, double weight_decay);

struct DetectionEvalParams {
  NmsParams nms;
  double iou_match = 0.5;
};

// Softmax cross-entropy against one-hot class labels; selects the epoch with
// the lowest top-1 validation error. init_model, when given, seeds the trunk
// via head_swap (otherwise cfg.init_checkpoint, otherwise random init).
TrainResult train_classification(const SampleStore& store, const TrainConfig& cfg,
                                 const NetworkConfig& net, const Model* init_model = nullptr);

// Soft-target detection training: boxes of held-out classes are withheld,
// minibatches draw only bbox-labeled records, targets come from
// target_distribution; selects the epoch with the best validation AUC.
TrainResult train_detection(const SampleStore& store, const TrainConfig& cfg,
                            const NetworkConfig& net, const DetectionEvalParams& eval_params,
                            const Model* init_model = nullptr);

void write_train_log_csv(const TrainLog& log, const std::string& path);

struct ExperimentConfig {
  int seeds = 5;
  int pretrain_epochs = 8;  // classification pretraining inside heldout cells
  int detect_epochs = 6;
  int classify_epochs = 8;  // classification arms of the transfer protocol
  TrainConfig train;
  NetworkConfig net_cls;
  NetworkConfig net_det;
  std::set<int> held_out;
  DetectionEvalParams eval;
};

struct HeldoutCell {
  int seed_index = 0;
  std::string init;    // "pretrained" | "random"
  std::string boxes;   // "withheld" | "all"
  double auc_heldout = 0.0;
  double auc_all = 0.0;
};

struct HeldoutReport {
  std::vector<HeldoutCell> cells;  // 4 per seed
  double baseline_auc_heldout = 0.0;  // uniform-distribution predictor
  double baseline_auc_all = 0.0;
  double mean_table1_pretrained = 0.0;  // withheld training, held-out eval
  double mean_table1_random = 0.0;
  double mean_table2_pretrained = 0.0;  // full training, full eval
  double mean_table2_random = 0.0;
};

// The four-cell protocol {pretrained, random} x {withheld, all boxes} over
// cfg.seeds seeds; writes checkpoints, PR curves, train logs and summary
// tables under out_dir.
HeldoutReport run_heldout_experiment(const SampleStore& store, const ExperimentConfig& cfg,
                                     const std::string& out_dir);

struct TransferRow {
  int seed_index = 0;
  double top1_pretrained = 0.0;
  double top5_pretrained = 0.0;
  double top1_random = 0.0;
  double top5_random = 0.0;
};

struct TransferReport {
  std::vector<TransferRow> rows;
  double mean_top1_pretrained = 0.0;
  double mean_top1_random = 0.0;
  double mean_top5_pretrained = 0.0;
  double mean_top5_random = 0.0;
};

// Detection pretraining -> classification vs random-init classification with
// matched budgets, per seed.
TransferReport run_recognition_transfer(const SampleStore& store, const ExperimentConfig& cfg,
                                        const std::string& out_dir);

}  // namespace objn
