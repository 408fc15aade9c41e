#include "objn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "objn/checkpoint.hpp"
#include "objn/errors.hpp"
#include "objn/loss.hpp"

namespace objn {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lr > 0.0) && lr != 0.0) throw ConfigError("train: learning rate must be >= 0");
  if (lr < 0.0) throw ConfigError("train: learning rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("train: weight decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("train: lr decay factor must be in (0,1]");
  if (lr_decay_every < 0) throw ConfigError("train: lr decay interval must be >= 0");
}

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
              std::vector<Tensor>& velocity, double lr, double momentum, double weight_decay) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw ShapeError("sgd_step: parameter/gradient/velocity counts disagree");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    auto& v = velocity[i];
    if (!p.same_shape(g) || !p.same_shape(v))
      throw ShapeError("sgd_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                       p.shape_str() + " vs " + g.shape_str() + " vs " + v.shape_str());
    const float flr = static_cast<float>(lr), fm = static_cast<float>(momentum),
                fwd = static_cast<float>(weight_decay);
    float* pd = p.data();
    const float* gd = g.data();
    float* vd = v.data();
    const std::int64_t n = p.size();
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < n; ++j) {
      vd[j] = fm * vd[j] - flr * (gd[j] + fwd * pd[j]);
      pd[j] += vd[j];
    }
  }
}

namespace {

std::vector<std::size_t> split_indices(const SampleStore& store, const std::string& split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store.record(i).split == split) out.push_back(i);
  return out;
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  return std::mt19937_64(seq);
}

Tensor gather_batch(const SampleStore& store, const std::vector<std::size_t>& pool,
                    std::size_t first, std::size_t count, const NetworkConfig& net) {
  Tensor batch({static_cast<std::int64_t>(count), net.in_channels, net.in_h, net.in_w});
  for (std::size_t b = 0; b < count; ++b) {
    const auto& img = store.image(pool[first + b]);
    if (img.dim(0) != net.in_channels || img.dim(1) != net.in_h || img.dim(2) != net.in_w)
      throw DataError("image " + store.record(pool[first + b]).image + " has shape " +
                      img.shape_str() + ", expected " + std::to_string(net.in_channels) + "x" +
                      std::to_string(net.in_h) + "x" + std::to_string(net.in_w));
    std::copy(img.data(), img.data() + img.size(),
              batch.data() + static_cast<std::int64_t>(b) * img.size());
  }
  return batch;
}

double epoch_lr(const TrainConfig& cfg, int epoch) {
  if (cfg.lr_decay_every <= 0) return cfg.lr;
  return cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
}

Model initial_model(const TrainConfig& cfg, const NetworkConfig& net, const Model* init_model) {
  if (init_model) return head_swap(*init_model, net);
  if (!cfg.init_checkpoint.empty()) return head_swap(load_checkpoint(cfg.init_checkpoint), net);
  return Model::build(net);
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

}  // namespace

TrainResult train_classification(const SampleStore& store, const TrainConfig& cfg,
                                 const NetworkConfig& net, const Model* init_model) {
  cfg.validate();
  net.validate();
  if (net.is_bbox_head()) throw ConfigError("train_classification: network has a bbox head");
  const int num_classes = net.head_size();

  const auto train_idx = split_indices(store, "train");
  const auto val_idx = split_indices(store, "val");
  if (train_idx.empty()) throw DataError("train_classification: empty training split");
  for (const auto i : train_idx)
    if (store.record(i).class_id >= num_classes)
      throw DataError("record " + store.record(i).image + " has class_id " +
                      std::to_string(store.record(i).class_id) + " >= num_classes " +
                      std::to_string(num_classes));

  Model model = initial_model(cfg, net, init_model);
  std::vector<Tensor> velocity;
  for (const auto& p : model.params()) velocity.emplace_back(p.dims());

  TrainResult result{Model::build(net), TrainLog{"top1_error", {}}, -1};
  double best_metric = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order = train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Timer timer;
    auto rng = epoch_rng(cfg.seed, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = epoch_lr(cfg, epoch);

    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - first);
      const Tensor batch = gather_batch(store, order, first, count, net);
      Tensor targets({static_cast<std::int64_t>(count), num_classes});
      for (std::size_t b = 0; b < count; ++b)
        targets[static_cast<std::int64_t>(b) * num_classes +
                store.record(order[first + b]).class_id] = 1.0f;

      ForwardTrace trace;
      const Tensor logits = model.forward(batch, trace);
      auto res = softmax_xent_soft(logits, targets);
      const auto grads = model.backward(trace, res.d_logits);
      sgd_step(model.params(), grads, velocity, lr, cfg.momentum, cfg.weight_decay);
      loss_sum += res.loss;
      ++batches;
    }

    double metric = std::numeric_limits<double>::quiet_NaN();
    if (!val_idx.empty()) metric = topk_error(model, store, val_idx, 1);
    result.log.epochs.push_back(
        {epoch, loss_sum / static_cast<double>(batches), metric, timer.seconds()});
    if (val_idx.empty() || metric < best_metric) {
      best_metric = val_idx.empty() ? best_metric : metric;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

TrainResult train_detection(const SampleStore& store, const TrainConfig& cfg,
                            const NetworkConfig& net, const DetectionEvalParams& eval_params,
                            const Model* init_model) {
  cfg.validate();
  net.validate();
  if (!net.is_bbox_head()) throw ConfigError("train_detection: network lacks a bbox head");
  const auto& grid = std::get<BBoxHead>(net.head).grid;
  const int cells = grid.total_cells();

  std::set<int> observed;
  for (std::size_t i = 0; i < store.size(); ++i) observed.insert(store.record(i).class_id);
  for (const int c : cfg.held_out_classes)
    if (!observed.count(c))
      throw DataError("train_detection: held-out class " + std::to_string(c) +
                      " not present in the records");

  // Withholding: held-out classes contribute no boxes to training. Boxes are
  // never read from records without bbox labels.
  std::vector<std::size_t> pool;
  for (const auto i : split_indices(store, "train")) {
    const auto& rec = store.record(i);
    if (!rec.has_bbox_labels || cfg.held_out_classes.count(rec.class_id)) continue;
    if (store.boxes(i).empty()) continue;
    pool.push_back(i);
  }
  if (pool.empty()) throw DataError("train_detection: no bbox-labeled records after withholding");

  std::vector<std::size_t> val_idx;
  for (const auto i : split_indices(store, "val"))
    if (store.record(i).has_bbox_labels) val_idx.push_back(i);

  // per-record soft targets, built once
  std::vector<Tensor> target_cache(store.size());
  const auto target_of = [&](std::size_t i) -> const Tensor& {
    auto& slot = target_cache[i];
    if (slot.size() == 0) {
      const auto dist = target_distribution(store.boxes(i), grid);
      Tensor row({static_cast<std::int64_t>(cells)});
      for (int c = 0; c < cells; ++c) row[c] = static_cast<float>(dist.probs[static_cast<std::size_t>(c)]);
      slot = std::move(row);
    }
    return slot;
  };

  Model model = initial_model(cfg, net, init_model);
  std::vector<Tensor> velocity;
  for (const auto& p : model.params()) velocity.emplace_back(p.dims());

  TrainResult result{Model::build(net), TrainLog{"detection_auc", {}}, -1};
  double best_metric = -std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order = pool;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Timer timer;
    auto rng = epoch_rng(cfg.seed, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = epoch_lr(cfg, epoch);

    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - first);
      const Tensor batch = gather_batch(store, order, first, count, net);
      Tensor targets({static_cast<std::int64_t>(count), cells});
      for (std::size_t b = 0; b < count; ++b) {
        const auto& row = target_of(order[first + b]);
        std::copy(row.data(), row.data() + cells,
                  targets.data() + static_cast<std::int64_t>(b) * cells);
      }

      ForwardTrace trace;
      const Tensor logits = model.forward(batch, trace);
      auto res = softmax_xent_soft(logits, targets);
      const auto grads = model.backward(trace, res.d_logits);
      sgd_step(model.params(), grads, velocity, lr, cfg.momentum, cfg.weight_decay);
      loss_sum += res.loss;
      ++batches;
    }

    double metric = std::numeric_limits<double>::quiet_NaN();
    if (!val_idx.empty())
      metric = evaluate_detector(model, store, val_idx, eval_params.nms, eval_params.iou_match).auc;
    result.log.epochs.push_back(
        {epoch, loss_sum / static_cast<double>(batches), metric, timer.seconds()});
    if (val_idx.empty() || metric > best_metric) {
      best_metric = val_idx.empty() ? best_metric : metric;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write train log: " + path);
  os << "epoch,train_loss," << log.metric_name << ",seconds\n";
  char buf[160];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss, e.val_metric,
                  e.seconds);
    os << buf;
  }
  if (!os) throw IoError("write failed for train log: " + path);
}

namespace {

std::vector<std::size_t> heldout_val_indices(const SampleStore& store,
                                             const std::set<int>& held_out) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& rec = store.record(i);
    if (rec.split == "val" && rec.has_bbox_labels && held_out.count(rec.class_id)) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> all_val_indices(const SampleStore& store) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store.record(i).split == "val" && store.record(i).has_bbox_labels) out.push_back(i);
  return out;
}

double uniform_baseline_auc(const SampleStore& store, const std::vector<std::size_t>& indices,
                            const BBoxGrid& grid, const DetectionEvalParams& eval_params) {
  CellDistribution uniform;
  uniform.probs.assign(static_cast<std::size_t>(grid.total_cells()),
                       1.0 / static_cast<double>(grid.total_cells()));
  std::vector<CellDistribution> dists(indices.size(), uniform);
  std::vector<std::vector<Box>> gts;
  gts.reserve(indices.size());
  for (const auto i : indices) gts.push_back(store.boxes(i));
  return evaluate_distributions(dists, gts, grid, eval_params.nms, eval_params.iou_match).auc;
}

void append_csv(const std::string& path, const std::string& text, bool truncate = false) {
  std::ofstream os(path, truncate ? std::ios::trunc : std::ios::app);
  if (!os) throw IoError("cannot write " + path);
  os << text;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

HeldoutReport run_heldout_experiment(const SampleStore& store, const ExperimentConfig& cfg,
                                     const std::string& out_dir) {
  if (cfg.seeds < 1) throw ConfigError("experiment: seeds must be >= 1");
  if (cfg.held_out.empty()) throw ConfigError("experiment: heldout protocol needs held-out classes");
  fs::create_directories(out_dir);

  const auto& grid = std::get<BBoxHead>(cfg.net_det.head).grid;
  const auto val_heldout = heldout_val_indices(store, cfg.held_out);
  const auto val_all = all_val_indices(store);
  if (val_heldout.empty())
    throw DataError("experiment: validation split has no held-out-class records");

  HeldoutReport report;
  report.baseline_auc_heldout = uniform_baseline_auc(store, val_heldout, grid, cfg.eval);
  report.baseline_auc_all = uniform_baseline_auc(store, val_all, grid, cfg.eval);

  const std::string summary_path = (fs::path(out_dir) / "summary.csv").string();
  append_csv(summary_path, "seed,init,boxes,auc_heldout,auc_all\n", /*truncate=*/true);
  append_csv(summary_path, "baseline,uniform,none," + fmt(report.baseline_auc_heldout) + "," +
                               fmt(report.baseline_auc_all) + "\n");

  for (int k = 0; k < cfg.seeds; ++k) {
    const auto seed_dir = fs::path(out_dir) / ("seed_" + std::to_string(k));
    fs::create_directories(seed_dir);

    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + static_cast<std::uint64_t>(k);

    NetworkConfig net_cls = cfg.net_cls;
    net_cls.init_seed = cfg.net_cls.init_seed + static_cast<std::uint64_t>(k);
    NetworkConfig net_det = cfg.net_det;
    net_det.init_seed = cfg.net_det.init_seed + static_cast<std::uint64_t>(k);

    TrainConfig tc_cls = tc;
    tc_cls.epochs = cfg.pretrain_epochs;
    const auto pretrain = train_classification(store, tc_cls, net_cls);
    write_train_log_csv(pretrain.log, (seed_dir / "pretrain_cls_log.csv").string());

    for (const bool pretrained : {true, false}) {
      for (const bool withheld : {true, false}) {
        TrainConfig tc_det = tc;
        tc_det.epochs = cfg.detect_epochs;
        tc_det.held_out_classes = withheld ? cfg.held_out : std::set<int>{};
        const auto run = train_detection(store, tc_det, net_det, cfg.eval,
                                         pretrained ? &pretrain.model : nullptr);

        const std::string cell = std::string(pretrained ? "pretrained" : "random") + "_" +
                                 (withheld ? "withheld" : "all");
        save_checkpoint(run.model, (seed_dir / (cell + ".ckpt")).string());
        write_train_log_csv(run.log, (seed_dir / (cell + "_log.csv")).string());

        const auto rep_heldout =
            evaluate_detector(run.model, store, val_heldout, cfg.eval.nms, cfg.eval.iou_match);
        const auto rep_all =
            evaluate_detector(run.model, store, val_all, cfg.eval.nms, cfg.eval.iou_match);
        // PR curve of the table the cell mirrors: held-out eval for withheld
        // training, full eval for full training
        write_eval_csv(withheld ? rep_heldout : rep_all,
                       (seed_dir / (cell + "_pr.csv")).string());

        HeldoutCell c;
        c.seed_index = k;
        c.init = pretrained ? "pretrained" : "random";
        c.boxes = withheld ? "withheld" : "all";
        c.auc_heldout = rep_heldout.auc;
        c.auc_all = rep_all.auc;
        report.cells.push_back(c);
        append_csv(summary_path, std::to_string(k) + "," + c.init + "," + c.boxes + "," +
                                     fmt(c.auc_heldout) + "," + fmt(c.auc_all) + "\n");
      }
    }
  }

  double t1p = 0, t1r = 0, t2p = 0, t2r = 0;
  for (const auto& c : report.cells) {
    if (c.boxes == "withheld" && c.init == "pretrained") t1p += c.auc_heldout;
    if (c.boxes == "withheld" && c.init == "random") t1r += c.auc_heldout;
    if (c.boxes == "all" && c.init == "pretrained") t2p += c.auc_all;
    if (c.boxes == "all" && c.init == "random") t2r += c.auc_all;
  }
  report.mean_table1_pretrained = t1p / cfg.seeds;
  report.mean_table1_random = t1r / cfg.seeds;
  report.mean_table2_pretrained = t2p / cfg.seeds;
  report.mean_table2_random = t2r / cfg.seeds;

  append_csv((fs::path(out_dir) / "table1.csv").string(),
             "init,mean_auc_heldout_eval\npretrained," + fmt(report.mean_table1_pretrained) +
                 "\nrandom," + fmt(report.mean_table1_random) + "\n",
             /*truncate=*/true);
  append_csv((fs::path(out_dir) / "table2.csv").string(),
             "init,mean_auc_full_eval\npretrained," + fmt(report.mean_table2_pretrained) +
                 "\nrandom," + fmt(report.mean_table2_random) + "\n",
             /*truncate=*/true);
  return report;
}

TransferReport run_recognition_transfer(const SampleStore& store, const ExperimentConfig& cfg,
                                        const std::string& out_dir) {
  if (cfg.seeds < 1) throw ConfigError("experiment: seeds must be >= 1");
  fs::create_directories(out_dir);
  const int num_classes = cfg.net_cls.head_size();
  const int k5 = std::min(5, num_classes);

  const auto val_idx = all_val_indices(store);

  TransferReport report;
  const std::string summary_path = (fs::path(out_dir) / "transfer_summary.csv").string();
  append_csv(summary_path,
             "seed,top1_pretrained,top5_pretrained,top1_random,top5_random\n",
             /*truncate=*/true);

  for (int k = 0; k < cfg.seeds; ++k) {
    const auto seed_dir = fs::path(out_dir) / ("seed_" + std::to_string(k));
    fs::create_directories(seed_dir);

    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + static_cast<std::uint64_t>(k);
    NetworkConfig net_cls = cfg.net_cls;
    net_cls.init_seed = cfg.net_cls.init_seed + static_cast<std::uint64_t>(k);
    NetworkConfig net_det = cfg.net_det;
    net_det.init_seed = cfg.net_det.init_seed + static_cast<std::uint64_t>(k);

    TrainConfig tc_det = tc;
    tc_det.epochs = cfg.detect_epochs;
    const auto det = train_detection(store, tc_det, net_det, cfg.eval);
    write_train_log_csv(det.log, (seed_dir / "detect_log.csv").string());

    TrainConfig tc_cls = tc;
    tc_cls.epochs = cfg.classify_epochs;
    const auto pre = train_classification(store, tc_cls, net_cls, &det.model);
    write_train_log_csv(pre.log, (seed_dir / "classify_pretrained_log.csv").string());
    const auto rnd = train_classification(store, tc_cls, net_cls);
    write_train_log_csv(rnd.log, (seed_dir / "classify_random_log.csv").string());

    TransferRow row;
    row.seed_index = k;
    row.top1_pretrained = topk_error(pre.model, store, val_idx, 1);
    row.top5_pretrained = topk_error(pre.model, store, val_idx, k5);
    row.top1_random = topk_error(rnd.model, store, val_idx, 1);
    row.top5_random = topk_error(rnd.model, store, val_idx, k5);
    report.rows.push_back(row);
    append_csv(summary_path, std::to_string(k) + "," + fmt(row.top1_pretrained) + "," +
                                 fmt(row.top5_pretrained) + "," + fmt(row.top1_random) + "," +
                                 fmt(row.top5_random) + "\n");
  }

  for (const auto& r : report.rows) {
    report.mean_top1_pretrained += r.top1_pretrained / cfg.seeds;
    report.mean_top1_random += r.top1_random / cfg.seeds;
    report.mean_top5_pretrained += r.top5_pretrained / cfg.seeds;
    report.mean_top5_random += r.top5_random / cfg.seeds;
  }
  append_csv(summary_path, "mean," + fmt(report.mean_top1_pretrained) + "," +
                               fmt(report.mean_top5_pretrained) + "," +
                               fmt(report.mean_top1_random) + "," + fmt(report.mean_top5_random) +
                               "\n");
  return report;
}

}  // namespace objn
