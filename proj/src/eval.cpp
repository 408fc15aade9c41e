#include "objn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "objn/errors.hpp"
#include "objn/loss.hpp"

namespace objn {

std::vector<std::vector<char>> match_detections(const std::vector<std::vector<Detection>>& dets,
                                                const std::vector<std::vector<Box>>& gts,
                                                double iou_match_threshold) {
  if (dets.size() != gts.size())
    throw ShapeError("match_detections: image counts disagree");
  for (const auto& image_dets : dets)
    for (std::size_t i = 1; i < image_dets.size(); ++i)
      if (image_dets[i].score > image_dets[i - 1].score)
        throw DataError("match_detections: detections not sorted by descending score");

  struct Ref {
    double score;
    std::size_t image, index;
  };
  std::vector<Ref> order;
  for (std::size_t im = 0; im < dets.size(); ++im)
    for (std::size_t di = 0; di < dets[im].size(); ++di)
      order.push_back({dets[im][di].score, im, di});
  std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });

  std::vector<std::vector<char>> flags(dets.size());
  for (std::size_t im = 0; im < dets.size(); ++im) flags[im].assign(dets[im].size(), 0);
  std::vector<std::vector<char>> used(gts.size());
  for (std::size_t im = 0; im < gts.size(); ++im) used[im].assign(gts[im].size(), 0);

  for (const auto& ref : order) {
    const auto& det = dets[ref.image][ref.index];
    const auto& image_gts = gts[ref.image];
    double best_iou = 0.0;
    std::size_t best = image_gts.size();
    for (std::size_t g = 0; g < image_gts.size(); ++g) {
      if (used[ref.image][g]) continue;
      const double v = iou(det.box, image_gts[g]);
      if (v >= iou_match_threshold && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best != image_gts.size()) {
      used[ref.image][best] = 1;
      flags[ref.image][ref.index] = 1;
    }
  }
  return flags;
}

std::vector<PRPoint> pr_curve(std::vector<std::pair<double, bool>> scored_flags, long total_gt) {
  if (total_gt < 1) throw DataError("pr_curve: total ground-truth count must be >= 1");
  std::stable_sort(scored_flags.begin(), scored_flags.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<PRPoint> curve;
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < scored_flags.size(); ++i) {
    tp += scored_flags[i].second;
    fp += !scored_flags[i].second;
    const bool last_of_score =
        i + 1 == scored_flags.size() || scored_flags[i + 1].first != scored_flags[i].first;
    if (!last_of_score) continue;
    PRPoint p;
    p.threshold = scored_flags[i].first;
    p.tp = tp;
    p.fp = fp;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = static_cast<double>(tp) / static_cast<double>(total_gt);
    curve.push_back(p);
  }
  return curve;
}

double auc(const std::vector<PRPoint>& curve) {
  if (curve.empty()) return 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].recall < curve[i - 1].recall)
      throw DataError("auc: curve points must be sorted by non-decreasing recall");
  double area = 0.0;
  double prev_r = 0.0, prev_p = curve.front().precision;  // anchor at recall 0
  for (const auto& pt : curve) {
    area += (pt.recall - prev_r) * (pt.precision + prev_p) / 2.0;
    prev_r = pt.recall;
    prev_p = pt.precision;
  }
  return area;  // precision counts as 0 beyond the last recall
}

double topk_error(const Model& model, const SampleStore& store,
                  const std::vector<std::size_t>& indices, int k) {
  if (model.config().is_bbox_head())
    throw ModelError("topk_error: model has a bbox head");
  const int num_classes = model.config().head_size();
  if (k < 1 || k > num_classes)
    throw ConfigError("topk_error: k " + std::to_string(k) + " out of range [1," +
                      std::to_string(num_classes) + "]");
  if (indices.empty()) throw DataError("topk_error: no records to evaluate");

  long misses = 0;
  for (const auto idx : indices) {
    const auto& img = store.image(idx);
    Tensor batch({1, img.dim(0), img.dim(1), img.dim(2)});
    std::copy(img.data(), img.data() + img.size(), batch.data());
    const Tensor logits = model.forward(batch);
    // top-k by probability == top-k by logit; ties toward the lower index
    std::vector<int> cls(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) cls[static_cast<std::size_t>(c)] = c;
    std::stable_sort(cls.begin(), cls.end(), [&](int a, int b) { return logits[a] > logits[b]; });
    bool hit = false;
    for (int j = 0; j < k; ++j) hit = hit || cls[static_cast<std::size_t>(j)] == store.record(idx).class_id;
    misses += !hit;
  }
  return static_cast<double>(misses) / static_cast<double>(indices.size());
}

EvalReport evaluate_distributions(const std::vector<CellDistribution>& dists,
                                  const std::vector<std::vector<Box>>& gts, const BBoxGrid& grid,
                                  const NmsParams& nms_params, double iou_match_threshold) {
  const auto cell_boxes = decode_all(grid);
  std::vector<std::vector<Detection>> dets;
  dets.reserve(dists.size());
  for (const auto& d : dists) dets.push_back(nms(d, cell_boxes, nms_params));

  EvalReport report;
  for (const auto& g : gts) report.total_gt += static_cast<long>(g.size());
  for (const auto& d : dets) report.per_image_detections.push_back(static_cast<int>(d.size()));
  if (report.total_gt == 0) throw DataError("evaluate: no ground-truth boxes");

  const auto flags = match_detections(dets, gts, iou_match_threshold);
  std::vector<std::pair<double, bool>> scored;
  for (std::size_t im = 0; im < dets.size(); ++im)
    for (std::size_t di = 0; di < dets[im].size(); ++di)
      scored.emplace_back(dets[im][di].score, flags[im][di] != 0);
  report.points = pr_curve(std::move(scored), report.total_gt);
  report.auc = auc(report.points);
  return report;
}

EvalReport evaluate_detector(const Model& model, const SampleStore& store,
                             const std::vector<std::size_t>& indices, const NmsParams& nms_params,
                             double iou_match_threshold) {
  const auto& grid = std::get<BBoxHead>(model.config().head).grid;
  std::vector<CellDistribution> dists;
  std::vector<std::vector<Box>> gts;
  dists.reserve(indices.size());
  gts.reserve(indices.size());
  for (const auto idx : indices) {
    dists.push_back(predict_distribution(model, store.image(idx)));
    gts.push_back(store.boxes(idx));
  }
  return evaluate_distributions(dists, gts, grid, nms_params, iou_match_threshold);
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write report: " + path);
  os << "threshold,precision,recall,tp,fp\n";
  char buf[160];
  for (const auto& p : report.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%ld,%ld\n", p.threshold, p.precision,
                  p.recall, p.tp, p.fp);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "total_gt,%ld,,,\n", report.total_gt);
  os << buf;
  std::snprintf(buf, sizeof(buf), "AUC,%.17g,,,\n", report.auc);
  os << buf;
  if (!os) throw IoError("write failed for report: " + path);
}

}  // namespace objn
