#pragma once

#include <string>
#include <utility>
#include <vector>

#include "objn/data.hpp"
#include "objn/detector.hpp"

namespace objn {

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  long tp = 0;  // cumulative at this threshold
  long fp = 0;
};

struct EvalReport {
  std::vector<PRPoint> points;
  double auc = 0.0;
  long total_gt = 0;
  std::vector<int> per_image_detections;
};

// Greedy matching in global descending score order: a detection is a true
// positive when it overlaps a not-yet-matched ground truth of its image at or
// above the threshold (taking the highest-IoU one); each ground truth matches
// at most once. Detections must arrive sorted by descending score per image.
std::vector<std::vector<char>> match_detections(const std::vector<std::vector<Detection>>& dets,
                                                const std::vector<std::vector<Box>>& gts,
                                                double iou_match_threshold);

// One point per distinct score, sweeping the threshold downward.
std::vector<PRPoint> pr_curve(std::vector<std::pair<double, bool>> scored_flags, long total_gt);

// Area under the precision-recall curve: trapezoidal over recall, anchored at
// (0, precision of the highest-scoring point), zero beyond the last recall.
double auc(const std::vector<PRPoint>& curve);

// Fraction of records whose true class is outside the k most probable
// classes; ties break toward the lowest class index.
double topk_error(const Model& model, const SampleStore& store,
                  const std::vector<std::size_t>& indices, int k);

// Full pipeline: predict, suppress, match, integrate. Ground truth comes from
// store.boxes() for the given indices (all must carry bbox labels).
EvalReport evaluate_detector(const Model& model, const SampleStore& store,
                             const std::vector<std::size_t>& indices, const NmsParams& nms_params,
                             double iou_match_threshold);

// Same integration for precomputed per-image distributions.
EvalReport evaluate_distributions(const std::vector<CellDistribution>& dists,
                                  const std::vector<std::vector<Box>>& gts, const BBoxGrid& grid,
                                  const NmsParams& nms_params, double iou_match_threshold);

void write_eval_csv(const EvalReport& report, const std::string& path);

}  // namespace objn
