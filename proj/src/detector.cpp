#include "objn/detector.hpp"

#include <algorithm>
#include <cstring>

#include "objn/errors.hpp"
#include "objn/loss.hpp"

namespace objn {

CellDistribution predict_distribution(const Model& model, const Tensor& image) {
  if (!model.config().is_bbox_head())
    throw ModelError("predict_distribution: model has a classification head");
  if (image.rank() != 3)
    throw ModelError("predict_distribution: expected a CHW image, got " + image.shape_str());
  Tensor batch({1, image.dim(0), image.dim(1), image.dim(2)});
  std::memcpy(batch.data(), image.data(), sizeof(float) * image.size());
  const Tensor logits = model.forward(batch);
  const Tensor probs = softmax_rows(logits);
  CellDistribution d;
  d.probs.resize(static_cast<std::size_t>(probs.size()));
  for (std::int64_t i = 0; i < probs.size(); ++i) d.probs[static_cast<std::size_t>(i)] = probs[i];
  return d;
}

std::vector<Detection> nms(const CellDistribution& dist, const BBoxGrid& grid,
                           const NmsParams& params) {
  return nms(dist, decode_all(grid), params);
}

std::vector<Detection> nms(const CellDistribution& dist, const std::vector<Box>& cell_boxes,
                           const NmsParams& params) {
  if (params.iou_threshold < 0.0 || params.iou_threshold > 1.0 || params.score_threshold < 0.0 ||
      params.score_threshold > 1.0)
    throw ConfigError("nms: thresholds must lie in [0,1]");
  if (params.max_detections < 1) throw ConfigError("nms: max_detections must be >= 1");
  if (dist.probs.size() != cell_boxes.size())
    throw ShapeError("nms: distribution size " + std::to_string(dist.probs.size()) +
                     " does not match grid cells " + std::to_string(cell_boxes.size()));

  std::vector<double> probs = dist.probs;
  std::vector<Detection> out;
  while (static_cast<int>(out.size()) < params.max_detections) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best]) best = i;  // ties keep the lowest index
    if (probs[best] < params.score_threshold || probs[best] <= 0.0) break;

    const Box& picked = cell_boxes[best];
    out.push_back(Detection{picked, probs[best]});
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] == 0.0) continue;
      if (i == best || iou(cell_boxes[i], picked) > params.iou_threshold) probs[i] = 0.0;
    }
  }
  return out;
}

}  // namespace objn
