#pragma once

#include <vector>

#include "objn/bbox.hpp"
#include "objn/model.hpp"

namespace objn {

struct Detection {
  Box box;
  double score = 0.0;  // probability mass of the selected cell
};

struct NmsParams {
  double iou_threshold = 0.5;
  double score_threshold = 0.01;
  int max_detections = 5;
};

// Softmax of the bbox head's logits for one image ([C,H,W] tensor).
CellDistribution predict_distribution(const Model& model, const Tensor& image);

// Greedy suppression over the cell distribution: repeatedly take the argmax
// cell (ties -> lowest index), emit its decoded box, zero every remaining
// cell whose decoded box overlaps it above the IoU threshold.
std::vector<Detection> nms(const CellDistribution& dist, const BBoxGrid& grid,
                           const NmsParams& params);

// Same, with the per-cell boxes precomputed via decode_all(grid).
std::vector<Detection> nms(const CellDistribution& dist, const std::vector<Box>& cell_boxes,
                           const NmsParams& params);

}  // namespace objn
