#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "objn/errors.hpp"

namespace objn {

// Axis-aligned rectangle in normalized image coordinates.
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  void validate() const;
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
};

struct BoxParams {
  double cx, cy, scale, aspect;
};

// The discretized 4-d bounding-box space: uniform x/y bins over [0,1],
// log-uniform scale and aspect bins, plus Gaussian widths in bin units.
struct BBoxGrid {
  int nx = 8, ny = 8, ns = 4, na = 3;
  double scale_min = 0.1, scale_max = 1.0;
  double aspect_min = 1.0 / 3.0, aspect_max = 3.0;
  double sigma_x = 0.5, sigma_y = 0.5, sigma_s = 0.5, sigma_a = 0.5;

  int total_cells() const { return nx * ny * ns * na; }
  void validate() const;
};

// Probability vector over all grid cells.
struct CellDistribution {
  std::vector<double> probs;
};

// Counts of boxes whose scale/aspect fell outside the grid range and were
// clamped to a boundary bin.
struct ClampCounter {
  std::uint64_t scale = 0;
  std::uint64_t aspect = 0;
};

BoxParams box_params(const Box& box);

// Flat row-major cell index over (ix, iy, is, ia). Out-of-range scale or
// aspect clamps to the boundary bin (recorded in the counter when given).
int encode(const Box& box, const BBoxGrid& grid, ClampCounter* clamps = nullptr);

// Box at the cell's bin centers (arithmetic for x/y, geometric for scale and
// aspect), clipped to [0,1].
Box decode(int index, const BBoxGrid& grid);

// Decoded boxes for every cell, indexed by flat cell id.
std::vector<Box> decode_all(const BBoxGrid& grid);

double iou(const Box& a, const Box& b);

// Sum of per-box separable Gaussians in bin-index space, each truncated at
// 3 sigma per dimension and normalized before summation; total renormalized.
CellDistribution target_distribution(std::span<const Box> boxes, const BBoxGrid& grid);

bool is_distribution(const CellDistribution& d, double tol = 1e-6);

}  // namespace objn
