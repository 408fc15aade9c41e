#include "objn/bbox.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace objn {

void Box::validate() const {
  if (!(x_min < x_max) || !(y_min < y_max) || x_min < 0.0 || y_min < 0.0 || x_max > 1.0 ||
      y_max > 1.0 || !std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) ||
      !std::isfinite(y_max)) {
    throw DataError("invalid box [" + std::to_string(x_min) + "," + std::to_string(y_min) + "," +
                    std::to_string(x_max) + "," + std::to_string(y_max) + "]");
  }
}

void BBoxGrid::validate() const {
  if (nx < 1 || ny < 1 || ns < 1 || na < 1) throw ConfigError("grid: bin counts must be >= 1");
  if (!(scale_min > 0.0 && scale_min < scale_max && scale_max <= 1.0))
    throw ConfigError("grid: scale range must satisfy 0 < min < max <= 1");
  if (!(aspect_min > 0.0 && aspect_min < aspect_max))
    throw ConfigError("grid: aspect range must satisfy 0 < min < max");
  if (!(sigma_x > 0.0 && sigma_y > 0.0 && sigma_s > 0.0 && sigma_a > 0.0))
    throw ConfigError("grid: all sigma must be > 0");
}

BoxParams box_params(const Box& box) {
  box.validate();
  const double w = box.width(), h = box.height();
  return {(box.x_min + box.x_max) / 2.0, (box.y_min + box.y_max) / 2.0, std::sqrt(w * h), w / h};
}

namespace {

// Continuous bin coordinate: a box exactly at bin i's center maps to i.
double frac_uniform(double v, int n) { return v * n - 0.5; }

double frac_log(double v, double lo, double hi, int n) {
  return (std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo)) * n - 0.5;
}

int bin_of(double frac, int n, bool* clamped = nullptr) {
  const int i = static_cast<int>(std::floor(frac + 0.5));
  if (i < 0) {
    if (clamped) *clamped = true;
    return 0;
  }
  if (i >= n) {
    if (clamped) *clamped = true;
    return n - 1;
  }
  return i;
}

struct FracCoords {
  double fx, fy, fs, fa;
};

FracCoords frac_coords(const Box& box, const BBoxGrid& grid) {
  const auto p = box_params(box);
  return {frac_uniform(p.cx, grid.nx), frac_uniform(p.cy, grid.ny),
          frac_log(p.scale, grid.scale_min, grid.scale_max, grid.ns),
          frac_log(p.aspect, grid.aspect_min, grid.aspect_max, grid.na)};
}

}  // namespace

int encode(const Box& box, const BBoxGrid& grid, ClampCounter* clamps) {
  grid.validate();
  const auto f = frac_coords(box, grid);
  bool cs = false, ca = false;
  const int ix = bin_of(f.fx, grid.nx);
  const int iy = bin_of(f.fy, grid.ny);
  const int is = bin_of(f.fs, grid.ns, &cs);
  const int ia = bin_of(f.fa, grid.na, &ca);
  if (clamps) {
    clamps->scale += cs;
    clamps->aspect += ca;
  }
  return ((ix * grid.ny + iy) * grid.ns + is) * grid.na + ia;
}

Box decode(int index, const BBoxGrid& grid) {
  grid.validate();
  if (index < 0 || index >= grid.total_cells())
    throw DataError("decode: cell index " + std::to_string(index) + " out of range [0," +
                    std::to_string(grid.total_cells()) + ")");
  const int ia = index % grid.na;
  const int is = (index / grid.na) % grid.ns;
  const int iy = (index / (grid.na * grid.ns)) % grid.ny;
  const int ix = index / (grid.na * grid.ns * grid.ny);

  const double cx_c = (ix + 0.5) / grid.nx;
  const double cy_c = (iy + 0.5) / grid.ny;
  const double ls0 = std::log(grid.scale_min), ls1 = std::log(grid.scale_max);
  const double la0 = std::log(grid.aspect_min), la1 = std::log(grid.aspect_max);
  const double s_c = std::exp(ls0 + (is + 0.5) / grid.ns * (ls1 - ls0));
  const double a_c = std::exp(la0 + (ia + 0.5) / grid.na * (la1 - la0));

  // When the bin-center extent fits inside the image this returns the exact
  // bin-center box. Otherwise the parameters are projected onto the valid-box
  // set while staying inside the cell's bins, so any cell reachable via
  // encode() decodes to a box that re-encodes to the same cell. (Plain
  // coordinate clipping shifts the center and scale across bin edges.)
  const double eps = 1e-9;
  const double x_hi = (ix + 1.0) / grid.nx - eps / grid.nx, x_lo = static_cast<double>(ix) / grid.nx;
  const double y_hi = (iy + 1.0) / grid.ny - eps / grid.ny, y_lo = static_cast<double>(iy) / grid.ny;
  const double s_lo = std::exp(ls0 + static_cast<double>(is) / grid.ns * (ls1 - ls0)) * (1.0 + eps);
  const double a_lo = std::exp(la0 + static_cast<double>(ia) / grid.na * (la1 - la0)) * (1.0 + eps);
  const double a_hi = std::exp(la0 + (ia + 1.0) / grid.na * (la1 - la0)) * (1.0 - eps);
  const double w_max = std::min(1.0 - 1e-12, 2.0 * std::min(x_hi, 1.0 - x_lo));
  const double h_max = std::min(1.0 - 1e-12, 2.0 * std::min(y_hi, 1.0 - y_lo));

  double a = a_c, s = s_c;
  double s_fit = std::min(w_max / std::sqrt(a), h_max * std::sqrt(a));
  if (s > s_fit) {
    const double a_best = std::clamp(w_max / h_max, a_lo, a_hi);
    const double s_fit_best = std::min(w_max / std::sqrt(a_best), h_max * std::sqrt(a_best));
    if (s_fit_best > s_fit) {
      a = a_best;
      s_fit = s_fit_best;
    }
    if (s_fit >= s_lo) {
      s = std::min(s_c, s_fit);
    } else {
      // No valid box carries this cell's parameters (encode can never produce
      // it); fall back to the clipped bin-center box.
      const double w = s_c * std::sqrt(a_c), h = s_c / std::sqrt(a_c);
      Box b{std::max(0.0, cx_c - w / 2.0), std::max(0.0, cy_c - h / 2.0),
            std::min(1.0, cx_c + w / 2.0), std::min(1.0, cy_c + h / 2.0)};
      b.validate();
      return b;
    }
  }
  const double w = s * std::sqrt(a), h = s / std::sqrt(a);
  const double cx = std::clamp(cx_c, w / 2.0, 1.0 - w / 2.0);
  const double cy = std::clamp(cy_c, h / 2.0, 1.0 - h / 2.0);
  Box b{std::clamp(cx - w / 2.0, 0.0, 1.0), std::clamp(cy - h / 2.0, 0.0, 1.0),
        std::clamp(cx + w / 2.0, 0.0, 1.0), std::clamp(cy + h / 2.0, 0.0, 1.0)};
  b.validate();
  return b;
}

std::vector<Box> decode_all(const BBoxGrid& grid) {
  std::vector<Box> out;
  out.reserve(static_cast<std::size_t>(grid.total_cells()));
  for (int i = 0; i < grid.total_cells(); ++i) out.push_back(decode(i, grid));
  return out;
}

double iou(const Box& a, const Box& b) {
  a.validate();
  b.validate();
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

namespace {

// Per-dimension truncated Gaussian weights at integer bin centers, shifted by
// the max log-weight so the nearest bin always carries weight 1 (keeps the
// sigma -> 0 limit exact instead of underflowing).
struct DimWeights {
  int lo;
  std::vector<double> w;
};

DimWeights dim_weights(double frac, double sigma, int n) {
  int lo = static_cast<int>(std::ceil(frac - 3.0 * sigma));
  int hi = static_cast<int>(std::floor(frac + 3.0 * sigma));
  lo = std::clamp(lo, 0, n - 1);
  hi = std::clamp(hi, 0, n - 1);
  if (lo > hi) lo = hi = bin_of(frac, n);
  DimWeights dw;
  dw.lo = lo;
  dw.w.resize(static_cast<std::size_t>(hi - lo + 1));
  double best = -std::numeric_limits<double>::infinity();
  for (int i = lo; i <= hi; ++i) {
    const double d = (i - frac) / sigma;
    const double lw = -0.5 * d * d;
    dw.w[static_cast<std::size_t>(i - lo)] = lw;
    best = std::max(best, lw);
  }
  for (auto& v : dw.w) v = std::exp(v - best);
  return dw;
}

}  // namespace

CellDistribution target_distribution(std::span<const Box> boxes, const BBoxGrid& grid) {
  grid.validate();
  if (boxes.empty()) throw DataError("target_distribution: box list is empty");
  CellDistribution dist;
  dist.probs.assign(static_cast<std::size_t>(grid.total_cells()), 0.0);

  for (const auto& box : boxes) {
    const auto f = frac_coords(box, grid);
    const auto wx = dim_weights(f.fx, grid.sigma_x, grid.nx);
    const auto wy = dim_weights(f.fy, grid.sigma_y, grid.ny);
    const auto ws = dim_weights(f.fs, grid.sigma_s, grid.ns);
    const auto wa = dim_weights(f.fa, grid.sigma_a, grid.na);

    double total = 0.0;
    for (const auto& vx : wx.w)
      for (const auto& vy : wy.w) {
        const double vxy = vx * vy;
        for (const auto& vs : ws.w)
          for (const auto& va : wa.w) total += vxy * vs * va;
      }

    for (std::size_t jx = 0; jx < wx.w.size(); ++jx)
      for (std::size_t jy = 0; jy < wy.w.size(); ++jy)
        for (std::size_t js = 0; js < ws.w.size(); ++js)
          for (std::size_t ja = 0; ja < wa.w.size(); ++ja) {
            const int cell = (((wx.lo + static_cast<int>(jx)) * grid.ny + wy.lo + static_cast<int>(jy)) * grid.ns +
                              ws.lo + static_cast<int>(js)) * grid.na +
                             wa.lo + static_cast<int>(ja);
            dist.probs[static_cast<std::size_t>(cell)] +=
                wx.w[jx] * wy.w[jy] * ws.w[js] * wa.w[ja] / total;
          }
  }

  double sum = 0.0;
  for (auto v : dist.probs) sum += v;
  for (auto& v : dist.probs) v /= sum;
  return dist;
}

bool is_distribution(const CellDistribution& d, double tol) {
  double sum = 0.0;
  for (auto v : d.probs) {
    if (v < 0.0 || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

}  // namespace objn
