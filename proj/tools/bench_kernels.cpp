// Timing comparison between the serial reference kernels and the OpenMP
// production kernels, plus a cross-check that both paths agree.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include "objn/kernels.hpp"
#include "objn/kernels_ref.hpp"

using namespace objn;
namespace K = objn::kernels;
namespace R = objn::ref;

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = clock_type::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count() / reps;
}

void row(const char* name, double serial_ms, double parallel_ms, double diff) {
  std::printf("%-18s %10.3f ms %10.3f ms %8.2fx   max|d|=%.3g\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-18s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  std::mt19937_64 rng(1);
  Tensor in({16, 16, 32, 32});
  fill_uniform(in, rng, -1.0, 1.0);
  Tensor w({32, 16, 5, 5});
  fill_normal(w, rng, 0.05);
  Tensor b({32});

  {
    Tensor out_p, out_s;
    const double tp = time_ms([&] { out_p = K::conv2d_forward(in, w, b, 1, 2); }, 3);
    const double ts = time_ms([&] { out_s = R::conv2d_forward(in, w, b, 1, 2); }, 3);
    row("conv2d fwd", ts, tp, max_abs_diff(out_p, out_s));

    Tensor gout(out_p.dims());
    fill_uniform(gout, rng, -1.0, 1.0);
    Conv2dGrads<float> gp, gs;
    const double tpb = time_ms([&] { gp = K::conv2d_backward(in, w, 1, 2, gout); }, 3);
    const double tsb = time_ms([&] { gs = R::conv2d_backward(in, w, 1, 2, gout); }, 3);
    row("conv2d bwd", tsb, tpb, max_abs_diff(gp.d_weights, gs.d_weights));
  }

  {
    LrnParams p;
    Tensor out_p, out_s;
    const double tp = time_ms([&] { out_p = K::lrn_forward(in, p); }, 5);
    const double ts = time_ms([&] { out_s = R::lrn_forward(in, p); }, 5);
    row("lrn fwd", ts, tp, max_abs_diff(out_p, out_s));
  }

  {
    Tensor out_p, out_s;
    const double tp = time_ms([&] { out_p = K::maxpool_forward(in, 2, 2); }, 10);
    const double ts = time_ms([&] { out_s = R::maxpool_forward(in, 2, 2); }, 10);
    row("maxpool fwd", ts, tp, max_abs_diff(out_p, out_s));
  }

  {
    Tensor din({64, 2048});
    fill_uniform(din, rng, -1.0, 1.0);
    Tensor dw({2048, 256});
    fill_normal(dw, rng, 0.02);
    Tensor db({256});
    Tensor out_p, out_s;
    const double tp = time_ms([&] { out_p = K::dense_forward(din, dw, db); }, 5);
    const double ts = time_ms([&] { out_s = R::dense_forward(din, dw, db); }, 5);
    row("dense fwd", ts, tp, max_abs_diff(out_p, out_s));

    Tensor gout(out_p.dims());
    fill_uniform(gout, rng, -1.0, 1.0);
    DenseGrads<float> gp, gs;
    const double tpb = time_ms([&] { gp = K::dense_backward(din, dw, gout); }, 5);
    const double tsb = time_ms([&] { gs = R::dense_backward(din, dw, gout); }, 5);
    row("dense bwd", tsb, tpb, max_abs_diff(gp.d_weights, gs.d_weights));
  }

  return 0;
}
