#include "mbrbf/kernels.hpp"

#include <algorithm>

#include "mbrbf/errors.hpp"

#ifdef MBRBF_HAVE_OPENMP
#include <omp.h>
#define MBRBF_OMP_FOR _Pragma("omp parallel for schedule(static)")
#else
#define MBRBF_OMP_FOR
#endif

namespace mbrbf::kernels {

namespace {

void check_mix(std::span<const double> w, std::span<const double> in, std::span<const double> out,
               MixDims d) {
  if (w.size() != d.rows * d.inner || in.size() != d.inner * d.cols ||
      out.size() != d.rows * d.cols) {
    throw ShapeError("channel_mix: buffer sizes disagree with dims");
  }
}

void check_conv(std::span<const double> in, std::span<const double> w, std::span<const double> out,
                ConvDims d) {
  if (d.kernel % 2 == 0) throw ShapeError("conv2d_same: kernel size must be odd");
  if (in.size() != d.in_channels * d.height * d.width ||
      w.size() != d.out_channels * d.in_channels * d.kernel * d.kernel ||
      out.size() != d.out_channels * d.height * d.width) {
    throw ShapeError("conv2d_same: buffer sizes disagree with dims");
  }
}

// Per-row bodies shared by both variants; the variants differ only in how
// rows are distributed.

inline void mix_row(std::span<const double> w, std::span<const double> bias,
                    std::span<const double> in, std::span<double> out, MixDims d, std::size_t r) {
  double* o = out.data() + r * d.cols;
  std::fill(o, o + d.cols, bias[r]);
  for (std::size_t i = 0; i < d.inner; ++i) {
    const double wi = w[r * d.inner + i];
    const double* src = in.data() + i * d.cols;
    for (std::size_t p = 0; p < d.cols; ++p) o[p] += wi * src[p];
  }
}

inline void mix_grad_in_row(std::span<const double> w, std::span<const double> grad_out,
                            std::span<double> grad_in, MixDims d, std::size_t i) {
  double* gi = grad_in.data() + i * d.cols;
  std::fill(gi, gi + d.cols, 0.0);
  for (std::size_t r = 0; r < d.rows; ++r) {
    const double wr = w[r * d.inner + i];
    const double* g = grad_out.data() + r * d.cols;
    for (std::size_t p = 0; p < d.cols; ++p) gi[p] += wr * g[p];
  }
}

inline void mix_grad_w_row(std::span<const double> in, std::span<const double> grad_out,
                           std::span<double> grad_w, std::span<double> grad_bias, MixDims d,
                           std::size_t r) {
  const double* g = grad_out.data() + r * d.cols;
  double gb = 0.0;
  for (std::size_t p = 0; p < d.cols; ++p) gb += g[p];
  grad_bias[r] = gb;
  for (std::size_t i = 0; i < d.inner; ++i) {
    const double* src = in.data() + i * d.cols;
    double acc = 0.0;
    for (std::size_t p = 0; p < d.cols; ++p) acc += g[p] * src[p];
    grad_w[r * d.inner + i] = acc;
  }
}

inline double sq_distance_row(std::span<const double> centers, std::span<const double> x,
                              std::size_t u) {
  const double* c = centers.data() + u * x.size();
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = x[j] - c[j];
    acc += diff * diff;
  }
  return acc;
}

inline void conv_out_channel(std::span<const double> in, std::span<const double> w,
                             std::span<const double> bias, std::span<double> out, ConvDims d,
                             std::size_t o) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  double* dst = out.data() + o * d.height * d.width;
  std::fill(dst, dst + d.height * d.width, bias[o]);
  for (std::size_t i = 0; i < d.in_channels; ++i) {
    const double* src = in.data() + i * d.height * d.width;
    const double* wk = w.data() + (o * d.in_channels + i) * d.kernel * d.kernel;
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
          const std::ptrdiff_t sy = y + ky - pad;
          if (sy < 0 || sy >= H) continue;
          for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
            const std::ptrdiff_t sx = x + kx - pad;
            if (sx < 0 || sx >= W) continue;
            acc += wk[ky * K + kx] * src[sy * W + sx];
          }
        }
        dst[y * W + x] += acc;
      }
    }
  }
}

inline void conv_grad_w_channel(std::span<const double> in, std::span<const double> grad_out,
                                std::span<double> grad_w, std::span<double> grad_bias,
                                ConvDims d, std::size_t o) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  const double* g = grad_out.data() + o * d.height * d.width;
  double gb = 0.0;
  for (std::size_t p = 0; p < d.height * d.width; ++p) gb += g[p];
  grad_bias[o] = gb;
  for (std::size_t i = 0; i < d.in_channels; ++i) {
    const double* src = in.data() + i * d.height * d.width;
    double* gw = grad_w.data() + (o * d.in_channels + i) * d.kernel * d.kernel;
    for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
        double acc = 0.0;
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = y + ky - pad;
          if (sy < 0 || sy >= H) continue;
          for (std::ptrdiff_t x = 0; x < W; ++x) {
            const std::ptrdiff_t sx = x + kx - pad;
            if (sx < 0 || sx >= W) continue;
            acc += g[y * W + x] * src[sy * W + sx];
          }
        }
        gw[ky * K + kx] = acc;
      }
    }
  }
}

inline void conv_grad_in_channel(std::span<const double> w, std::span<const double> grad_out,
                                 std::span<double> grad_in, ConvDims d, std::size_t i) {
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  const auto K = static_cast<std::ptrdiff_t>(d.kernel);
  const std::ptrdiff_t pad = K / 2;
  double* gi = grad_in.data() + i * d.height * d.width;
  std::fill(gi, gi + d.height * d.width, 0.0);
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    const double* g = grad_out.data() + o * d.height * d.width;
    const double* wk = w.data() + (o * d.in_channels + i) * d.kernel * d.kernel;
    for (std::ptrdiff_t sy = 0; sy < H; ++sy) {
      for (std::ptrdiff_t sx = 0; sx < W; ++sx) {
        double acc = 0.0;
        for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
          const std::ptrdiff_t y = sy - ky + pad;
          if (y < 0 || y >= H) continue;
          for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
            const std::ptrdiff_t x = sx - kx + pad;
            if (x < 0 || x >= W) continue;
            acc += wk[ky * K + kx] * g[y * W + x];
          }
        }
        gi[sy * W + sx] += acc;
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// serial reference

namespace serial {

void channel_mix(std::span<const double> w, std::span<const double> bias,
                 std::span<const double> in, std::span<double> out, MixDims dims) {
  check_mix(w, in, out, dims);
  for (std::size_t r = 0; r < dims.rows; ++r) mix_row(w, bias, in, out, dims, r);
}

void channel_mix_backward(std::span<const double> w, std::span<const double> in,
                          std::span<const double> grad_out, std::span<double> grad_in,
                          std::span<double> grad_w, std::span<double> grad_bias, MixDims dims) {
  check_mix(w, in, grad_out, dims);
  for (std::size_t i = 0; i < dims.inner; ++i) mix_grad_in_row(w, grad_out, grad_in, dims, i);
  for (std::size_t r = 0; r < dims.rows; ++r) {
    mix_grad_w_row(in, grad_out, grad_w, grad_bias, dims, r);
  }
}

void sq_distances(std::span<const double> centers, std::span<const double> x,
                  std::span<double> out) {
  if (x.empty() || centers.size() != out.size() * x.size()) {
    throw ShapeError("sq_distances: buffer sizes disagree");
  }
  for (std::size_t u = 0; u < out.size(); ++u) out[u] = sq_distance_row(centers, x, u);
}

void conv2d_same(std::span<const double> in, std::span<const double> w,
                 std::span<const double> bias, std::span<double> out, ConvDims dims) {
  check_conv(in, w, out, dims);
  for (std::size_t o = 0; o < dims.out_channels; ++o) conv_out_channel(in, w, bias, out, dims, o);
}

void conv2d_same_backward(std::span<const double> in, std::span<const double> w,
                          std::span<const double> grad_out, std::span<double> grad_in,
                          std::span<double> grad_w, std::span<double> grad_bias, ConvDims dims) {
  check_conv(in, w, grad_out, dims);
  for (std::size_t o = 0; o < dims.out_channels; ++o) {
    conv_grad_w_channel(in, grad_out, grad_w, grad_bias, dims, o);
  }
  for (std::size_t i = 0; i < dims.in_channels; ++i) {
    conv_grad_in_channel(w, grad_out, grad_in, dims, i);
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP

namespace parallel {

void channel_mix(std::span<const double> w, std::span<const double> bias,
                 std::span<const double> in, std::span<double> out, MixDims dims) {
  check_mix(w, in, out, dims);
  const auto rows = static_cast<std::ptrdiff_t>(dims.rows);
  MBRBF_OMP_FOR
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    mix_row(w, bias, in, out, dims, static_cast<std::size_t>(r));
  }
}

void channel_mix_backward(std::span<const double> w, std::span<const double> in,
                          std::span<const double> grad_out, std::span<double> grad_in,
                          std::span<double> grad_w, std::span<double> grad_bias, MixDims dims) {
  check_mix(w, in, grad_out, dims);
  const auto inner = static_cast<std::ptrdiff_t>(dims.inner);
  MBRBF_OMP_FOR
  for (std::ptrdiff_t i = 0; i < inner; ++i) {
    mix_grad_in_row(w, grad_out, grad_in, dims, static_cast<std::size_t>(i));
  }
  const auto rows = static_cast<std::ptrdiff_t>(dims.rows);
  MBRBF_OMP_FOR
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    mix_grad_w_row(in, grad_out, grad_w, grad_bias, dims, static_cast<std::size_t>(r));
  }
}

void sq_distances(std::span<const double> centers, std::span<const double> x,
                  std::span<double> out) {
  if (x.empty() || centers.size() != out.size() * x.size()) {
    throw ShapeError("sq_distances: buffer sizes disagree");
  }
  const auto units = static_cast<std::ptrdiff_t>(out.size());
  MBRBF_OMP_FOR
  for (std::ptrdiff_t u = 0; u < units; ++u) {
    out[static_cast<std::size_t>(u)] = sq_distance_row(centers, x, static_cast<std::size_t>(u));
  }
}

void conv2d_same(std::span<const double> in, std::span<const double> w,
                 std::span<const double> bias, std::span<double> out, ConvDims dims) {
  check_conv(in, w, out, dims);
  const auto outs = static_cast<std::ptrdiff_t>(dims.out_channels);
  MBRBF_OMP_FOR
  for (std::ptrdiff_t o = 0; o < outs; ++o) {
    conv_out_channel(in, w, bias, out, dims, static_cast<std::size_t>(o));
  }
}

void conv2d_same_backward(std::span<const double> in, std::span<const double> w,
                          std::span<const double> grad_out, std::span<double> grad_in,
                          std::span<double> grad_w, std::span<double> grad_bias, ConvDims dims) {
  check_conv(in, w, grad_out, dims);
  const auto outs = static_cast<std::ptrdiff_t>(dims.out_channels);
  MBRBF_OMP_FOR
  for (std::ptrdiff_t o = 0; o < outs; ++o) {
    conv_grad_w_channel(in, grad_out, grad_w, grad_bias, dims, static_cast<std::size_t>(o));
  }
  const auto ins = static_cast<std::ptrdiff_t>(dims.in_channels);
  MBRBF_OMP_FOR
  for (std::ptrdiff_t i = 0; i < ins; ++i) {
    conv_grad_in_channel(w, grad_out, grad_in, dims, static_cast<std::size_t>(i));
  }
}

}  // namespace parallel

// ---------------------------------------------------------------------------
// dispatch

namespace {

bool go_parallel(std::size_t work) {
#ifdef MBRBF_HAVE_OPENMP
  return work >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

}  // namespace

void channel_mix(std::span<const double> w, std::span<const double> bias,
                 std::span<const double> in, std::span<double> out, MixDims dims) {
  if (go_parallel(dims.rows * dims.inner * dims.cols)) {
    parallel::channel_mix(w, bias, in, out, dims);
  } else {
    serial::channel_mix(w, bias, in, out, dims);
  }
}

void channel_mix_backward(std::span<const double> w, std::span<const double> in,
                          std::span<const double> grad_out, std::span<double> grad_in,
                          std::span<double> grad_w, std::span<double> grad_bias, MixDims dims) {
  if (go_parallel(dims.rows * dims.inner * dims.cols)) {
    parallel::channel_mix_backward(w, in, grad_out, grad_in, grad_w, grad_bias, dims);
  } else {
    serial::channel_mix_backward(w, in, grad_out, grad_in, grad_w, grad_bias, dims);
  }
}

void sq_distances(std::span<const double> centers, std::span<const double> x,
                  std::span<double> out) {
  if (go_parallel(centers.size())) {
    parallel::sq_distances(centers, x, out);
  } else {
    serial::sq_distances(centers, x, out);
  }
}

void conv2d_same(std::span<const double> in, std::span<const double> w,
                 std::span<const double> bias, std::span<double> out, ConvDims dims) {
  if (go_parallel(w.size() * dims.height * dims.width)) {
    parallel::conv2d_same(in, w, bias, out, dims);
  } else {
    serial::conv2d_same(in, w, bias, out, dims);
  }
}

void conv2d_same_backward(std::span<const double> in, std::span<const double> w,
                          std::span<const double> grad_out, std::span<double> grad_in,
                          std::span<double> grad_w, std::span<double> grad_bias, ConvDims dims) {
  if (go_parallel(w.size() * dims.height * dims.width)) {
    parallel::conv2d_same_backward(in, w, grad_out, grad_in, grad_w, grad_bias, dims);
  } else {
    serial::conv2d_same_backward(in, w, grad_out, grad_in, grad_w, grad_bias, dims);
  }
}

bool openmp_enabled() {
#ifdef MBRBF_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef MBRBF_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace mbrbf::kernels
