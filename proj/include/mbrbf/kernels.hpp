#pragma once

#include <cstddef>
#include <span>

// Inner loops of the layers. Each kernel exists twice: a plain serial
// reference and an OpenMP version that splits the outermost output loop
// across threads. Every output element is accumulated in the same order in
// both, so the two agree bitwise. The unqualified entry points pick one by
// problem size.
namespace mbrbf::kernels {

/// Geometry of a 1x1 convolution: `rows` output channels mixing `inner`
/// input channels over `cols` spatial positions.
struct MixDims {
  std::size_t rows;
  std::size_t inner;
  std::size_t cols;
};

/// Geometry of a stride-1 "same" convolution with an odd square kernel.
struct ConvDims {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t height;
  std::size_t width;
  std::size_t kernel;
};

#define MBRBF_KERNEL_DECLS                                                                       \
  /* out[r,p] = bias[r] + sum_i w[r,i] * in[i,p] */                                              \
  void channel_mix(std::span<const double> w, std::span<const double> bias,                      \
                   std::span<const double> in, std::span<double> out, MixDims dims);             \
  void channel_mix_backward(std::span<const double> w, std::span<const double> in,               \
                            std::span<const double> grad_out, std::span<double> grad_in,         \
                            std::span<double> grad_w, std::span<double> grad_bias,               \
                            MixDims dims);                                                       \
  /* out[u] = ||x - centers[u,:]||^2 */                                                          \
  void sq_distances(std::span<const double> centers, std::span<const double> x,                  \
                    std::span<double> out);                                                      \
  void conv2d_same(std::span<const double> in, std::span<const double> w,                        \
                   std::span<const double> bias, std::span<double> out, ConvDims dims);          \
  void conv2d_same_backward(std::span<const double> in, std::span<const double> w,               \
                            std::span<const double> grad_out, std::span<double> grad_in,         \
                            std::span<double> grad_w, std::span<double> grad_bias,               \
                            ConvDims dims);

namespace serial {
MBRBF_KERNEL_DECLS
}  // namespace serial

namespace parallel {
MBRBF_KERNEL_DECLS
}  // namespace parallel

MBRBF_KERNEL_DECLS

#undef MBRBF_KERNEL_DECLS

/// True when the parallel kernels were compiled with OpenMP.
bool openmp_enabled();
int max_threads();

/// Work (multiply-adds) below which the dispatching entry points stay serial.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

}  // namespace mbrbf::kernels
