#pragma once

// Data-parallel compute kernels (OpenMP). Every kernel has a serial
// counterpart in kernels_ref.hpp with the same signature; tests compare the
// two and bench/ measures them against each other.
//
// All kernels are deterministic for any thread count: work is split over
// independent outputs, never over a reduction axis.

#include <cstddef>

namespace acsseg::kernels {

enum class Trans { No, Yes };

// C = alpha * op(A) * op(B) + beta * C, row-major. op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_h = 0, in_w = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const noexcept { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const noexcept { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t col_rows() const noexcept { return in_channels * kernel * kernel; }
  bool is_pointwise() const noexcept { return kernel == 1 && stride == 1 && pad == 0; }
};

// Unfolds one image (C x H x W) into a (C*k*k) x (out_h*out_w) matrix.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col);

// Inverse scatter of im2col; accumulates into image.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* image);

// y[N, out_c, oh, ow] = conv(x[N, in_c, h, w], w[out_c, in_c, k, k]) + bias. bias may be null.
template <typename T>
void conv2d_forward(const T* x, const T* weight, const T* bias, std::size_t batch,
                    const ConvGeometry& g, T* y);

// Accumulates gradients. Any of dx, dweight, dbias may be null.
template <typename T>
void conv2d_backward(const T* x, const T* weight, const T* dy, std::size_t batch,
                     const ConvGeometry& g, T* dx, T* dweight, T* dbias);

// Embedded-Gaussian attention over spatial positions:
//   affinity[i, j] = softmax_j( sum_c query[c, i] * key[c, j] )
//   out[c, i]      = sum_j affinity[i, j] * value[c, j]
// query/key are (embed x positions), value/out are (value_channels x positions),
// batched along the leading dimension.
struct AttentionGeometry {
  std::size_t embed = 0;
  std::size_t value_channels = 0;
  std::size_t positions = 0;
};

template <typename T>
void attention_forward(const T* query, const T* key, const T* value, std::size_t batch,
                       const AttentionGeometry& g, T* out);

// Accumulates into dquery, dkey, dvalue.
template <typename T>
void attention_backward(const T* query, const T* key, const T* value, const T* dout, std::size_t batch,
                        const AttentionGeometry& g, T* dquery, T* dkey, T* dvalue);

// Full positions x positions affinity for a single batch item.
template <typename T>
void attention_affinity(const T* query, const T* key, const AttentionGeometry& g, T* affinity);

// Bilinear resampling of `planes` independent planes, half-pixel centers
// (no corner alignment), clamped borders.
template <typename T>
void bilinear_resize(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w,
                     std::size_t out_h, std::size_t out_w, T* y);

template <typename T>
void bilinear_resize_backward(const T* dy, std::size_t planes, std::size_t in_h, std::size_t in_w,
                              std::size_t out_h, std::size_t out_w, T* dx);

// Adaptive average pooling with window [floor(i*H/o), ceil((i+1)*H/o)).
template <typename T>
void adaptive_avg_pool(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w,
                       std::size_t out_h, std::size_t out_w, T* y);

template <typename T>
void adaptive_avg_pool_backward(const T* dy, std::size_t planes, std::size_t in_h, std::size_t in_w,
                                std::size_t out_h, std::size_t out_w, T* dx);

// Max pooling with implicit -inf padding. `argmax` receives the flat in-plane
// index of each winner for the backward pass.
template <typename T>
void max_pool(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t kernel,
              std::size_t stride, std::size_t pad, T* y, std::size_t* argmax);

template <typename T>
void max_pool_backward(const T* dy, const std::size_t* argmax, std::size_t planes, std::size_t in_h,
                       std::size_t in_w, std::size_t out_h, std::size_t out_w, T* dx);

}  // namespace acsseg::kernels
