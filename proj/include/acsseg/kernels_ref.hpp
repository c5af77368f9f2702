#pragma once

// Serial reference kernels: straightforward loops, no blocking, no threads.
// Kept for testing and benchmarking the parallel kernels in kernels.hpp.

#include <cstddef>

#include "acsseg/kernels.hpp"

namespace acsseg::kernels::ref {

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

// Direct (7-loop) convolution.
template <typename T>
void conv2d_forward(const T* x, const T* weight, const T* bias, std::size_t batch,
                    const ConvGeometry& g, T* y);

template <typename T>
void conv2d_backward(const T* x, const T* weight, const T* dy, std::size_t batch,
                     const ConvGeometry& g, T* dx, T* dweight, T* dbias);

// Materializes the whole affinity matrix.
template <typename T>
void attention_forward(const T* query, const T* key, const T* value, std::size_t batch,
                       const AttentionGeometry& g, T* out);

template <typename T>
void attention_backward(const T* query, const T* key, const T* value, const T* dout, std::size_t batch,
                        const AttentionGeometry& g, T* dquery, T* dkey, T* dvalue);

template <typename T>
void bilinear_resize(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w,
                     std::size_t out_h, std::size_t out_w, T* y);

template <typename T>
void bilinear_resize_backward(const T* dy, std::size_t planes, std::size_t in_h, std::size_t in_w,
                              std::size_t out_h, std::size_t out_w, T* dx);

template <typename T>
void adaptive_avg_pool(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w,
                       std::size_t out_h, std::size_t out_w, T* y);

}  // namespace acsseg::kernels::ref
