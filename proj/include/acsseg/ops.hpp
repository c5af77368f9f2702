#pragma once

// Differentiable tensor operations. All feature maps are NCHW.

#include <cstddef>
#include <vector>

#include "acsseg/autograd.hpp"
#include "acsseg/tensor.hpp"

namespace acsseg::ops {

// `bias` may be an undefined Var.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride, std::size_t pad);

// Batch normalization. In training mode batch statistics are used and the
// running buffers are updated in place (unbiased variance, as usual).
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps);

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, std::size_t groups, T eps);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t pad);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

// out = x * att + x, with att (N x 1 x H x W) broadcast over channels.
template <typename T>
Var<T> gate_spatial_residual(const Var<T>& x, const Var<T>& att);

// out[n, c] = x[n, c] * gate[n, c], gate is N x C x 1 x 1.
template <typename T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& gate);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> adaptive_avg_pool2d(const Var<T>& x, std::size_t out_h, std::size_t out_w);

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w);

// Softmax attention over positions; query/key: N x E x H x W, value: N x C x H x W.
template <typename T>
Var<T> spatial_attention(const Var<T>& query, const Var<T>& key, const Var<T>& value);

// Mean over all elements of the numerically stable binary cross entropy
// max(z, 0) - z t + log(1 + exp(-|z|)).
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& target);

// 1 - (2 sum(p t) + eps) / (sum p + sum t + eps) per batch item, averaged over
// the batch; p = sigmoid(logits).
template <typename T>
Var<T> dice_loss(const Var<T>& logits, const Tensor<T>& target, T eps);

// sum_i weights[i] * terms[i] over scalar terms.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights);

// Nearest-neighbour resample of N x C x H x W data (src = floor(dst * in / out)).
template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

}  // namespace acsseg::ops
