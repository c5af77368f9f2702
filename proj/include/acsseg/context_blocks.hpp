#pragma once

// Local context attention, the non-local operation, the global context
// module, and the channel-gated fusion used by the decoder.

#include <cstddef>
#include <vector>

#include "acsseg/nn.hpp"

namespace acsseg {

// Att = 1 - |p - T| / max(T, 1 - T), elementwise.
template <typename T>
T lca_value(T p, T threshold) {
  const T d = p > threshold ? p - threshold : threshold - p;
  const T m = threshold > T(1) - threshold ? threshold : T(1) - threshold;
  return T(1) - d / m;
}

// Attention map for a probability map; threshold must lie in (0, 1).
template <typename T>
Tensor<T> lca_attention(const Tensor<T>& probabilities, T threshold);

// features * att + features with att (N x 1 x H x W) broadcast over channels.
template <typename T>
Var<T> lca_apply(const Var<T>& features, const Var<T>& att);

// Local context attention for one skip connection. The threshold is kept as
// a non-trainable buffer so that it travels with checkpoints.
template <typename T>
class Lca : public nn::Module<T> {
 public:
  explicit Lca(T threshold);

  T threshold() const { return (*threshold_)[0]; }
  Tensor<T> attention(const Tensor<T>& probabilities) const { return lca_attention(probabilities, threshold()); }
  Var<T> forward(const Var<T>& features, const Tensor<T>& att) const { return lca_apply(features, Var<T>(att)); }

 private:
  Tensor<T>* threshold_;
};

// Embedded-Gaussian non-local block with a zero-initialized output projection.
template <typename T>
class NonLocal : public nn::Module<T> {
 public:
  NonLocal(std::size_t channels, nn::InitRng& rng);

  Var<T> forward(const Var<T>& x) const;
  // Attention branch before the residual: W_out(affinity * g(x)).
  Var<T> branch(const Var<T>& x) const;
  // Positions x positions affinity for batch item `n`.
  Tensor<T> affinity(const Tensor<T>& x, std::size_t n = 0) const;

 private:
  std::size_t channels_;
  nn::Conv2d<T>* theta_;
  nn::Conv2d<T>* phi_;
  nn::Conv2d<T>* g_;
  nn::Conv2d<T>* out_;
};

// Four-branch context: [global 1x1 | pooled 3x3 | pooled 5x5 | non-local],
// each projected to branch_channels and resampled to the input size.
template <typename T>
class Gcm : public nn::Module<T> {
 public:
  Gcm(std::size_t in_channels, std::size_t branch_channels, nn::InitRng& rng);

  Var<T> forward(const Var<T>& f5) const;
  // Individual branch output (0-based, already at input resolution).
  Var<T> branch(const Var<T>& f5, std::size_t index) const;
  std::size_t out_channels() const noexcept { return 4 * branch_channels_; }

 private:
  std::size_t branch_channels_;
  std::vector<nn::Conv2d<T>*> convs_;
  NonLocal<T>* nl_;
};

// Squeeze-and-excitation: GAP -> fc(C, C/r) -> ReLU -> fc(C/r, C) -> sigmoid.
template <typename T>
class SeGate : public nn::Module<T> {
 public:
  SeGate(std::size_t channels, std::size_t reduction, nn::InitRng& rng);

  // Returns gates of shape N x C x 1 x 1.
  Var<T> forward(const Var<T>& x) const;
  nn::Conv2d<T>& fc1() { return *fc1_; }
  nn::Conv2d<T>& fc2() { return *fc2_; }

 private:
  nn::Conv2d<T>* fc1_;
  nn::Conv2d<T>* fc2_;
};

// concat(prev, lca, gcm) -> channel gate -> scale -> 1x1 projection.
// With prev_channels > 0 the module also owns the non-local block that the
// decoder applies to the previous block's features before fusion.
template <typename T>
class Asm : public nn::Module<T> {
 public:
  Asm(std::size_t in_channels, std::size_t out_channels, std::size_t reduction, nn::InitRng& rng,
      std::size_t prev_channels = 0);

  Var<T> attend_prev(const Var<T>& prev) const;

  Var<T> forward(const Var<T>& prev, const Var<T>& lca, const Var<T>& gcm) const;
  // Same fusion with the gate supplied by the caller (N x C x 1 x 1).
  Var<T> forward_with_gate(const Var<T>& prev, const Var<T>& lca, const Var<T>& gcm, const Var<T>& gate) const;
  Var<T> gate(const Var<T>& prev, const Var<T>& lca, const Var<T>& gcm) const;

  std::size_t in_channels() const noexcept { return in_channels_; }
  std::size_t out_channels() const noexcept { return proj_->out_channels(); }

 private:
  Var<T> fuse(const Var<T>& prev, const Var<T>& lca, const Var<T>& gcm) const;

  std::size_t in_channels_;
  NonLocal<T>* nl_ = nullptr;
  SeGate<T>* se_;
  nn::Conv2d<T>* proj_;
};

}  // namespace acsseg
