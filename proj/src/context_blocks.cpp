#include "acsseg/context_blocks.hpp"

#include <stdexcept>
#include <string>

#include "acsseg/kernels.hpp"

namespace acsseg {
namespace {

template <typename T>
void require_same_spatial(const Var<T>& a, const Var<T>& b, const char* what) {
  const Dims4 da = a.value().dims4();
  const Dims4 db = b.value().dims4();
  if (da.n != db.n || da.h != db.h || da.w != db.w) {
    throw std::invalid_argument(std::string(what) + ": spatial mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> lca_attention(const Tensor<T>& probabilities, T threshold) {
  if (!(threshold > T(0) && threshold < T(1))) throw std::invalid_argument("threshold out of (0,1)");
  Tensor<T> att(probabilities.shape());
  for (std::size_t i = 0; i < att.numel(); ++i) att[i] = lca_value(probabilities[i], threshold);
  return att;
}

template <typename T>
Var<T> lca_apply(const Var<T>& features, const Var<T>& att) {
  require_same_spatial(features, att, "lca_apply");
  if (att.value().dims4().c != 1) throw std::invalid_argument("lca_apply: attention must have one channel");
  return ops::gate_spatial_residual(features, att);
}

template <typename T>
Lca<T>::Lca(T threshold) {
  if (!(threshold > T(0) && threshold < T(1))) throw std::invalid_argument("threshold out of (0,1)");
  threshold_ = &this->register_buffer("threshold", Tensor<T>({1}, threshold));
}

template <typename T>
NonLocal<T>::NonLocal(std::size_t channels, nn::InitRng& rng) : channels_(channels) {
  if (channels == 0 || channels % 2 != 0) {
    throw std::invalid_argument("non_local: channel count must be even, got " + std::to_string(channels));
  }
  const std::size_t e = channels / 2;
  theta_ = &this->register_module("theta", std::make_unique<nn::Conv2d<T>>(channels, e, 1, 1, 0, true, rng));
  phi_ = &this->register_module("phi", std::make_unique<nn::Conv2d<T>>(channels, e, 1, 1, 0, true, rng));
  g_ = &this->register_module("g", std::make_unique<nn::Conv2d<T>>(channels, e, 1, 1, 0, true, rng));
  out_ = &this->register_module("out", std::make_unique<nn::Conv2d<T>>(e, channels, 1, 1, 0, true, rng));
  out_->weight().mutable_value().fill(T(0));
  out_->bias()->mutable_value().fill(T(0));
}

template <typename T>
Var<T> NonLocal<T>::branch(const Var<T>& x) const {
  if (x.value().dims4().c != channels_) {
    throw std::invalid_argument("non_local: expected " + std::to_string(channels_) + " channels, got " +
                                shape_str(x.shape()));
  }
  return out_->forward(ops::spatial_attention(theta_->forward(x), phi_->forward(x), g_->forward(x)));
}

template <typename T>
Var<T> NonLocal<T>::forward(const Var<T>& x) const {
  return ops::add(x, branch(x));
}

template <typename T>
Tensor<T> NonLocal<T>::affinity(const Tensor<T>& x, std::size_t n) const {
  NoGradGuard guard;
  const Var<T> input(x);
  const Tensor<T> q = theta_->forward(input).value();
  const Tensor<T> k = phi_->forward(input).value();
  const Dims4 d = q.dims4();
  const kernels::AttentionGeometry g{d.c, d.c, d.h * d.w};
  Tensor<T> out({g.positions, g.positions});
  const std::size_t offset = n * d.c * g.positions;
  kernels::attention_affinity(q.data() + offset, k.data() + offset, g, out.data());
  return out;
}

template <typename T>
Gcm<T>::Gcm(std::size_t in_channels, std::size_t branch_channels, nn::InitRng& rng)
    : branch_channels_(branch_channels) {
  for (std::size_t b = 1; b <= 4; ++b) {
    auto& container = this->register_module("branch" + std::to_string(b), std::make_unique<nn::Container<T>>());
    if (b == 4) nl_ = &container.add("nl", std::make_unique<NonLocal<T>>(in_channels, rng));
    convs_.push_back(
        &container.add("conv", std::make_unique<nn::Conv2d<T>>(in_channels, branch_channels, 1, 1, 0, true, rng)));
  }
}

template <typename T>
Var<T> Gcm<T>::branch(const Var<T>& f5, std::size_t index) const {
  static constexpr std::size_t kPooled[3] = {1, 3, 5};
  const Dims4 d = f5.value().dims4();
  if (d.h == 0 || d.w == 0) throw std::invalid_argument("gcm: empty input " + shape_str(f5.shape()));
  if (index == 3) return convs_[3]->forward(nl_->forward(f5));
  const std::size_t s = kPooled[index];
  const Var<T> pooled = ops::adaptive_avg_pool2d(f5, s, s);
  return ops::upsample_bilinear(convs_[index]->forward(pooled), d.h, d.w);
}

template <typename T>
Var<T> Gcm<T>::forward(const Var<T>& f5) const {
  std::vector<Var<T>> parts;
  for (std::size_t i = 0; i < 4; ++i) parts.push_back(branch(f5, i));
  return ops::concat_channels(parts);
}

template <typename T>
SeGate<T>::SeGate(std::size_t channels, std::size_t reduction, nn::InitRng& rng) {
  const std::size_t hidden = std::max<std::size_t>(1, channels / std::max<std::size_t>(1, reduction));
  fc1_ = &this->register_module("fc1", std::make_unique<nn::Conv2d<T>>(channels, hidden, 1, 1, 0, true, rng));
  fc2_ = &this->register_module("fc2", std::make_unique<nn::Conv2d<T>>(hidden, channels, 1, 1, 0, true, rng));
}

template <typename T>
Var<T> SeGate<T>::forward(const Var<T>& x) const {
  const Var<T> squeezed = ops::adaptive_avg_pool2d(x, 1, 1);
  return ops::sigmoid(fc2_->forward(ops::relu(fc1_->forward(squeezed))));
}

template <typename T>
Asm<T>::Asm(std::size_t in_channels, std::size_t out_channels, std::size_t reduction, nn::InitRng& rng,
            std::size_t prev_channels)
    : in_channels_(in_channels) {
  if (prev_channels > 0) nl_ = &this->register_module("nl", std::make_unique<NonLocal<T>>(prev_channels, rng));
  se_ = &this->register_module("se", std::make_unique<SeGate<T>>(in_channels, reduction, rng));
  proj_ = &this->register_module("proj",
                                 std::make_unique<nn::Conv2d<T>>(in_channels, out_channels, 1, 1, 0, true, rng));
}

template <typename T>
Var<T> Asm<T>::attend_prev(const Var<T>& prev) const {
  if (nl_ == nullptr) throw std::logic_error("asm: no non-local block configured");
  return nl_->forward(prev);
}

template <typename T>
Var<T> Asm<T>::fuse(const Var<T>& prev, const Var<T>& lca, const Var<T>& gcm) const {
  require_same_spatial(prev, lca, "asm_fuse");
  require_same_spatial(prev, gcm, "asm_fuse");
  Var<T> cat = ops::concat_channels(std::vector<Var<T>>{prev, lca, gcm});
  if (cat.value().dims4().c != in_channels_) {
    throw std::invalid_argument("asm_fuse: expected " + std::to_string(in_channels_) + " input channels, got " +
                                std::to_string(cat.value().dims4().c));
  }
  return cat;
}

template <typename T>
Var<T> Asm<T>::gate(const Var<T>& prev, const Var<T>& lca, const Var<T>& gcm) const {
  return se_->forward(fuse(prev, lca, gcm));
}

template <typename T>
Var<T> Asm<T>::forward(const Var<T>& prev, const Var<T>& lca, const Var<T>& gcm) const {
  const Var<T> cat = fuse(prev, lca, gcm);
  return proj_->forward(ops::scale_channels(cat, se_->forward(cat)));
}

template <typename T>
Var<T> Asm<T>::forward_with_gate(const Var<T>& prev, const Var<T>& lca, const Var<T>& gcm,
                                 const Var<T>& gate) const {
  return proj_->forward(ops::scale_channels(fuse(prev, lca, gcm), gate));
}

#define ACSSEG_INSTANTIATE(T)                                          \
  template Tensor<T> lca_attention<T>(const Tensor<T>&, T);            \
  template Var<T> lca_apply<T>(const Var<T>&, const Var<T>&);          \
  template class Lca<T>;                                               \
  template class NonLocal<T>;                                          \
  template class Gcm<T>;                                               \
  template class SeGate<T>;                                            \
  template class Asm<T>;

ACSSEG_INSTANTIATE(float)
ACSSEG_INSTANTIATE(double)
ACSSEG_INSTANTIATE(long double)

}  // namespace acsseg
