#include "acsseg/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "acsseg/errors.hpp"

namespace acsseg {

void LossConfig::validate() const {
  if (!(bce_weight >= 0.0) || !(dice_weight >= 0.0)) throw ConfigError("loss.bce_weight/loss.dice_weight: weights must be non-negative");
  if (bce_weight == 0.0 && dice_weight == 0.0) throw ConfigError("loss.bce_weight/loss.dice_weight: one of them must be positive");
  if (!(smooth > 0.0)) throw ConfigError("loss.smooth: smoothing must be positive");
  for (double w : scale_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss.scale_weights: weights must be finite and non-negative");
  }
}

template <typename T>
Tensor<T> mask_batch(const std::vector<const BinaryMask*>& masks) {
  if (masks.empty()) throw std::invalid_argument("mask_batch: no masks");
  const std::size_t h = masks[0]->height;
  const std::size_t w = masks[0]->width;
  Tensor<T> out({masks.size(), 1, h, w});
  T* dst = out.data();
  for (const BinaryMask* m : masks) {
    if (m->height != h || m->width != w) throw std::invalid_argument("mask_batch: heterogeneous sizes");
    for (auto v : m->values) *dst++ = static_cast<T>(v);
  }
  return out;
}

template <typename T>
LossResult<T> deep_supervised_loss(const MultiScalePredictions<T>& preds, const Tensor<T>& masks,
                                   const LossConfig& cfg) {
  std::vector<Var<T>> terms;
  std::vector<T> weights;
  LossResult<T> result;
  const T eps = static_cast<T>(cfg.smooth);
  for (std::size_t s = 0; s < 5; ++s) {
    const Var<T>& logits = s < 4 ? preds.logits[s] : preds.final;
    const Dims4 d = logits.value().dims4();
    const Tensor<T> target = s < 4 ? ops::resize_nearest(masks, d.h, d.w) : masks;
    const Var<T> bce = bce_loss(logits, target);
    const Var<T> dice = dice_loss(logits, target, eps);
    result.breakdown.per_scale[s] = {static_cast<double>(bce.value()[0]), static_cast<double>(dice.value()[0])};
    terms.push_back(bce);
    weights.push_back(static_cast<T>(cfg.scale_weights[s] * cfg.bce_weight));
    terms.push_back(dice);
    weights.push_back(static_cast<T>(cfg.scale_weights[s] * cfg.dice_weight));
  }
  result.total = ops::weighted_sum(terms, weights);
  result.breakdown.total = static_cast<double>(result.total.value()[0]);
  return result;
}

template Tensor<float> mask_batch<float>(const std::vector<const BinaryMask*>&);
template Tensor<double> mask_batch<double>(const std::vector<const BinaryMask*>&);
template Tensor<long double> mask_batch<long double>(const std::vector<const BinaryMask*>&);
template LossResult<float> deep_supervised_loss<float>(const MultiScalePredictions<float>&, const Tensor<float>&,
                                                       const LossConfig&);
template LossResult<double> deep_supervised_loss<double>(const MultiScalePredictions<double>&, const Tensor<double>&,
                                                         const LossConfig&);
template LossResult<long double> deep_supervised_loss<long double>(const MultiScalePredictions<long double>&,
                                                                   const Tensor<long double>&, const LossConfig&);

}  // namespace acsseg
