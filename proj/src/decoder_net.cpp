#include "acsseg/decoder_net.hpp"

#include <stdexcept>

#include "acsseg/errors.hpp"

namespace acsseg {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::Baseline: return "baseline";
    case Ablation::Lca: return "lca";
    case Ablation::LcaGcm: return "lca_gcm";
    case Ablation::Full: return "full";
  }
  return "?";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "baseline") return Ablation::Baseline;
  if (s == "lca") return Ablation::Lca;
  if (s == "lca_gcm") return Ablation::LcaGcm;
  if (s == "full") return Ablation::Full;
  throw std::invalid_argument("unknown ablation '" + s + "'");
}

DecoderConfig DecoderConfig::for_variant(EncoderVariant variant, Ablation ablation) {
  DecoderConfig d;
  d.ablation = ablation;
  if (variant == EncoderVariant::ResNet34Shape) {
    d.block_channels = {256, 128, 64, 64, 32};
    d.gcm_branch_channels = 64;
    d.se_reduction = 16;
  } else {
    d.block_channels = {128, 64, 32, 32, 16};
    d.gcm_branch_channels = 16;
    d.se_reduction = 4;
  }
  return d;
}

ModelConfig ModelConfig::make(EncoderVariant variant, Ablation ablation, nn::NormKind norm) {
  return {EncoderConfig::for_variant(variant, norm), DecoderConfig::for_variant(variant, ablation), 0.5};
}

std::vector<BlockPlan> channel_plan(const ModelConfig& cfg) {
  try {
    cfg.encoder.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto& enc = cfg.encoder.stage_channels;
  const auto& dec = cfg.decoder.block_channels;
  const Ablation ab = cfg.decoder.ablation;
  const bool gcm = ab == Ablation::LcaGcm || ab == Ablation::Full;
  const std::size_t context = gcm ? 4 * cfg.decoder.gcm_branch_channels : 0;
  if (gcm && cfg.decoder.gcm_branch_channels == 0) throw ConfigError("channel plan: gcm branch width is zero");
  if (!(cfg.lca_threshold > 0.0 && cfg.lca_threshold < 1.0)) {
    throw ConfigError("channel plan: lca threshold out of (0,1)");
  }

  std::vector<BlockPlan> plan(5);
  for (std::size_t b = 0; b < 5; ++b) {
    if (dec[b] == 0) throw ConfigError("channel plan: block width d" + std::to_string(5 - b) + " is zero");
    BlockPlan& p = plan[b];
    p.prev = b == 0 ? 0 : dec[b - 1];
    p.skip = enc[4 - b];
    p.context = context;
    p.in = p.prev + p.skip + p.context;
    p.out = dec[b];
    if (ab == Ablation::Full) {
      const std::size_t attended = b == 0 ? p.skip : p.prev;
      if (attended % 2 != 0) {
        throw ConfigError("channel plan: non-local input of block " + std::to_string(5 - b) + " has odd width " +
                          std::to_string(attended));
      }
      if (p.in != p.prev + p.skip + 4 * cfg.decoder.gcm_branch_channels) {
        throw ConfigError("channel plan: block " + std::to_string(5 - b) + " input width audit failed");
      }
    }
  }
  return plan;
}

template <typename T>
AcsNet<T>::AcsNet(const ModelConfig& cfg, nn::InitRng& rng) : cfg_(cfg), plan_(channel_plan(cfg)) {
  const Ablation ab = cfg_.decoder.ablation;
  const bool use_lca = ab != Ablation::Baseline;
  const bool use_gcm = ab == Ablation::LcaGcm || ab == Ablation::Full;
  const bool use_asm = ab == Ablation::Full;
  const auto& enc = cfg_.encoder.stage_channels;

  encoder_ = &this->register_module("enc", std::make_unique<Encoder<T>>(cfg_.encoder, rng));
  if (use_gcm) {
    gcm_ = &this->register_module("gcm", std::make_unique<Gcm<T>>(enc[4], cfg_.decoder.gcm_branch_channels, rng));
  }
  if (use_asm) nl5_ = &this->register_module("nl5", std::make_unique<NonLocal<T>>(enc[4], rng));

  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t level = 5 - b;
    const BlockPlan& p = plan_[b];
    const std::size_t k = level - 1;  // LCA / ASM slot for levels 1..4
    if (level <= 4 && use_lca) {
      lca_[k] = &this->register_module("lca" + std::to_string(level),
                                       std::make_unique<Lca<T>>(static_cast<T>(cfg_.lca_threshold)));
    }
    std::size_t conv_in = p.in;
    if (level <= 4 && use_asm) {
      asm_[k] = &this->register_module("asm" + std::to_string(level),
                                       std::make_unique<Asm<T>>(p.in, p.out, cfg_.decoder.se_reduction, rng, p.prev));
      conv_in = p.out;
    }
    auto& dec = this->register_module("dec" + std::to_string(level), std::make_unique<nn::Container<T>>());
    conv1_[b] = &dec.add("conv1", std::make_unique<nn::ConvNormRelu<T>>(conv_in, p.out, 3, 1, cfg_.encoder.norm, rng));
    conv2_[b] = &dec.add("conv2", std::make_unique<nn::ConvNormRelu<T>>(p.out, p.out, 3, 1, cfg_.encoder.norm, rng));
    heads_[b] = &this->register_module("head" + std::to_string(level),
                                       std::make_unique<nn::Conv2d<T>>(p.out, 1, 1, 1, 0, true, rng));
  }
}

template <typename T>
MultiScalePredictions<T> AcsNet<T>::forward(const Var<T>& images, const ForwardOptions<T>& opts) const {
  const StageFeatures<T> f = encoder_->forward(images);
  const Dims4 in = images.value().dims4();
  MultiScalePredictions<T> out;

  Var<T> context;
  if (gcm_ != nullptr) context = gcm_->forward(f[4]);

  Var<T> x = nl5_ != nullptr ? nl5_->forward(f[4]) : f[4];
  if (context.defined()) x = ops::concat_channels(std::vector<Var<T>>{x, context});
  Var<T> prev = conv2_[0]->forward(conv1_[0]->forward(x));
  out.logits[0] = heads_[0]->forward(prev);

  for (std::size_t b = 1; b < 5; ++b) {
    const std::size_t k = 4 - b;  // level - 1
    const Var<T>& feat = f[k];
    const Dims4 d = feat.value().dims4();

    Var<T> skip = feat;
    if (lca_[k] != nullptr) {
      Tensor<T> att;
      if (opts.attention_override != nullptr) {
        att = (*opts.attention_override)[k];
      } else {
        NoGradGuard guard;
        const Var<T> prob = ops::sigmoid(out.logits[b - 1].detach());
        att = lca_[k]->attention(ops::upsample_bilinear(prob, d.h, d.w).value());
      }
      skip = lca_[k]->forward(feat, att);
      out.attention[k] = std::move(att);
    }

    Var<T> fused;
    if (asm_[k] != nullptr) {
      const Var<T> up = ops::upsample_bilinear(asm_[k]->attend_prev(prev), d.h, d.w);
      fused = asm_[k]->forward(up, skip, ops::upsample_bilinear(context, d.h, d.w));
    } else {
      std::vector<Var<T>> parts{ops::upsample_bilinear(prev, d.h, d.w), skip};
      if (context.defined()) parts.push_back(ops::upsample_bilinear(context, d.h, d.w));
      fused = ops::concat_channels(parts);
    }
    prev = conv2_[b]->forward(conv1_[b]->forward(fused));
    out.logits[b] = heads_[b]->forward(prev);
  }
  out.final = ops::upsample_bilinear(out.logits[4], in.h, in.w);
  return out;
}

template <typename T>
Tensor<T> AcsNet<T>::predict_probability(const Tensor<T>& images) const {
  NoGradGuard guard;
  return ops::sigmoid(forward(Var<T>(images)).final).value();
}

template <typename T>
Tensor<T> image_batch(const std::vector<const ImageTensor*>& images) {
  if (images.empty()) throw std::invalid_argument("image_batch: no images");
  const std::size_t h = images[0]->height;
  const std::size_t w = images[0]->width;
  Tensor<T> out({images.size(), 3, h, w});
  T* dst = out.data();
  for (const ImageTensor* img : images) {
    if (img->height != h || img->width != w) throw std::invalid_argument("image_batch: heterogeneous sizes");
    for (float v : img->values) *dst++ = static_cast<T>(v);
  }
  return out;
}

template <typename T>
BinaryMask predict_mask(const AcsNet<T>& model, const ImageTensor& image, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold out of (0,1)");
  const Tensor<T> prob = model.predict_probability(image_batch<T>({&image}));
  BinaryMask mask = BinaryMask::zeros(image.height, image.width);
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    mask.values[i] = static_cast<double>(prob[i]) >= threshold ? 1 : 0;
  }
  return mask;
}

template class AcsNet<float>;
template class AcsNet<double>;
template class AcsNet<long double>;
template Tensor<float> image_batch<float>(const std::vector<const ImageTensor*>&);
template Tensor<double> image_batch<double>(const std::vector<const ImageTensor*>&);
template Tensor<long double> image_batch<long double>(const std::vector<const ImageTensor*>&);
template BinaryMask predict_mask<float>(const AcsNet<float>&, const ImageTensor&, double);
template BinaryMask predict_mask<double>(const AcsNet<double>&, const ImageTensor&, double);

}  // namespace acsseg
