#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "acsseg/decoder_net.hpp"
#include "acsseg/errors.hpp"
#include "acsseg/objectives.hpp"
#include "test_util.hpp"

using namespace acsseg;
using namespace acsseg::testing;

namespace {

std::set<std::string> names_of(const nn::Module<float>& m) {
  std::set<std::string> out;
  for (const auto& e : nn::inventory_of(m)) out.insert(e.name);
  return out;
}

std::set<std::string> groups_with_prefix(const std::set<std::string>& names, const std::string& prefix) {
  std::set<std::string> out;
  for (const auto& n : names)
    if (n.rfind(prefix, 0) == 0) out.insert(n.substr(0, n.find('.')));
  return out;
}

void zero_heads(AcsNet<float>& m) {
  for (std::size_t b = 1; b <= 5; ++b) {
    m.head(b).weight().mutable_value().fill(0.0f);
    m.head(b).bias()->mutable_value().fill(0.0f);
  }
}

}  // namespace

TEST_CASE("ablation names") {
  for (auto a : {Ablation::Baseline, Ablation::Lca, Ablation::LcaGcm, Ablation::Full})
    CHECK(ablation_from_string(to_string(a)) == a);
  CHECK(to_string(Ablation::LcaGcm) == "lca_gcm");
  CHECK_THROWS(ablation_from_string("asm"));
}

TEST_CASE("baseline has no context modules") {
  auto m = build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Baseline), 1);
  for (const auto& n : names_of(*m)) {
    CHECK(n.rfind("gcm", 0) != 0);
    CHECK(n.rfind("asm", 0) != 0);
    CHECK(n.rfind("lca", 0) != 0);
    CHECK(n.rfind("nl5", 0) != 0);
  }
}

TEST_CASE("full resnet34_shape model has 4 LCA, 4 ASM and 1 GCM") {
  auto m = build_model<float>(ModelConfig::make(EncoderVariant::ResNet34Shape, Ablation::Full), 1);
  const auto names = names_of(*m);
  CHECK(groups_with_prefix(names, "lca") == std::set<std::string>{"lca1", "lca2", "lca3", "lca4"});
  CHECK(groups_with_prefix(names, "asm") == std::set<std::string>{"asm1", "asm2", "asm3", "asm4"});
  CHECK(groups_with_prefix(names, "gcm") == std::set<std::string>{"gcm"});
  CHECK(groups_with_prefix(names, "head") == std::set<std::string>{"head1", "head2", "head3", "head4", "head5"});
  CHECK(names.count("lca3.threshold") == 1);
}

TEST_CASE("ablation inventories nest by name") {
  const auto base = names_of(*build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Baseline), 1));
  const auto lca = names_of(*build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Lca), 1));
  const auto lg = names_of(*build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::LcaGcm), 1));
  const auto full = names_of(*build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Full), 1));
  CHECK(std::includes(lca.begin(), lca.end(), base.begin(), base.end()));
  CHECK(std::includes(lg.begin(), lg.end(), lca.begin(), lca.end()));
  CHECK(std::includes(full.begin(), full.end(), lg.begin(), lg.end()));
  CHECK(base.size() < lca.size());
  CHECK(lca.size() < lg.size());
  CHECK(lg.size() < full.size());
}

TEST_CASE("inventory is deterministic per variant and ablation") {
  const auto cfg = ModelConfig::make(EncoderVariant::Tiny, Ablation::Full);
  const auto a = nn::inventory_of(*build_model<float>(cfg, 1));
  const auto b = nn::inventory_of(*build_model<float>(cfg, 99));
  CHECK(a == b);
}

TEST_CASE("channel plan") {
  const auto cfg = ModelConfig::make(EncoderVariant::ResNet34Shape, Ablation::Full);
  const auto plan = channel_plan(cfg);
  REQUIRE(plan.size() == 5);
  const std::size_t ctx = 4 * 64;
  CHECK(plan[0].in == 512 + ctx);
  for (std::size_t b = 1; b < 5; ++b) {
    CHECK(plan[b].in == plan[b - 1].out + cfg.encoder.stage_channels[4 - b] + ctx);
    CHECK(plan[b].prev == cfg.decoder.block_channels[b - 1]);
  }
  const auto base = channel_plan(ModelConfig::make(EncoderVariant::Tiny, Ablation::Baseline));
  CHECK(base[0].in == 256);
  CHECK(base[4].in == 32 + 16);

  auto bad = cfg;
  bad.decoder.block_channels[2] = 0;
  CHECK_THROWS_AS(channel_plan(bad), ConfigError);
  bad = cfg;
  bad.decoder.block_channels[1] = 63;  // odd width feeding a non-local block
  CHECK_THROWS_AS(channel_plan(bad), ConfigError);
  bad = cfg;
  bad.lca_threshold = 1.0;
  CHECK_THROWS_AS(channel_plan(bad), ConfigError);
  bad = cfg;
  bad.encoder.stage_channels[0] = 32;
  CHECK_THROWS_AS(channel_plan(bad), ConfigError);
  CHECK_THROWS_AS(build_model<float>(bad, 1), ConfigError);
}

TEST_CASE("tiny full model runs on 96x96 and emits the prediction pyramid") {
  auto m = build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Full), 2);
  std::mt19937_64 rng(1);
  const auto p = m->forward(Var<float>(random_tensor<float>({2, 3, 96, 96}, rng, 0, 1)));
  for (std::size_t s = 0; s < 5; ++s) {
    const std::size_t side = 96 >> (5 - s);
    CHECK(p.logits[s].shape() == Shape{2, 1, side, side});
  }
  CHECK(p.final.shape() == Shape{2, 1, 96, 96});
  for (std::size_t k = 0; k < 4; ++k) CHECK(p.attention[k].shape() == Shape{2, 1, std::size_t{96} >> (k + 1), std::size_t{96} >> (k + 1)});
  for (const float v : p.final.value().span()) CHECK(std::isfinite(v));
}

TEST_CASE("resnet34_shape pyramid on 224x224") {
  auto m = build_model<float>(ModelConfig::make(EncoderVariant::ResNet34Shape, Ablation::Full), 3);
  m->set_training(false);
  std::mt19937_64 rng(2);
  const Tensor<float> x = random_tensor<float>({1, 3, 224, 224}, rng, 0, 1);
  NoGradGuard guard;
  const auto p = m->forward(Var<float>(x));
  const std::size_t sides[5] = {7, 14, 28, 56, 112};
  for (std::size_t s = 0; s < 5; ++s) CHECK(p.logits[s].shape() == Shape{1, 1, sides[s], sides[s]});
  CHECK(p.final.shape() == Shape{1, 1, 224, 224});
}

TEST_CASE("final map is the bilinear upsampling of the s1 logits") {
  auto m = build_model<double>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Lca), 4);
  std::mt19937_64 rng(3);
  const auto p = m->forward(Var<double>(random_tensor<double>({1, 3, 64, 64}, rng, 0, 1)));
  const auto up = ops::upsample_bilinear(p.logits[4], 64, 64);
  CHECK(up.value() == p.final.value());
}

TEST_CASE("zero heads give probability 0.5 and unit attention") {
  for (auto ab : {Ablation::Lca, Ablation::LcaGcm, Ablation::Full}) {
    auto m = build_model<float>(ModelConfig::make(EncoderVariant::Tiny, ab), 5);
    zero_heads(*m);
    std::mt19937_64 rng(4);
    const auto p = m->forward(Var<float>(random_tensor<float>({1, 3, 64, 96}, rng, 0, 1)));
    for (std::size_t k = 0; k < 4; ++k)
      for (const float a : p.attention[k].span()) CHECK(a == 1.0f);
    const auto prob = m->predict_probability(random_tensor<float>({1, 3, 64, 96}, rng, 0, 1));
    for (const float v : prob.span()) CHECK(v == 0.5f);
  }
}

TEST_CASE("attention comes from the previous block's upsampled probabilities") {
  auto m = build_model<double>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Full), 6);
  std::mt19937_64 rng(5);
  const auto p = m->forward(Var<double>(random_tensor<double>({1, 3, 64, 64}, rng, 0, 1)));
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t side = 64 >> (k + 1);
    const auto prob = ops::sigmoid(p.logits[3 - k].detach());
    const auto expect = lca_attention(ops::upsample_bilinear(prob, side, side).value(), 0.5);
    CHECK(p.attention[k] == expect);
  }
}

TEST_CASE("attention override replaces the computed maps") {
  auto m = build_model<double>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Lca), 7);
  std::mt19937_64 rng(6);
  const Var<double> x(random_tensor<double>({1, 3, 64, 64}, rng, 0, 1));
  std::array<Tensor<double>, 4> att;
  for (std::size_t k = 0; k < 4; ++k) att[k] = Tensor<double>({1, 1, 64u >> (k + 1), 64u >> (k + 1)}, 0.25);
  ForwardOptions<double> opts{&att};
  const auto p = m->forward(x, opts);
  for (std::size_t k = 0; k < 4; ++k) CHECK(p.attention[k] == att[k]);
}

TEST_CASE("inference forwards are bitwise deterministic") {
  auto m = build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Full), 8);
  m->set_training(false);
  std::mt19937_64 rng(7);
  const auto x = random_tensor<float>({2, 3, 64, 64}, rng, 0, 1);
  CHECK(m->predict_probability(x) == m->predict_probability(x));
  auto m2 = build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Full), 8);
  m2->set_training(false);
  CHECK(m->predict_probability(x) == m2->predict_probability(x));
}

TEST_CASE("stride violations are rejected") {
  auto m = build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Full), 9);
  CHECK_THROWS(m->forward(Var<float>(Tensor<float>({1, 3, 80, 64}))));
}

TEST_CASE("predict_mask thresholding") {
  auto m = build_model<float>(ModelConfig::make(EncoderVariant::Tiny, Ablation::Full), 10);
  m->set_training(false);
  ImageTensor img = ImageTensor::zeros(64, 64);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& v : img.values) v = u(rng);

  SUBCASE("zero logits tie goes to foreground") {
    zero_heads(*m);
    const auto mask = predict_mask(*m, img, 0.5);
    CHECK(mask.foreground() == 64 * 64);
  }
  SUBCASE("threshold near one gives an empty mask for bounded logits") {
    zero_heads(*m);
    m->head(1).bias()->mutable_value().fill(5.0f);
    const auto mask = predict_mask(*m, img, 1.0 - 1e-9);
    CHECK(mask.foreground() == 0);
  }
  SUBCASE("mask equals the elementwise oracle") {
    const auto prob = m->predict_probability(image_batch<float>({&img}));
    const auto mask = predict_mask(*m, img, 0.5);
    REQUIRE(mask.height == 64);
    for (std::size_t i = 0; i < mask.values.size(); ++i) CHECK(mask.values[i] == (prob[i] >= 0.5f ? 1 : 0));
  }
  CHECK_THROWS(predict_mask(*m, img, 0.0));
  CHECK_THROWS(predict_mask(*m, img, 1.0));
}

TEST_CASE("outputs are finite for inputs in [0,1] across ablations and norms") {
  for (auto ab : {Ablation::Baseline, Ablation::Lca, Ablation::LcaGcm, Ablation::Full}) {
    for (auto norm : {nn::NormKind::Batch, nn::NormKind::Group}) {
      auto m = build_model<float>(ModelConfig::make(EncoderVariant::Tiny, ab, norm), 11);
      std::mt19937_64 rng(9);
      const auto p = m->forward(Var<float>(random_tensor<float>({2, 3, 64, 64}, rng, 0, 1)));
      for (std::size_t s = 0; s < 5; ++s)
        for (const float v : p.logits[s].value().span()) REQUIRE(std::isfinite(v));
    }
  }
}

TEST_CASE("end-to-end gradients, tiny full model on 64x64") {
  // The LCA maps are frozen (their probability input is treated as constant),
  // so finite differences see the same attention as backpropagation.
  const auto cfg = ModelConfig::make(EncoderVariant::Tiny, Ablation::Full);
  std::mt19937_64 rng(12);
  auto mf = build_model<float>(cfg, 3);
  wake_non_local(*mf, rng);
  auto md = build_model<double>(cfg, 3);
  auto ml = build_model<long double>(cfg, 3);
  copy_state(*mf, *md);
  copy_state(*mf, *ml);

  const auto xf = random_tensor<float>({2, 3, 64, 64}, rng, 0, 1);
  const auto mask = random_mask<float>({2, 1, 64, 64}, rng);
  std::array<Tensor<float>, 4> att_f;
  {
    NoGradGuard guard;
    att_f = mf->forward(Var<float>(xf)).attention;
  }
  std::array<Tensor<double>, 4> att_d;
  std::array<Tensor<long double>, 4> att_l;
  for (std::size_t k = 0; k < 4; ++k) {
    att_d[k] = widen<double>(att_f[k]);
    att_l[k] = widen<long double>(att_f[k]);
  }
  const Var<float> vf(xf);
  const Var<double> vd(widen<double>(xf));
  const Var<long double> vl(widen<long double>(xf));
  const auto mask_d = widen<double>(mask);
  const auto mask_l = widen<long double>(mask);
  const LossConfig lc;
  const std::function<Var<float>()> loss_f = [&] {
    return deep_supervised_loss(mf->forward(vf, ForwardOptions<float>{&att_f}), mask, lc).total;
  };
  const std::function<Var<double>()> loss_d = [&] {
    return deep_supervised_loss(md->forward(vd, ForwardOptions<double>{&att_d}), mask_d, lc).total;
  };
  const std::function<Var<long double>()> loss_l = [&] {
    return deep_supervised_loss(ml->forward(vl, ForwardOptions<long double>{&att_l}), mask_l, lc).total;
  };

  SUBCASE("single precision") {
    const auto r = check_gradients_twin<float, double>(loss_f, leaves_of(*mf), loss_d, leaves_of(*md), 30, 21, 1e-6, 1e-4);
    INFO(r.worst);
    CHECK(r.checked == 30);
    CHECK(r.max_rel_error < 1e-3);
  }
  SUBCASE("double precision against an extended-precision twin") {
    // ReLU kinks sit within ~1e-6 of many parameters here, hence the tiny
    // step; the extended-precision twin keeps its differences well above
    // roundoff.
    const auto r = check_gradients_twin<double, long double>(loss_d, leaves_of(*md), loss_l, leaves_of(*ml), 24, 22, 1e-8, 1e-3);
    INFO(r.worst);
    CHECK(r.checked == 24);
    CHECK(r.max_rel_error < 1e-6);
  }
}
