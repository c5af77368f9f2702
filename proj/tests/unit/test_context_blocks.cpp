#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "acsseg/context_blocks.hpp"
#include "acsseg/state.hpp"
#include "test_util.hpp"

using namespace acsseg;
using namespace acsseg::testing;

namespace {

constexpr double kFloatTol = 1e-3;
constexpr double kDoubleTol = 1e-6;

// Float gradients of project(f(x)) against a double twin, plus the same check
// entirely in double.
template <template <typename> class M, typename... Args>
void check_module(const std::function<Var<float>(const M<float>&, const Var<float>&)>& ff,
                  const std::function<Var<double>(const M<double>&, const Var<double>&)>& fd, const Shape& in,
                  std::size_t samples, Args... args) {
  std::mt19937_64 rng(17);
  nn::InitRng init(3);
  M<float> mf(args..., init);
  randomize(mf, rng);
  nn::InitRng init2(3);
  M<double> md(args..., init2);
  copy_state(mf, md);

  Var<float> x(random_tensor<float>(in, rng), true);
  Var<double> xd(to_double(x.value()), true);
  const Tensor<float> out_shape_probe = ff(mf, x).value();
  const auto proj = random_tensor<float>(out_shape_probe.shape(), rng);
  const auto projd = to_double(proj);

  auto leaves_f = without_key_bias(leaves_of(mf));
  auto leaves_d = without_key_bias(leaves_of(md));
  leaves_f.emplace_back("input", &x);
  leaves_d.emplace_back("input", &xd);

  const auto rf = check_gradients_twin<float, double>([&] { return project(ff(mf, x), proj); }, leaves_f,
                                       [&] { return project(fd(md, xd), projd); }, leaves_d, samples, 5, 1e-4, 1e-6);
  INFO("float: " << rf.worst);
  CHECK(rf.max_rel_error < kFloatTol);
  const auto rd = check_gradients<double>([&] { return project(fd(md, xd), projd); }, leaves_d, samples, 6, 1e-4, 1e-6);
  INFO("double: " << rd.worst);
  CHECK(rd.max_rel_error < kDoubleTol);
}

}  // namespace

TEST_CASE("lca values") {
  CHECK(lca_value(0.5, 0.5) == 1.0);
  CHECK(lca_value(1.0, 0.5) == doctest::Approx(0.0));
  CHECK(lca_value(0.0, 0.5) == doctest::Approx(0.0));
  CHECK(lca_value(0.75, 0.5) == doctest::Approx(0.5));
  CHECK(lca_value(0.9, 0.3) == doctest::Approx(1.0 - 0.6 / 0.7).epsilon(1e-12));
  CHECK(lca_value(0.9, 0.3) == doctest::Approx(0.142857).epsilon(1e-5));
  CHECK(lca_value(0.3f, 0.3f) == 1.0f);
}

TEST_CASE("lca attention: symmetry, monotonicity and range") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(1e-6, 1 - 1e-6);
  for (int i = 0; i < 1000; ++i) {
    const double p = u(rng);
    CHECK(lca_value(p, 0.5) == doctest::Approx(lca_value(1.0 - p, 0.5)).epsilon(1e-12));
    const double t = u(rng);
    const double a = lca_value(p, t);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    const double q = u(rng);
    if (std::abs(std::abs(p - t) - std::abs(q - t)) > 1e-9) {
      CHECK((std::abs(p - t) < std::abs(q - t)) == (a > lca_value(q, t)));
    }
  }
}

TEST_CASE("lca attention map and threshold validation") {
  Tensor<double> p({1, 1, 1, 4}, std::vector<double>{0.0, 0.25, 0.5, 1.0});
  const auto att = lca_attention(p, 0.5);
  CHECK(att.shape() == p.shape());
  CHECK(att[0] == doctest::Approx(0.0));
  CHECK(att[1] == doctest::Approx(0.5));
  CHECK(att[2] == doctest::Approx(1.0));
  CHECK(att[3] == doctest::Approx(0.0));
  CHECK_THROWS(lca_attention(p, 0.0));
  CHECK_THROWS(lca_attention(p, 1.0));
  CHECK_THROWS(Lca<double>(1.5));
  Lca<double> lca(0.3);
  CHECK(lca.threshold() == 0.3);
  REQUIRE(lca.buffers().size() == 1);
  CHECK(lca.buffers()[0].name == "threshold");
  CHECK(lca.parameters().empty());
}

TEST_CASE("lca apply examples") {
  std::mt19937_64 rng(2);
  const Var<double> f(random_tensor<double>({2, 3, 4, 5}, rng));
  const auto zero = lca_apply(f, Var<double>(Tensor<double>({2, 1, 4, 5}, 0.0)));
  const auto one = lca_apply(f, Var<double>(Tensor<double>({2, 1, 4, 5}, 1.0)));
  for (std::size_t i = 0; i < f.value().numel(); ++i) {
    CHECK(zero.value()[i] == f.value()[i]);
    CHECK(one.value()[i] == 2 * f.value()[i]);
  }
  const auto single = lca_apply(Var<double>(Tensor<double>({1, 1, 1, 1}, 3.0)), Var<double>(Tensor<double>({1, 1, 1, 1}, 0.5)));
  CHECK(single.value()[0] == 4.5);
  CHECK(zero.shape() == f.shape());
  CHECK_THROWS(lca_apply(f, Var<double>(Tensor<double>({2, 1, 4, 4}, 0.0))));
  CHECK_THROWS(lca_apply(f, Var<double>(Tensor<double>({2, 2, 4, 5}, 0.0))));
}

TEST_CASE("lca gradients with the probability map held constant") {
  std::mt19937_64 rng(3);
  Var<float> f(random_tensor<float>({1, 4, 8, 8}, rng), true);
  const auto probs = random_tensor<float>({1, 1, 8, 8}, rng, 0.0, 1.0);
  Var<float> att(lca_attention(probs, 0.5f), true);
  Var<double> fd(to_double(f.value()), true), attd(to_double(att.value()), true);
  const auto proj = random_tensor<float>({1, 4, 8, 8}, rng);
  const auto projd = to_double(proj);
  Lca<float> lca(0.5f);
  Lca<double> lcad(0.5);
  const auto r = check_gradients_twin<float, double>([&] { return project(lca_apply(f, att), proj); }, {{"f", &f}, {"att", &att}},
                                      [&] { return project(lca_apply(fd, attd), projd); }, {{"f", &fd}, {"att", &attd}},
                                      40, 1, 1e-4, 1e-6);
  INFO(r.worst);
  CHECK(r.max_rel_error < kFloatTol);
  const auto rm = check_gradients_twin<float, double>([&] { return project(lca.forward(f, lca.attention(probs)), proj); }, {{"f", &f}},
                                       [&] { return project(lcad.forward(fd, lcad.attention(to_double(probs))), projd); },
                                       {{"f", &fd}}, 20, 2, 1e-4, 1e-6);
  CHECK(rm.max_rel_error < kFloatTol);
}

TEST_CASE("non-local block is the identity at initialization") {
  std::mt19937_64 rng(4);
  nn::InitRng init(1);
  NonLocal<double> nl(4, init);
  const Var<double> x(random_tensor<double>({2, 4, 6, 5}, rng));
  const auto y = nl.forward(x);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.value().numel(); ++i) CHECK(y.value()[i] == x.value()[i]);
  CHECK_THROWS(NonLocal<double>(3, init));
  CHECK_THROWS(nl.forward(Var<double>(Tensor<double>({1, 6, 2, 2}))));
}

TEST_CASE("non-local affinity rows sum to one") {
  std::mt19937_64 rng(5);
  nn::InitRng init(2);
  NonLocal<float> nl(4, init);
  randomize(nl, rng);
  const auto x = random_tensor<float>({2, 4, 5, 7}, rng, -2, 2);
  for (std::size_t n = 0; n < 2; ++n) {
    const auto a = nl.affinity(x, n);
    REQUIRE(a.shape() == Shape{35, 35});
    for (std::size_t r = 0; r < 35; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 35; ++c) {
        CHECK(a[r * 35 + c] >= 0.0f);
        s += a[r * 35 + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("non-local branch is spatially constant for a constant input") {
  std::mt19937_64 rng(6);
  nn::InitRng init(3);
  NonLocal<double> nl(4, init);
  randomize(nl, rng);
  Tensor<double> x({1, 4, 5, 6});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 30; ++i) x[c * 30 + i] = 0.3 * c - 0.4;
  const auto b = nl.branch(Var<double>(x)).value();
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 30; ++i) CHECK(b[c * 30 + i] == doctest::Approx(b[c * 30]).epsilon(1e-12));
}

TEST_CASE("non-local gradients") {
  check_module<NonLocal>([](const NonLocal<float>& m, const Var<float>& x) { return m.forward(x); },
                         [](const NonLocal<double>& m, const Var<double>& x) { return m.forward(x); }, {1, 4, 6, 6}, 40,
                         std::size_t{4});
}

TEST_CASE("non-local key bias receives no gradient") {
  std::mt19937_64 rng(12);
  nn::InitRng init(10);
  NonLocal<double> nl(4, init);
  randomize(nl, rng);
  Var<double> x(random_tensor<double>({1, 4, 5, 5}, rng));
  backward(project(nl.forward(x), random_tensor<double>({1, 4, 5, 5}, rng)));
  for (const auto& p : nl.parameters()) {
    if (p.name != "phi.bias") continue;
    for (double g : p.var->grad().span()) CHECK(std::abs(g) < 1e-12);
  }
}

TEST_CASE("gcm output shape and branch behaviour") {
  std::mt19937_64 rng(7);
  nn::InitRng init(4);
  Gcm<float> gcm(8, 3, init);
  CHECK(gcm.out_channels() == 12);
  const Var<float> f5(random_tensor<float>({1, 8, 9, 12}, rng));
  const auto out = gcm.forward(f5);
  CHECK(out.shape() == Shape{1, 12, 9, 12});

  const auto b1 = gcm.branch(f5, 0).value();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 108; ++i) CHECK(b1[c * 108 + i] == doctest::Approx(b1[c * 108]).epsilon(1e-6));
  // Branches appear in declaration order.
  for (std::size_t k = 0; k < 4; ++k) {
    const auto bk = gcm.branch(f5, k).value();
    for (std::size_t i = 0; i < bk.numel(); ++i) CHECK(out.value()[k * bk.numel() + i] == bk[i]);
  }
}

TEST_CASE("gcm on a constant input: pooled branches equal the conv image of the constant") {
  nn::InitRng init(5);
  Gcm<double> gcm(4, 2, init);
  std::mt19937_64 rng(8);
  randomize(gcm, rng);
  Tensor<double> f5({1, 4, 7, 7});
  const double vals[4] = {0.5, -1.0, 2.0, 0.25};
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 49; ++i) f5[c * 49 + i] = vals[c];
  // 1x1 conv of the constant vector, computed by hand from the branch weights.
  const auto params = gcm.parameters();
  for (std::size_t b = 0; b < 3; ++b) {
    const std::string prefix = "branch" + std::to_string(b + 1) + ".conv.";
    const Tensor<double>* w = nullptr;
    const Tensor<double>* bias = nullptr;
    for (const auto& p : params) {
      if (p.name == prefix + "weight") w = &p.var->value();
      if (p.name == prefix + "bias") bias = &p.var->value();
    }
    REQUIRE(w != nullptr);
    REQUIRE(bias != nullptr);
    const auto out = gcm.branch(Var<double>(f5), b).value();
    for (std::size_t o = 0; o < 2; ++o) {
      double expect = (*bias)[o];
      for (std::size_t c = 0; c < 4; ++c) expect += (*w)[o * 4 + c] * vals[c];
      for (std::size_t i = 0; i < 49; ++i) CHECK(out[o * 49 + i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("gcm gradients") {
  check_module<Gcm>([](const Gcm<float>& m, const Var<float>& x) { return m.forward(x); },
                    [](const Gcm<double>& m, const Var<double>& x) { return m.forward(x); }, {1, 4, 8, 8}, 40,
                    std::size_t{4}, std::size_t{2});
}

TEST_CASE("se gate: zero weights give 0.5; range; permutation invariance") {
  nn::InitRng init(6);
  SeGate<double> se(8, 4, init);
  std::mt19937_64 rng(9);
  const auto x = random_tensor<double>({2, 8, 5, 5}, rng, -3, 3);
  for (const auto& p : se.parameters()) p.var->mutable_value().fill(0.0);
  const auto g0 = se.forward(Var<double>(x)).value();
  CHECK(g0.shape() == Shape{2, 8, 1, 1});
  for (double g : g0.span()) CHECK(g == 0.5);

  randomize(se, rng, 2.0);
  const auto g = se.forward(Var<double>(x)).value();
  for (double v : g.span()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  std::vector<std::size_t> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor<double> xp(x.shape());
  for (std::size_t nc = 0; nc < 16; ++nc)
    for (std::size_t i = 0; i < 25; ++i) xp[nc * 25 + i] = x[nc * 25 + perm[i]];
  const auto gp = se.forward(Var<double>(xp)).value();
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(gp[i] == doctest::Approx(g[i]).epsilon(1e-12));
}

TEST_CASE("asm: forced gates") {
  nn::InitRng init(7);
  Asm<double> asm_block(7, 5, 2, init);
  std::mt19937_64 rng(10);
  randomize(asm_block, rng);
  const Var<double> prev(random_tensor<double>({1, 2, 4, 4}, rng));
  const Var<double> lca(random_tensor<double>({1, 3, 4, 4}, rng));
  const Var<double> gcm(random_tensor<double>({1, 2, 4, 4}, rng));

  const auto y1 = asm_block.forward_with_gate(prev, lca, gcm, Var<double>(Tensor<double>({1, 7, 1, 1}, 1.0)));
  CHECK(y1.shape() == Shape{1, 5, 4, 4});
  // Gate 1 is a pure 1x1 projection of the concatenation.
  const auto params = asm_block.parameters();
  const Tensor<double>* w = nullptr;
  const Tensor<double>* b = nullptr;
  for (const auto& p : params) {
    if (p.name == "proj.weight") w = &p.var->value();
    if (p.name == "proj.bias") b = &p.var->value();
  }
  REQUIRE(w != nullptr);
  REQUIRE(b != nullptr);
  for (std::size_t o = 0; o < 5; ++o)
    for (std::size_t i = 0; i < 16; ++i) {
      double expect = (*b)[o];
      for (std::size_t c = 0; c < 7; ++c) {
        const double v = c < 2 ? prev.value()[c * 16 + i] : c < 5 ? lca.value()[(c - 2) * 16 + i] : gcm.value()[(c - 5) * 16 + i];
        expect += (*w)[o * 7 + c] * v;
      }
      CHECK(y1.value()[o * 16 + i] == doctest::Approx(expect).epsilon(1e-12));
    }

  Tensor<double> gate({1, 7, 1, 1}, 0.7);
  gate[5] = gate[6] = 0.0;
  const auto ya = asm_block.forward_with_gate(prev, lca, gcm, Var<double>(gate));
  const auto yb = asm_block.forward_with_gate(prev, lca, Var<double>(random_tensor<double>({1, 2, 4, 4}, rng, -9, 9)),
                                              Var<double>(gate));
  for (std::size_t i = 0; i < ya.value().numel(); ++i) CHECK(ya.value()[i] == yb.value()[i]);

  CHECK(asm_block.out_channels() == 5);
  CHECK_THROWS(asm_block.forward(prev, lca, Var<double>(random_tensor<double>({1, 2, 4, 5}, rng))));
  CHECK_THROWS(asm_block.forward(prev, lca, Var<double>(random_tensor<double>({1, 3, 4, 4}, rng))));
  CHECK_THROWS(asm_block.attend_prev(prev));
}

TEST_CASE("asm gradients (gate and fusion)") {
  std::mt19937_64 rng(11);
  nn::InitRng init(8), init2(8);
  Asm<float> af(6, 3, 2, init, 2);
  Asm<double> ad(6, 3, 2, init2, 2);
  randomize(af, rng);
  copy_state(af, ad);
  Var<float> p(random_tensor<float>({1, 2, 6, 6}, rng), true), l(random_tensor<float>({1, 2, 6, 6}, rng), true),
      g(random_tensor<float>({1, 2, 6, 6}, rng), true);
  Var<double> pd(to_double(p.value()), true), ld(to_double(l.value()), true), gd(to_double(g.value()), true);
  const auto proj = random_tensor<float>({1, 3, 6, 6}, rng);
  const auto projd = to_double(proj);
  auto lf = without_key_bias(leaves_of(af));
  auto ldv = without_key_bias(leaves_of(ad));
  lf.insert(lf.end(), {{"prev", &p}, {"lca", &l}, {"gcm", &g}});
  ldv.insert(ldv.end(), {{"prev", &pd}, {"lca", &ld}, {"gcm", &gd}});
  auto ff = [&] { return project(af.forward(af.attend_prev(p), l, g), proj); };
  auto fd = [&] { return project(ad.forward(ad.attend_prev(pd), ld, gd), projd); };
  const auto rf = check_gradients_twin<float, double>(ff, lf, fd, ldv, 40, 3, 1e-4, 1e-6);
  INFO(rf.worst);
  CHECK(rf.max_rel_error < kFloatTol);
  const auto rd = check_gradients<double>(fd, ldv, 40, 4, 1e-4, 1e-6);
  INFO(rd.worst);
  CHECK(rd.max_rel_error < kDoubleTol);
}

TEST_CASE("state export uses dotted names") {
  nn::InitRng init(9);
  Asm<float> a(6, 3, 2, init, 2);
  const auto archive = export_state(a, "asm1.");
  std::vector<std::string> names;
  for (const auto& e : archive.entries()) names.push_back(e.name);
  CHECK(std::find(names.begin(), names.end(), "asm1.se.fc1.weight") != names.end());
  CHECK(std::find(names.begin(), names.end(), "asm1.nl.theta.weight") != names.end());
  CHECK(std::find(names.begin(), names.end(), "asm1.proj.bias") != names.end());
}
