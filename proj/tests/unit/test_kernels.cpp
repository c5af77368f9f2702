#include <doctest.h>
#include <omp.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "acsseg/kernels.hpp"
#include "acsseg/kernels_ref.hpp"

using namespace acsseg::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("gemm matches the reference for every transpose combination and odd sizes") {
  std::mt19937_64 rng(1);
  for (auto ta : {Trans::No, Trans::Yes}) {
    for (auto tb : {Trans::No, Trans::Yes}) {
      for (auto [m, n, k] : std::vector<std::array<std::size_t, 3>>{{1, 1, 1}, {7, 33, 5}, {17, 70, 300}, {64, 9, 513}}) {
        const auto a = random_vec(m * k, rng);
        const auto b = random_vec(k * n, rng);
        auto c = random_vec(m * n, rng);
        auto c_ref = c;
        const std::size_t lda = ta == Trans::No ? k : m;
        const std::size_t ldb = tb == Trans::No ? n : k;
        gemm(ta, tb, m, n, k, 0.75, a.data(), lda, b.data(), ldb, 0.5, c.data(), n);
        ref::gemm(ta, tb, m, n, k, 0.75, a.data(), lda, b.data(), ldb, 0.5, c_ref.data(), n);
        CHECK(max_abs_diff(c, c_ref) < 1e-12);
      }
    }
  }
}

TEST_CASE("gemm with beta zero ignores garbage in C") {
  std::mt19937_64 rng(2);
  const auto a = random_vec(12, rng);
  const auto b = random_vec(12, rng);
  std::vector<double> c(9, std::nan(""));
  std::vector<double> c_ref(9, 0.0);
  gemm(Trans::No, Trans::No, 3, 3, 4, 1.0, a.data(), 4, b.data(), 3, 0.0, c.data(), 3);
  ref::gemm(Trans::No, Trans::No, 3, 3, 4, 1.0, a.data(), 4, b.data(), 3, 0.0, c_ref.data(), 3);
  CHECK(max_abs_diff(c, c_ref) < 1e-14);
}

TEST_CASE("convolution forward and backward match the direct reference") {
  std::mt19937_64 rng(3);
  const std::vector<ConvGeometry> geoms = {
      {3, 8, 9, 11, 3, 1, 1}, {4, 5, 16, 16, 3, 2, 1}, {3, 6, 14, 14, 7, 2, 3}, {6, 4, 5, 7, 1, 1, 0}, {5, 3, 8, 8, 1, 2, 0}};
  for (const auto& g : geoms) {
    const std::size_t batch = 2;
    const auto x = random_vec(batch * g.in_channels * g.in_h * g.in_w, rng);
    const auto w = random_vec(g.out_channels * g.col_rows(), rng);
    const auto bias = random_vec(g.out_channels, rng);
    const std::size_t ysize = batch * g.out_channels * g.out_h() * g.out_w();
    std::vector<double> y(ysize), y_ref(ysize);
    conv2d_forward(x.data(), w.data(), bias.data(), batch, g, y.data());
    ref::conv2d_forward(x.data(), w.data(), bias.data(), batch, g, y_ref.data());
    CHECK(max_abs_diff(y, y_ref) < 1e-12);

    const auto dy = random_vec(ysize, rng);
    std::vector<double> dx(x.size(), 0.5), dw(w.size(), 0.25), db(bias.size(), 1.0);
    auto dx_ref = dx, dw_ref = dw, db_ref = db;
    conv2d_backward(x.data(), w.data(), dy.data(), batch, g, dx.data(), dw.data(), db.data());
    ref::conv2d_backward(x.data(), w.data(), dy.data(), batch, g, dx_ref.data(), dw_ref.data(), db_ref.data());
    CHECK(max_abs_diff(dx, dx_ref) < 1e-12);
    CHECK(max_abs_diff(dw, dw_ref) < 1e-12);
    CHECK(max_abs_diff(db, db_ref) < 1e-12);
  }
}

TEST_CASE("im2col followed by col2im multiplies each pixel by its patch coverage") {
  const ConvGeometry g{1, 1, 4, 4, 3, 1, 1};
  std::vector<double> img(16, 1.0), col(g.col_rows() * g.out_h() * g.out_w()), back(16, 0.0);
  im2col(img.data(), g, col.data());
  col2im(col.data(), g, back.data());
  // Corner pixels are covered by 4 windows, edges by 6, interior by 9.
  CHECK(back[0] == 4.0);
  CHECK(back[1] == 6.0);
  CHECK(back[5] == 9.0);
}

TEST_CASE("blocked attention matches the full-affinity reference") {
  std::mt19937_64 rng(4);
  for (std::size_t positions : {5u, 128u, 300u}) {
    const AttentionGeometry g{3, 4, positions};
    const std::size_t batch = 2;
    const auto q = random_vec(batch * g.embed * positions, rng);
    const auto k = random_vec(batch * g.embed * positions, rng);
    const auto v = random_vec(batch * g.value_channels * positions, rng);
    std::vector<double> out(v.size()), out_ref(v.size());
    attention_forward(q.data(), k.data(), v.data(), batch, g, out.data());
    ref::attention_forward(q.data(), k.data(), v.data(), batch, g, out_ref.data());
    CHECK(max_abs_diff(out, out_ref) < 1e-12);

    const auto dout = random_vec(v.size(), rng);
    std::vector<double> dq(q.size(), 0.0), dk(k.size(), 0.0), dv(v.size(), 0.0);
    auto dq_ref = dq, dk_ref = dk, dv_ref = dv;
    attention_backward(q.data(), k.data(), v.data(), dout.data(), batch, g, dq.data(), dk.data(), dv.data());
    ref::attention_backward(q.data(), k.data(), v.data(), dout.data(), batch, g, dq_ref.data(), dk_ref.data(),
                            dv_ref.data());
    CHECK(max_abs_diff(dq, dq_ref) < 1e-11);
    CHECK(max_abs_diff(dk, dk_ref) < 1e-11);
    CHECK(max_abs_diff(dv, dv_ref) < 1e-11);
  }
}

TEST_CASE("attention affinity rows are a probability distribution") {
  std::mt19937_64 rng(5);
  const AttentionGeometry g{4, 4, 37};
  const auto q = random_vec(g.embed * g.positions, rng);
  const auto k = random_vec(g.embed * g.positions, rng);
  std::vector<double> aff(g.positions * g.positions);
  attention_affinity(q.data(), k.data(), g, aff.data());
  for (std::size_t i = 0; i < g.positions; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.positions; ++j) {
      CHECK(aff[i * g.positions + j] > 0.0);
      s += aff[i * g.positions + j];
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("bilinear resize and its adjoint match the reference") {
  std::mt19937_64 rng(6);
  for (auto [ih, iw, oh, ow] : std::vector<std::array<std::size_t, 4>>{{3, 3, 7, 9}, {12, 16, 6, 8}, {5, 5, 5, 5}, {1, 1, 4, 4}, {9, 12, 288, 384}}) {
    const auto x = random_vec(2 * ih * iw, rng);
    std::vector<double> y(2 * oh * ow), y_ref(2 * oh * ow);
    bilinear_resize(x.data(), 2, ih, iw, oh, ow, y.data());
    ref::bilinear_resize(x.data(), 2, ih, iw, oh, ow, y_ref.data());
    CHECK(max_abs_diff(y, y_ref) < 1e-14);

    const auto dy = random_vec(y.size(), rng);
    std::vector<double> dx(x.size(), 0.0), dx_ref(x.size(), 0.0);
    bilinear_resize_backward(dy.data(), 2, ih, iw, oh, ow, dx.data());
    ref::bilinear_resize_backward(dy.data(), 2, ih, iw, oh, ow, dx_ref.data());
    CHECK(max_abs_diff(dx, dx_ref) < 1e-12);

    // Adjoint identity <R x, dy> = <x, R^T dy>.
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * dy[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * dx[i];
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
}

TEST_CASE("bilinear resize to the same size is the identity and preserves constants exactly") {
  std::mt19937_64 rng(7);
  const auto x = random_vec(30, rng);
  std::vector<double> y(30);
  bilinear_resize(x.data(), 1, 5, 6, 5, 6, y.data());
  CHECK(y == x);
  const std::vector<double> c(6, 0.3);
  std::vector<double> up(2 * 77);
  bilinear_resize(c.data(), 2, 1, 3, 7, 11, up.data());
  for (double v : up) CHECK(v == 0.3);
}

TEST_CASE("adaptive average pooling matches the reference and the window rule") {
  std::mt19937_64 rng(8);
  for (auto [ih, iw, oh, ow] : std::vector<std::array<std::size_t, 4>>{{9, 12, 3, 3}, {3, 3, 5, 5}, {2, 2, 5, 5}, {7, 5, 1, 1}}) {
    const auto x = random_vec(ih * iw, rng);
    std::vector<double> y(oh * ow), y_ref(oh * ow);
    adaptive_avg_pool(x.data(), 1, ih, iw, oh, ow, y.data());
    ref::adaptive_avg_pool(x.data(), 1, ih, iw, oh, ow, y_ref.data());
    CHECK(max_abs_diff(y, y_ref) < 1e-14);
  }
  // 1x1 output is the plain mean.
  const std::vector<double> x = {1, 2, 3, 4, 5, 6};
  double y = 0.0;
  adaptive_avg_pool(x.data(), 1, 2, 3, 1, 1, &y);
  CHECK(y == doctest::Approx(3.5));
}

TEST_CASE("max pooling selects window maxima and routes gradients to them") {
  const std::vector<double> x = {1, 5, 2, 0, 3, 4, 9, 8, 7};  // 3x3
  std::vector<double> y(4);
  std::vector<std::size_t> arg(4);
  max_pool(x.data(), 1, 3, 3, 3, 2, 1, y.data(), arg.data());
  CHECK(y == std::vector<double>{5, 5, 9, 8});
  std::vector<double> dx(9, 0.0);
  const std::vector<double> dy = {1, 2, 3, 4};
  max_pool_backward(dy.data(), arg.data(), 1, 3, 3, 2, 2, dx.data());
  CHECK(dx == std::vector<double>{0, 3, 0, 0, 0, 0, 3, 4, 0});
}

TEST_CASE("parallel kernels are bitwise deterministic across thread counts") {
  std::mt19937_64 rng(9);
  const ConvGeometry g{8, 16, 24, 24, 3, 1, 1};
  const auto x = random_vec(2 * 8 * 24 * 24, rng);
  const auto w = random_vec(16 * g.col_rows(), rng);
  const auto dy = random_vec(2 * 16 * 24 * 24, rng);
  const AttentionGeometry ag{8, 8, 576};
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    std::vector<double> y(dy.size()), dx(x.size(), 0.0), dw(w.size(), 0.0), att(8 * 576), datt_q(8 * 576, 0.0),
        datt_k(8 * 576, 0.0), datt_v(8 * 576, 0.0);
    conv2d_forward(x.data(), w.data(), static_cast<const double*>(nullptr), 2, g, y.data());
    conv2d_backward(x.data(), w.data(), dy.data(), 2, g, dx.data(), dw.data(), static_cast<double*>(nullptr));
    attention_forward(x.data(), x.data() + 4608, x.data() + 2 * 4608, 1, ag, att.data());
    attention_backward(x.data(), x.data() + 4608, x.data() + 2 * 4608, dy.data(), 1, ag, datt_q.data(),
                       datt_k.data(), datt_v.data());
    return std::vector<std::vector<double>>{y, dx, dw, att, datt_q, datt_k, datt_v};
  };
  const auto one = run(1);
  const auto four = run(4);
  omp_set_num_threads(omp_get_num_procs());
  CHECK(one == four);
}
