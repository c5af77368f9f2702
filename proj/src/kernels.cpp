#include "acsseg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "kernels_detail.hpp"

namespace acsseg::kernels {
namespace {

// Register tile of the GEMM micro-kernel: MR rows of op(A) times NR columns
// of op(B). NR spans two 512-bit vectors for either precision.
template <typename T>
struct Tile;
template <>
struct Tile<float> {
  static constexpr std::size_t mr = 8;
  static constexpr std::size_t nr = 32;
};
template <>
struct Tile<double> {
  static constexpr std::size_t mr = 8;
  static constexpr std::size_t nr = 16;
};
template <>
struct Tile<long double> {
  static constexpr std::size_t mr = 4;
  static constexpr std::size_t nr = 4;
};

constexpr std::size_t kDepthBlock = 256;
constexpr std::size_t kColBlock = 2048;
constexpr std::size_t kQueryBlock = 128;

template <typename T>
inline T load_op(Trans trans, const T* m, std::size_t ld, std::size_t row, std::size_t col) {
  return trans == Trans::No ? m[row * ld + col] : m[col * ld + row];
}

// Packs op(A)[0:m, p0:p0+kc] into MR-row panels, zero padded.
template <typename T>
void pack_a(Trans trans, const T* a, std::size_t lda, std::size_t m, std::size_t p0, std::size_t kc,
            T* out) {
  constexpr std::size_t mr = Tile<T>::mr;
  const std::size_t panels = (m + mr - 1) / mr;
#pragma omp parallel for schedule(static)
  for (std::size_t panel = 0; panel < panels; ++panel) {
    T* dst = out + panel * kc * mr;
    const std::size_t i0 = panel * mr;
    const std::size_t rows = std::min(mr, m - i0);
    for (std::size_t p = 0; p < kc; ++p) {
      std::size_t i = 0;
      for (; i < rows; ++i) dst[p * mr + i] = load_op(trans, a, lda, i0 + i, p0 + p);
      for (; i < mr; ++i) dst[p * mr + i] = T{0};
    }
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into NR-column panels, zero padded.
template <typename T>
void pack_b(Trans trans, const T* b, std::size_t ldb, std::size_t p0, std::size_t kc, std::size_t j0,
            std::size_t nc, T* out) {
  constexpr std::size_t nr = Tile<T>::nr;
  const std::size_t panels = (nc + nr - 1) / nr;
#pragma omp parallel for schedule(static)
  for (std::size_t panel = 0; panel < panels; ++panel) {
    T* dst = out + panel * kc * nr;
    const std::size_t jj = panel * nr;
    const std::size_t cols = std::min(nr, nc - jj);
    for (std::size_t p = 0; p < kc; ++p) {
      T* row = dst + p * nr;
      if (trans == Trans::No) {
        const T* src = b + (p0 + p) * ldb + j0 + jj;
        std::size_t j = 0;
        for (; j < cols; ++j) row[j] = src[j];
        for (; j < nr; ++j) row[j] = T{0};
      } else {
        std::size_t j = 0;
        for (; j < cols; ++j) row[j] = b[(j0 + jj + j) * ldb + p0 + p];
        for (; j < nr; ++j) row[j] = T{0};
      }
    }
  }
}

template <typename T>
inline void micro_kernel(std::size_t kc, const T* __restrict ap, const T* __restrict bp, T alpha,
                         T* __restrict c, std::size_t ldc, std::size_t rows, std::size_t cols) {
  constexpr std::size_t mr = Tile<T>::mr;
  constexpr std::size_t nr = Tile<T>::nr;
  T acc[mr][nr] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const T* arow = ap + p * mr;
    const T* brow = bp + p * nr;
#pragma GCC unroll 8
    for (std::size_t i = 0; i < mr; ++i) {
      const T av = arow[i];
#pragma GCC ivdep
      for (std::size_t j = 0; j < nr; ++j) acc[i][j] += av * brow[j];
    }
  }
  if (rows == mr && cols == nr) {
    for (std::size_t i = 0; i < mr; ++i)
      for (std::size_t j = 0; j < nr; ++j) c[i * ldc + j] += alpha * acc[i][j];
  } else {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) c[i * ldc + j] += alpha * acc[i][j];
  }
}

}  // namespace

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (beta != T{1}) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
      T* row = c + i * ldc;
      if (beta == T{0}) {
        std::fill(row, row + n, T{0});
      } else {
        for (std::size_t j = 0; j < n; ++j) row[j] *= beta;
      }
    }
  }
  if (k == 0 || alpha == T{0}) return;

  constexpr std::size_t mr = Tile<T>::mr;
  constexpr std::size_t nr = Tile<T>::nr;
  const std::size_t a_panels = (m + mr - 1) / mr;
  std::vector<T> packed_a(a_panels * mr * std::min(k, kDepthBlock));
  std::vector<T> packed_b(((std::min(n, kColBlock) + nr - 1) / nr) * nr * std::min(k, kDepthBlock));

  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const std::size_t kc = std::min(kDepthBlock, k - p0);
    pack_a(trans_a, a, lda, m, p0, kc, packed_a.data());
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
      const std::size_t nc = std::min(kColBlock, n - j0);
      pack_b(trans_b, b, ldb, p0, kc, j0, nc, packed_b.data());
      const std::size_t b_panels = (nc + nr - 1) / nr;
      const std::size_t tiles = a_panels * b_panels;
#pragma omp parallel for schedule(static)
      for (std::size_t t = 0; t < tiles; ++t) {
        const std::size_t jp = t / a_panels;
        const std::size_t ip = t % a_panels;
        const std::size_t i0 = ip * mr;
        const std::size_t jj = jp * nr;
        micro_kernel(kc, packed_a.data() + ip * kc * mr, packed_b.data() + jp * kc * nr, alpha,
                     c + i0 * ldc + j0 + jj, ldc, std::min(mr, m - i0), std::min(nr, nc - jj));
      }
    }
  }
}

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const std::size_t rows = g.col_rows();
  const std::size_t kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = r / kk;
    const std::size_t ki = (r % kk) / g.kernel;
    const std::size_t kj = r % g.kernel;
    const T* plane = image + c * g.in_h * g.in_w;
    T* dst = col + r * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
      T* out = dst + y * ow;
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
        std::fill(out, out + ow, T{0});
        continue;
      }
      const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
      for (std::size_t x = 0; x < ow; ++x) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
        out[x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) ? T{0} : src[ix];
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* image) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const std::size_t kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = image + c * g.in_h * g.in_w;
    for (std::size_t q = 0; q < kk; ++q) {
      const std::size_t ki = q / g.kernel;
      const std::size_t kj = q % g.kernel;
      const T* src = col + (c * kk + q) * oh * ow;
      for (std::size_t y = 0; y < oh; ++y) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
        for (std::size_t x = 0; x < ow; ++x) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
          if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) dst[ix] += src[y * ow + x];
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const T* x, const T* weight, const T* bias, std::size_t batch, const ConvGeometry& g,
                    T* y) {
  const std::size_t positions = g.out_h() * g.out_w();
  const std::size_t rows = g.col_rows();
  std::vector<T> col(g.is_pointwise() ? 0 : rows * positions);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* xn = x + n * g.in_channels * g.in_h * g.in_w;
    T* yn = y + n * g.out_channels * positions;
    const T* cols = xn;
    if (!g.is_pointwise()) {
      im2col(xn, g, col.data());
      cols = col.data();
    }
    gemm(Trans::No, Trans::No, g.out_channels, positions, rows, T{1}, weight, rows, cols, positions, T{0}, yn,
         positions);
    if (bias != nullptr) {
#pragma omp parallel for schedule(static)
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        T* plane = yn + oc * positions;
        for (std::size_t p = 0; p < positions; ++p) plane[p] += bias[oc];
      }
    }
  }
}

template <typename T>
void conv2d_backward(const T* x, const T* weight, const T* dy, std::size_t batch, const ConvGeometry& g,
                     T* dx, T* dweight, T* dbias) {
  const std::size_t positions = g.out_h() * g.out_w();
  const std::size_t rows = g.col_rows();
  const std::size_t in_size = g.in_channels * g.in_h * g.in_w;
  if (dbias != nullptr) {
#pragma omp parallel for schedule(static)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      T sum{0};
      for (std::size_t n = 0; n < batch; ++n) {
        const T* plane = dy + (n * g.out_channels + oc) * positions;
        for (std::size_t p = 0; p < positions; ++p) sum += plane[p];
      }
      dbias[oc] += sum;
    }
  }
  std::vector<T> col(g.is_pointwise() ? 0 : rows * positions);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* dyn = dy + n * g.out_channels * positions;
    if (dweight != nullptr) {
      const T* cols = x + n * in_size;
      if (!g.is_pointwise()) {
        im2col(x + n * in_size, g, col.data());
        cols = col.data();
      }
      gemm(Trans::No, Trans::Yes, g.out_channels, rows, positions, T{1}, dyn, positions, cols, positions, T{1},
           dweight, rows);
    }
    if (dx != nullptr) {
      if (g.is_pointwise()) {
        gemm(Trans::Yes, Trans::No, rows, positions, g.out_channels, T{1}, weight, rows, dyn, positions, T{1},
             dx + n * in_size, positions);
      } else {
        gemm(Trans::Yes, Trans::No, rows, positions, g.out_channels, T{1}, weight, rows, dyn, positions, T{0},
             col.data(), positions);
        col2im(col.data(), g, dx + n * in_size);
      }
    }
  }
}

namespace {

template <typename T>
void softmax_rows(T* scores, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = scores + r * cols;
    const T peak = *std::max_element(row, row + cols);
    T total{0};
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - peak);
      total += row[j];
    }
    const T inv = T{1} / total;
    for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
  }
}

}  // namespace

template <typename T>
void attention_forward(const T* query, const T* key, const T* value, std::size_t batch,
                       const AttentionGeometry& g, T* out) {
  const std::size_t P = g.positions;
  std::vector<T> scores(std::min(P, kQueryBlock) * P);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* q = query + n * g.embed * P;
    const T* k = key + n * g.embed * P;
    const T* v = value + n * g.value_channels * P;
    T* o = out + n * g.value_channels * P;
    for (std::size_t i0 = 0; i0 < P; i0 += kQueryBlock) {
      const std::size_t rows = std::min(kQueryBlock, P - i0);
      gemm(Trans::Yes, Trans::No, rows, P, g.embed, T{1}, q + i0, P, k, P, T{0}, scores.data(), P);
      softmax_rows(scores.data(), rows, P);
      gemm(Trans::No, Trans::Yes, g.value_channels, rows, P, T{1}, v, P, scores.data(), P, T{0}, o + i0, P);
    }
  }
}

template <typename T>
void attention_backward(const T* query, const T* key, const T* value, const T* dout, std::size_t batch,
                        const AttentionGeometry& g, T* dquery, T* dkey, T* dvalue) {
  const std::size_t P = g.positions;
  const std::size_t block = std::min(P, kQueryBlock);
  std::vector<T> probs(block * P);
  std::vector<T> dprobs(block * P);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* q = query + n * g.embed * P;
    const T* k = key + n * g.embed * P;
    const T* v = value + n * g.value_channels * P;
    const T* dy = dout + n * g.value_channels * P;
    T* dq = dquery + n * g.embed * P;
    T* dk = dkey + n * g.embed * P;
    T* dv = dvalue + n * g.value_channels * P;
    for (std::size_t i0 = 0; i0 < P; i0 += kQueryBlock) {
      const std::size_t rows = std::min(kQueryBlock, P - i0);
      gemm(Trans::Yes, Trans::No, rows, P, g.embed, T{1}, q + i0, P, k, P, T{0}, probs.data(), P);
      softmax_rows(probs.data(), rows, P);
      gemm(Trans::Yes, Trans::No, rows, P, g.value_channels, T{1}, dy + i0, P, v, P, T{0}, dprobs.data(), P);
      gemm(Trans::No, Trans::No, g.value_channels, P, rows, T{1}, dy + i0, P, probs.data(), P, T{1}, dv, P);
#pragma omp parallel for schedule(static)
      for (std::size_t r = 0; r < rows; ++r) {
        const T* a = probs.data() + r * P;
        T* d = dprobs.data() + r * P;
        T dot{0};
        for (std::size_t j = 0; j < P; ++j) dot += a[j] * d[j];
        for (std::size_t j = 0; j < P; ++j) d[j] = a[j] * (d[j] - dot);
      }
      gemm(Trans::No, Trans::Yes, g.embed, rows, P, T{1}, k, P, dprobs.data(), P, T{1}, dq + i0, P);
      gemm(Trans::No, Trans::No, g.embed, P, rows, T{1}, q + i0, P, dprobs.data(), P, T{1}, dk, P);
    }
  }
}

template <typename T>
void attention_affinity(const T* query, const T* key, const AttentionGeometry& g, T* affinity) {
  const std::size_t P = g.positions;
  gemm(Trans::Yes, Trans::No, P, P, g.embed, T{1}, query, P, key, P, T{0}, affinity, P);
  softmax_rows(affinity, P, P);
}

template <typename T>
void bilinear_resize(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                     std::size_t out_w, T* y) {
  const auto ty = detail::linear_taps(in_h, out_h);
  const auto tx = detail::linear_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * in_h * in_w;
    T* dst = y + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T* r0 = src + ty[oy].lo * in_w;
      const T* r1 = src + ty[oy].hi * in_w;
      const T ly = static_cast<T>(ty[oy].frac);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T lx = static_cast<T>(tx[ox].frac);
        const T top = r0[tx[ox].lo] + lx * (r0[tx[ox].hi] - r0[tx[ox].lo]);
        const T bot = r1[tx[ox].lo] + lx * (r1[tx[ox].hi] - r1[tx[ox].lo]);
        dst[oy * out_w + ox] = top + ly * (bot - top);
      }
    }
  }
}

template <typename T>
void bilinear_resize_backward(const T* dy, std::size_t planes, std::size_t in_h, std::size_t in_w,
                              std::size_t out_h, std::size_t out_w, T* dx) {
  const auto ty = detail::linear_taps(in_h, out_h);
  const auto tx = detail::linear_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = dy + p * out_h * out_w;
    T* dst = dx + p * in_h * in_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T ly = static_cast<T>(ty[oy].frac);
      T* r0 = dst + ty[oy].lo * in_w;
      T* r1 = dst + ty[oy].hi * in_w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T lx = static_cast<T>(tx[ox].frac);
        const T g = src[oy * out_w + ox];
        r0[tx[ox].lo] += (T{1} - lx) * (T{1} - ly) * g;
        r0[tx[ox].hi] += lx * (T{1} - ly) * g;
        r1[tx[ox].lo] += (T{1} - lx) * ly * g;
        r1[tx[ox].hi] += lx * ly * g;
      }
    }
  }
}

template <typename T>
void adaptive_avg_pool(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                       std::size_t out_w, T* y) {
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * in_h * in_w;
    T* dst = y + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t y0 = detail::pool_start(oy, in_h, out_h);
      const std::size_t y1 = detail::pool_end(oy, in_h, out_h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t x0 = detail::pool_start(ox, in_w, out_w);
        const std::size_t x1 = detail::pool_end(ox, in_w, out_w);
        T sum{0};
        for (std::size_t iy = y0; iy < y1; ++iy)
          for (std::size_t ix = x0; ix < x1; ++ix) sum += src[iy * in_w + ix];
        dst[oy * out_w + ox] = sum / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
}

template <typename T>
void adaptive_avg_pool_backward(const T* dy, std::size_t planes, std::size_t in_h, std::size_t in_w,
                                std::size_t out_h, std::size_t out_w, T* dx) {
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = dy + p * out_h * out_w;
    T* dst = dx + p * in_h * in_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t y0 = detail::pool_start(oy, in_h, out_h);
      const std::size_t y1 = detail::pool_end(oy, in_h, out_h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t x0 = detail::pool_start(ox, in_w, out_w);
        const std::size_t x1 = detail::pool_end(ox, in_w, out_w);
        const T share = src[oy * out_w + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
        for (std::size_t iy = y0; iy < y1; ++iy)
          for (std::size_t ix = x0; ix < x1; ++ix) dst[iy * in_w + ix] += share;
      }
    }
  }
}

template <typename T>
void max_pool(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t kernel,
              std::size_t stride, std::size_t pad, T* y, std::size_t* argmax) {
  const std::size_t out_h = (in_h + 2 * pad - kernel) / stride + 1;
  const std::size_t out_w = (in_w + 2 * pad - kernel) / stride + 1;
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x + p * in_h * in_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
            const std::size_t idx = static_cast<std::size_t>(iy) * in_w + static_cast<std::size_t>(ix);
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (p * out_h + oy) * out_w + ox;
        y[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
}

template <typename T>
void max_pool_backward(const T* dy, const std::size_t* argmax, std::size_t planes, std::size_t in_h,
                       std::size_t in_w, std::size_t out_h, std::size_t out_w, T* dx) {
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    T* dst = dx + p * in_h * in_w;
    for (std::size_t o = 0; o < out_h * out_w; ++o) {
      const std::size_t flat = p * out_h * out_w + o;
      dst[argmax[flat]] += dy[flat];
    }
  }
}

#define ACSSEG_INSTANTIATE_KERNELS(T)                                                                       \
  template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t,      \
                        const T*, std::size_t, T, T*, std::size_t);                                         \
  template void im2col<T>(const T*, const ConvGeometry&, T*);                                               \
  template void col2im<T>(const T*, const ConvGeometry&, T*);                                               \
  template void conv2d_forward<T>(const T*, const T*, const T*, std::size_t, const ConvGeometry&, T*);      \
  template void conv2d_backward<T>(const T*, const T*, const T*, std::size_t, const ConvGeometry&, T*, T*, \
                                   T*);                                                                     \
  template void attention_forward<T>(const T*, const T*, const T*, std::size_t, const AttentionGeometry&,  \
                                     T*);                                                                   \
  template void attention_backward<T>(const T*, const T*, const T*, const T*, std::size_t,                 \
                                      const AttentionGeometry&, T*, T*, T*);                                \
  template void attention_affinity<T>(const T*, const T*, const AttentionGeometry&, T*);                   \
  template void bilinear_resize<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t,           \
                                   std::size_t, T*);                                                        \
  template void bilinear_resize_backward<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t,  \
                                            std::size_t, T*);                                               \
  template void adaptive_avg_pool<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t,         \
                                     std::size_t, T*);                                                      \
  template void adaptive_avg_pool_backward<T>(const T*, std::size_t, std::size_t, std::size_t,             \
                                              std::size_t, std::size_t, T*);                                \
  template void max_pool<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,     \
                            std::size_t, T*, std::size_t*);                                                 \
  template void max_pool_backward<T>(const T*, const std::size_t*, std::size_t, std::size_t, std::size_t,  \
                                     std::size_t, std::size_t, T*);

ACSSEG_INSTANTIATE_KERNELS(float)
ACSSEG_INSTANTIATE_KERNELS(double)
ACSSEG_INSTANTIATE_KERNELS(long double)

#undef ACSSEG_INSTANTIATE_KERNELS

}  // namespace acsseg::kernels
