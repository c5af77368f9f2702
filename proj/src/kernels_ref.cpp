#include "acsseg/kernels_ref.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "kernels_detail.hpp"

namespace acsseg::kernels::ref {

template <typename T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum{0};
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a == Trans::No ? a[i * lda + p] : a[p * lda + i];
        const T bv = trans_b == Trans::No ? b[p * ldb + j] : b[j * ldb + p];
        sum += av * bv;
      }
      T& out = c[i * ldc + j];
      out = (beta == T{0} ? T{0} : beta * out) + alpha * sum;
    }
  }
}

namespace {

// Input coordinate feeding output (oy, ox) through kernel tap (ky, kx), or -1.
inline std::ptrdiff_t tap(std::size_t o, std::size_t kq, const ConvGeometry& g, std::size_t extent) {
  const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(o * g.stride + kq) - static_cast<std::ptrdiff_t>(g.pad);
  return (i < 0 || i >= static_cast<std::ptrdiff_t>(extent)) ? -1 : i;
}

}  // namespace

template <typename T>
void conv2d_forward(const T* x, const T* weight, const T* bias, std::size_t batch, const ConvGeometry& g,
                    T* y) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const std::size_t K = g.kernel;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T sum = bias != nullptr ? bias[oc] : T{0};
          for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::size_t ky = 0; ky < K; ++ky) {
              const auto iy = tap(oy, ky, g, g.in_h);
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < K; ++kx) {
                const auto ix = tap(ox, kx, g, g.in_w);
                if (ix < 0) continue;
                sum += weight[((oc * g.in_channels + ic) * K + ky) * K + kx] *
                       x[((n * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
          y[((n * g.out_channels + oc) * oh + oy) * ow + ox] = sum;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const T* x, const T* weight, const T* dy, std::size_t batch, const ConvGeometry& g,
                     T* dx, T* dweight, T* dbias) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const std::size_t K = g.kernel;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T grad = dy[((n * g.out_channels + oc) * oh + oy) * ow + ox];
          if (dbias != nullptr) dbias[oc] += grad;
          for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::size_t ky = 0; ky < K; ++ky) {
              const auto iy = tap(oy, ky, g, g.in_h);
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < K; ++kx) {
                const auto ix = tap(ox, kx, g, g.in_w);
                if (ix < 0) continue;
                const std::size_t wi = ((oc * g.in_channels + ic) * K + ky) * K + kx;
                const std::size_t xi = ((n * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix;
                if (dweight != nullptr) dweight[wi] += grad * x[xi];
                if (dx != nullptr) dx[xi] += grad * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

namespace {

template <typename T>
std::vector<T> full_affinity(const T* q, const T* k, const AttentionGeometry& g) {
  const std::size_t P = g.positions;
  std::vector<T> aff(P * P);
  for (std::size_t i = 0; i < P; ++i) {
    T peak = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < P; ++j) {
      T s{0};
      for (std::size_t c = 0; c < g.embed; ++c) s += q[c * P + i] * k[c * P + j];
      aff[i * P + j] = s;
      peak = std::max(peak, s);
    }
    T total{0};
    for (std::size_t j = 0; j < P; ++j) {
      aff[i * P + j] = std::exp(aff[i * P + j] - peak);
      total += aff[i * P + j];
    }
    for (std::size_t j = 0; j < P; ++j) aff[i * P + j] /= total;
  }
  return aff;
}

}  // namespace

template <typename T>
void attention_forward(const T* query, const T* key, const T* value, std::size_t batch,
                       const AttentionGeometry& g, T* out) {
  const std::size_t P = g.positions;
  for (std::size_t n = 0; n < batch; ++n) {
    const auto aff = full_affinity(query + n * g.embed * P, key + n * g.embed * P, g);
    const T* v = value + n * g.value_channels * P;
    T* o = out + n * g.value_channels * P;
    for (std::size_t c = 0; c < g.value_channels; ++c) {
      for (std::size_t i = 0; i < P; ++i) {
        T s{0};
        for (std::size_t j = 0; j < P; ++j) s += aff[i * P + j] * v[c * P + j];
        o[c * P + i] = s;
      }
    }
  }
}

template <typename T>
void attention_backward(const T* query, const T* key, const T* value, const T* dout, std::size_t batch,
                        const AttentionGeometry& g, T* dquery, T* dkey, T* dvalue) {
  const std::size_t P = g.positions;
  for (std::size_t n = 0; n < batch; ++n) {
    const T* q = query + n * g.embed * P;
    const T* k = key + n * g.embed * P;
    const T* v = value + n * g.value_channels * P;
    const T* dy = dout + n * g.value_channels * P;
    const auto aff = full_affinity(q, k, g);
    for (std::size_t i = 0; i < P; ++i) {
      std::vector<T> da(P, T{0});
      for (std::size_t j = 0; j < P; ++j) {
        for (std::size_t c = 0; c < g.value_channels; ++c) {
          da[j] += dy[c * P + i] * v[c * P + j];
          dvalue[(n * g.value_channels + c) * P + j] += aff[i * P + j] * dy[c * P + i];
        }
      }
      T dot{0};
      for (std::size_t j = 0; j < P; ++j) dot += aff[i * P + j] * da[j];
      for (std::size_t j = 0; j < P; ++j) {
        const T ds = aff[i * P + j] * (da[j] - dot);
        for (std::size_t c = 0; c < g.embed; ++c) {
          dquery[(n * g.embed + c) * P + i] += ds * k[c * P + j];
          dkey[(n * g.embed + c) * P + j] += ds * q[c * P + i];
        }
      }
    }
  }
}

template <typename T>
void bilinear_resize(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                     std::size_t out_w, T* y) {
  const auto ty = detail::linear_taps(in_h, out_h);
  const auto tx = detail::linear_taps(in_w, out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T* s = x + p * in_h * in_w;
        const T ly = static_cast<T>(ty[oy].frac);
        const T lx = static_cast<T>(tx[ox].frac);
        const T a = s[ty[oy].lo * in_w + tx[ox].lo];
        const T b = s[ty[oy].lo * in_w + tx[ox].hi];
        const T c = s[ty[oy].hi * in_w + tx[ox].lo];
        const T d = s[ty[oy].hi * in_w + tx[ox].hi];
        const T top = a + lx * (b - a);
        const T bot = c + lx * (d - c);
        y[(p * out_h + oy) * out_w + ox] = top + ly * (bot - top);
      }
    }
  }
}

template <typename T>
void bilinear_resize_backward(const T* dy, std::size_t planes, std::size_t in_h, std::size_t in_w,
                              std::size_t out_h, std::size_t out_w, T* dx) {
  const auto ty = detail::linear_taps(in_h, out_h);
  const auto tx = detail::linear_taps(in_w, out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const T g = dy[(p * out_h + oy) * out_w + ox];
        const T ly = static_cast<T>(ty[oy].frac);
        const T lx = static_cast<T>(tx[ox].frac);
        T* d = dx + p * in_h * in_w;
        d[ty[oy].lo * in_w + tx[ox].lo] += (1 - lx) * (1 - ly) * g;
        d[ty[oy].lo * in_w + tx[ox].hi] += lx * (1 - ly) * g;
        d[ty[oy].hi * in_w + tx[ox].lo] += (1 - lx) * ly * g;
        d[ty[oy].hi * in_w + tx[ox].hi] += lx * ly * g;
      }
    }
  }
}

template <typename T>
void adaptive_avg_pool(const T* x, std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                       std::size_t out_w, T* y) {
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t y0 = detail::pool_start(oy, in_h, out_h), y1 = detail::pool_end(oy, in_h, out_h);
        const std::size_t x0 = detail::pool_start(ox, in_w, out_w), x1 = detail::pool_end(ox, in_w, out_w);
        T sum{0};
        for (std::size_t iy = y0; iy < y1; ++iy)
          for (std::size_t ix = x0; ix < x1; ++ix) sum += x[(p * in_h + iy) * in_w + ix];
        y[(p * out_h + oy) * out_w + ox] = sum / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
}

#define ACSSEG_INSTANTIATE_REF(T)                                                                            \
  template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t,       \
                        const T*, std::size_t, T, T*, std::size_t);                                          \
  template void conv2d_forward<T>(const T*, const T*, const T*, std::size_t, const ConvGeometry&, T*);       \
  template void conv2d_backward<T>(const T*, const T*, const T*, std::size_t, const ConvGeometry&, T*, T*,  \
                                   T*);                                                                      \
  template void attention_forward<T>(const T*, const T*, const T*, std::size_t, const AttentionGeometry&,   \
                                     T*);                                                                    \
  template void attention_backward<T>(const T*, const T*, const T*, const T*, std::size_t,                  \
                                      const AttentionGeometry&, T*, T*, T*);                                 \
  template void bilinear_resize<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t,            \
                                   std::size_t, T*);                                                         \
  template void bilinear_resize_backward<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t,   \
                                            std::size_t, T*);                                                \
  template void adaptive_avg_pool<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t,          \
                                     std::size_t, T*);

ACSSEG_INSTANTIATE_REF(float)
ACSSEG_INSTANTIATE_REF(double)
ACSSEG_INSTANTIATE_REF(long double)

#undef ACSSEG_INSTANTIATE_REF

}  // namespace acsseg::kernels::ref
