#include "acsseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "acsseg/kernels.hpp"

namespace acsseg::ops {
namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

// Reductions accumulate in at least double precision.
template <typename T>
using acc_t = std::common_type_t<T, double>;

template <typename T>
T stable_sigmoid(T z) {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride, std::size_t pad) {
  const Dims4 in = x.value().dims4();
  const Shape& ws = weight.shape();
  require(ws.size() == 4 && ws[2] == ws[3], "conv2d: weight must be [out, in, k, k]");
  require(ws[1] == in.c, "conv2d: input has " + std::to_string(in.c) + " channels, weight expects " +
                             std::to_string(ws[1]));
  require(in.h + 2 * pad >= ws[2] && in.w + 2 * pad >= ws[3], "conv2d: kernel larger than padded input");
  kernels::ConvGeometry g{in.c, ws[0], in.h, in.w, ws[2], stride, pad};
  Tensor<T> out({in.n, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(x.value().data(), weight.value().data(),
                          bias.defined() ? bias.value().data() : nullptr, in.n, g, out.data());
  return Var<T>::make(std::move(out), {x, weight, bias}, [g, n = in.n](Node<T>& self) {
    const auto& xn = self.parents[0];
    const auto& wn = self.parents[1];
    T* dx = self.parent_needs_grad(0) ? xn->grad_buffer().data() : nullptr;
    T* dw = self.parent_needs_grad(1) ? wn->grad_buffer().data() : nullptr;
    T* db = self.parent_needs_grad(2) ? self.parents[2]->grad_buffer().data() : nullptr;
    kernels::conv2d_backward(xn->value.data(), wn->value.data(), self.grad.data(), n, g, dx, dw, db);
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps) {
  const Dims4 d = x.value().dims4();
  require(gamma.value().numel() == d.c && beta.value().numel() == d.c, "batch_norm: affine size mismatch");
  using A = acc_t<T>;
  const std::size_t count = d.n * d.plane();
  std::vector<T> mean(d.c), inv_std(d.c);
  const T* xv = x.value().data();
  if (training) {
    require(count > 0, "batch_norm: empty batch");
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < d.c; ++c) {
      A sum = A{0};
      for (std::size_t n = 0; n < d.n; ++n) {
        const T* p = xv + (n * d.c + c) * d.plane();
        for (std::size_t i = 0; i < d.plane(); ++i) sum += p[i];
      }
      const A mu = sum / static_cast<A>(count);
      A sq = A{0};
      for (std::size_t n = 0; n < d.n; ++n) {
        const T* p = xv + (n * d.c + c) * d.plane();
        for (std::size_t i = 0; i < d.plane(); ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const A var = sq / static_cast<A>(count);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(A{1} / std::sqrt(var + static_cast<A>(eps)));
      const A unbiased = count > 1 ? var * static_cast<A>(count) / static_cast<A>(count - 1) : var;
      running_mean[c] = (T{1} - momentum) * running_mean[c] + momentum * static_cast<T>(mu);
      running_var[c] = (T{1} - momentum) * running_var[c] + momentum * static_cast<T>(unbiased);
    }
  } else {
    for (std::size_t c = 0; c < d.c; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = T{1} / std::sqrt(running_var[c] + eps);
    }
  }
  Tensor<T> out(d.shape());
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* p = xv + (n * d.c + c) * d.plane();
      T* o = out.data() + (n * d.c + c) * d.plane();
      const T scale = gv[c] * inv_std[c];
      const T shift = bv[c] - mean[c] * scale;
      for (std::size_t i = 0; i < d.plane(); ++i) o[i] = p[i] * scale + shift;
    }
  }
  return Var<T>::make(std::move(out), {x, gamma, beta}, [d, mean, inv_std, training](Node<T>& self) {
    const T* xv = self.parents[0]->value.data();
    const T* gv = self.parents[1]->value.data();
    const T* dy = self.grad.data();
    const std::size_t count = d.n * d.plane();
    T* dx = self.parent_needs_grad(0) ? self.parents[0]->grad_buffer().data() : nullptr;
    T* dg = self.parent_needs_grad(1) ? self.parents[1]->grad_buffer().data() : nullptr;
    T* db = self.parent_needs_grad(2) ? self.parents[2]->grad_buffer().data() : nullptr;
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < d.c; ++c) {
      T sum_dy{0}, sum_dy_xhat{0};
      for (std::size_t n = 0; n < d.n; ++n) {
        const std::size_t off = (n * d.c + c) * d.plane();
        for (std::size_t i = 0; i < d.plane(); ++i) {
          const T xhat = (xv[off + i] - mean[c]) * inv_std[c];
          sum_dy += dy[off + i];
          sum_dy_xhat += dy[off + i] * xhat;
        }
      }
      if (dg) dg[c] += sum_dy_xhat;
      if (db) db[c] += sum_dy;
      if (!dx) continue;
      const T k = gv[c] * inv_std[c];
      const T m = static_cast<T>(count);
      for (std::size_t n = 0; n < d.n; ++n) {
        const std::size_t off = (n * d.c + c) * d.plane();
        for (std::size_t i = 0; i < d.plane(); ++i) {
          if (training) {
            const T xhat = (xv[off + i] - mean[c]) * inv_std[c];
            dx[off + i] += k / m * (m * dy[off + i] - sum_dy - xhat * sum_dy_xhat);
          } else {
            dx[off + i] += k * dy[off + i];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, std::size_t groups, T eps) {
  const Dims4 d = x.value().dims4();
  require(groups > 0 && d.c % groups == 0, "group_norm: channels not divisible by groups");
  require(gamma.value().numel() == d.c && beta.value().numel() == d.c, "group_norm: affine size mismatch");
  using A = acc_t<T>;
  const std::size_t per_group = d.c / groups;
  const std::size_t count = per_group * d.plane();
  std::vector<T> mean(d.n * groups), inv_std(d.n * groups);
  const T* xv = x.value().data();
  Tensor<T> out(d.shape());
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t off = (n * d.c + g * per_group) * d.plane();
      A sum = A{0};
      for (std::size_t i = 0; i < count; ++i) sum += xv[off + i];
      const A mu = sum / static_cast<A>(count);
      A sq = A{0};
      for (std::size_t i = 0; i < count; ++i) sq += (xv[off + i] - mu) * (xv[off + i] - mu);
      const T inv = static_cast<T>(A{1} / std::sqrt(sq / static_cast<A>(count) + static_cast<A>(eps)));
      mean[n * groups + g] = static_cast<T>(mu);
      inv_std[n * groups + g] = inv;
      for (std::size_t cc = 0; cc < per_group; ++cc) {
        const std::size_t c = g * per_group + cc;
        for (std::size_t i = 0; i < d.plane(); ++i) {
          const std::size_t idx = off + cc * d.plane() + i;
          out[idx] = (xv[idx] - static_cast<T>(mu)) * inv * gv[c] + bv[c];
        }
      }
    }
  }
  return Var<T>::make(std::move(out), {x, gamma, beta}, [d, groups, mean, inv_std](Node<T>& self) {
    const std::size_t per_group = d.c / groups;
    const std::size_t count = per_group * d.plane();
    const T* xv = self.parents[0]->value.data();
    const T* gv = self.parents[1]->value.data();
    const T* dy = self.grad.data();
    T* dx = self.parent_needs_grad(0) ? self.parents[0]->grad_buffer().data() : nullptr;
    T* dg = self.parent_needs_grad(1) ? self.parents[1]->grad_buffer().data() : nullptr;
    T* db = self.parent_needs_grad(2) ? self.parents[2]->grad_buffer().data() : nullptr;
    auto xhat_at = [&](std::size_t n, std::size_t c, std::size_t idx) {
      const std::size_t g = c / per_group;
      return (xv[idx] - mean[n * groups + g]) * inv_std[n * groups + g];
    };
    if (dg || db) {
#pragma omp parallel for schedule(static)
      for (std::size_t c = 0; c < d.c; ++c) {
        T sg{0}, sb{0};
        for (std::size_t n = 0; n < d.n; ++n) {
          const std::size_t off = (n * d.c + c) * d.plane();
          for (std::size_t i = 0; i < d.plane(); ++i) {
            sg += dy[off + i] * xhat_at(n, c, off + i);
            sb += dy[off + i];
          }
        }
        if (dg) dg[c] += sg;
        if (db) db[c] += sb;
      }
    }
    if (!dx) return;
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t n = 0; n < d.n; ++n) {
      for (std::size_t g = 0; g < groups; ++g) {
        T sum_d{0}, sum_dx{0};
        for (std::size_t cc = 0; cc < per_group; ++cc) {
          const std::size_t c = g * per_group + cc;
          const std::size_t off = (n * d.c + c) * d.plane();
          for (std::size_t i = 0; i < d.plane(); ++i) {
            const T dxh = dy[off + i] * gv[c];
            sum_d += dxh;
            sum_dx += dxh * xhat_at(n, c, off + i);
          }
        }
        const T inv = inv_std[n * groups + g];
        const T m = static_cast<T>(count);
        for (std::size_t cc = 0; cc < per_group; ++cc) {
          const std::size_t c = g * per_group + cc;
          const std::size_t off = (n * d.c + c) * d.plane();
          for (std::size_t i = 0; i < d.plane(); ++i) {
            const T dxh = dy[off + i] * gv[c];
            dx[off + i] += inv / m * (m * dxh - sum_d - xhat_at(n, c, off + i) * sum_dx);
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  const std::size_t count = out.numel();
#pragma omp parallel for schedule(static)
  // NaN passes through so divergence stays visible downstream.
  for (std::size_t i = 0; i < count; ++i) out[i] = xv[i] <= T{0} ? T{0} : xv[i];
  return Var<T>::make(std::move(out), {x}, [](Node<T>& self) {
    T* dx = self.parents[0]->grad_buffer().data();
    const T* xv = self.parents[0]->value.data();
    const std::size_t count = self.grad.numel();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < count; ++i)
      if (xv[i] > T{0}) dx[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const std::size_t count = out.numel();
  const T* xv = x.value().data();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < count; ++i) out[i] = stable_sigmoid(xv[i]);
  return Var<T>::make(std::move(out), {x}, [](Node<T>& self) {
    T* dx = self.parents[0]->grad_buffer().data();
    const std::size_t count = self.grad.numel();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < count; ++i) {
      const T y = self.value[i];
      dx[i] += self.grad[i] * y * (T{1} - y);
    }
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const Dims4 d = x.value().dims4();
  require(pad < kernel, "max_pool2d: padding must be smaller than the window");
  const std::size_t oh = (d.h + 2 * pad - kernel) / stride + 1;
  const std::size_t ow = (d.w + 2 * pad - kernel) / stride + 1;
  Tensor<T> out({d.n, d.c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  kernels::max_pool(x.value().data(), d.n * d.c, d.h, d.w, kernel, stride, pad, out.data(), argmax->data());
  return Var<T>::make(std::move(out), {x}, [d, oh, ow, argmax](Node<T>& self) {
    kernels::max_pool_backward(self.grad.data(), argmax->data(), d.n * d.c, d.h, d.w, oh, ow,
                               self.parents[0]->grad_buffer().data());
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out(a.shape());
  const std::size_t count = out.numel();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < count; ++i) out[i] = a.value()[i] + b.value()[i];
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& self) {
    const std::size_t count = self.grad.numel();
    for (std::size_t p = 0; p < 2; ++p) {
      if (!self.parent_needs_grad(p)) continue;
      T* d = self.parents[p]->grad_buffer().data();
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < count; ++i) d[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> gate_spatial_residual(const Var<T>& x, const Var<T>& att) {
  const Dims4 d = x.value().dims4();
  const Dims4 a = att.value().dims4();
  require(a.n == d.n && a.c == 1 && a.h == d.h && a.w == d.w,
          "attention map " + shape_str(att.shape()) + " does not match features " + shape_str(x.shape()));
  Tensor<T> out(d.shape());
  const T* xv = x.value().data();
  const T* av = att.value().data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (n * d.c + c) * d.plane();
      const T* ap = av + n * d.plane();
      for (std::size_t i = 0; i < d.plane(); ++i) out[off + i] = xv[off + i] * ap[i] + xv[off + i];
    }
  }
  return Var<T>::make(std::move(out), {x, att}, [d](Node<T>& self) {
    const T* xv = self.parents[0]->value.data();
    const T* av = self.parents[1]->value.data();
    const T* dy = self.grad.data();
    if (self.parent_needs_grad(0)) {
      T* dx = self.parents[0]->grad_buffer().data();
#pragma omp parallel for collapse(2) schedule(static)
      for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t c = 0; c < d.c; ++c) {
          const std::size_t off = (n * d.c + c) * d.plane();
          for (std::size_t i = 0; i < d.plane(); ++i) dx[off + i] += dy[off + i] * (av[n * d.plane() + i] + T{1});
        }
    }
    if (self.parent_needs_grad(1)) {
      T* da = self.parents[1]->grad_buffer().data();
#pragma omp parallel for schedule(static)
      for (std::size_t n = 0; n < d.n; ++n)
        for (std::size_t c = 0; c < d.c; ++c) {
          const std::size_t off = (n * d.c + c) * d.plane();
          for (std::size_t i = 0; i < d.plane(); ++i) da[n * d.plane() + i] += dy[off + i] * xv[off + i];
        }
    }
  });
}

template <typename T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& gate) {
  const Dims4 d = x.value().dims4();
  require(gate.value().numel() == d.n * d.c, "scale_channels: gate must be N x C x 1 x 1");
  Tensor<T> out(d.shape());
  const T* xv = x.value().data();
  const T* gv = gate.value().data();
#pragma omp parallel for schedule(static)
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    for (std::size_t i = 0; i < d.plane(); ++i) out[nc * d.plane() + i] = xv[nc * d.plane() + i] * gv[nc];
  }
  return Var<T>::make(std::move(out), {x, gate}, [d](Node<T>& self) {
    const T* xv = self.parents[0]->value.data();
    const T* gv = self.parents[1]->value.data();
    const T* dy = self.grad.data();
    T* dx = self.parent_needs_grad(0) ? self.parents[0]->grad_buffer().data() : nullptr;
    T* dg = self.parent_needs_grad(1) ? self.parents[1]->grad_buffer().data() : nullptr;
#pragma omp parallel for schedule(static)
    for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
      T acc{0};
      for (std::size_t i = 0; i < d.plane(); ++i) {
        const std::size_t idx = nc * d.plane() + i;
        if (dx) dx[idx] += dy[idx] * gv[nc];
        acc += dy[idx] * xv[idx];
      }
      if (dg) dg[nc] += acc;
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Dims4 first = parts.front().value().dims4();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Dims4 d = p.value().dims4();
    require(d.n == first.n && d.h == first.h && d.w == first.w,
            "concat_channels: spatial mismatch " + shape_str(p.shape()) + " vs " + shape_str(first.shape()));
    widths.push_back(d.c);
    total += d.c;
  }
  Tensor<T> out({first.n, total, first.h, first.w});
  const std::size_t plane = first.plane();
  for (std::size_t n = 0; n < first.n; ++n) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const T* src = parts[k].value().data() + n * widths[k] * plane;
      std::copy(src, src + widths[k] * plane, out.data() + (n * total + offset) * plane);
      offset += widths[k];
    }
  }
  return Var<T>::make(std::move(out), parts, [first, widths, total](Node<T>& self) {
    const std::size_t plane = first.plane();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (self.parent_needs_grad(k)) {
        T* dst = self.parents[k]->grad_buffer().data();
        for (std::size_t n = 0; n < first.n; ++n) {
          const T* src = self.grad.data() + (n * total + offset) * plane;
          T* d = dst + n * widths[k] * plane;
          for (std::size_t i = 0; i < widths[k] * plane; ++i) d[i] += src[i];
        }
      }
      offset += widths[k];
    }
  });
}

template <typename T>
Var<T> adaptive_avg_pool2d(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  const Dims4 d = x.value().dims4();
  require(d.h > 0 && d.w > 0 && out_h > 0 && out_w > 0, "adaptive_avg_pool2d: empty extent");
  Tensor<T> out({d.n, d.c, out_h, out_w});
  kernels::adaptive_avg_pool(x.value().data(), d.n * d.c, d.h, d.w, out_h, out_w, out.data());
  return Var<T>::make(std::move(out), {x}, [d, out_h, out_w](Node<T>& self) {
    kernels::adaptive_avg_pool_backward(self.grad.data(), d.n * d.c, d.h, d.w, out_h, out_w,
                                        self.parents[0]->grad_buffer().data());
  });
}

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  const Dims4 d = x.value().dims4();
  require(d.h > 0 && d.w > 0 && out_h > 0 && out_w > 0, "upsample_bilinear: empty extent");
  if (d.h == out_h && d.w == out_w) return x;
  Tensor<T> out({d.n, d.c, out_h, out_w});
  kernels::bilinear_resize(x.value().data(), d.n * d.c, d.h, d.w, out_h, out_w, out.data());
  return Var<T>::make(std::move(out), {x}, [d, out_h, out_w](Node<T>& self) {
    kernels::bilinear_resize_backward(self.grad.data(), d.n * d.c, d.h, d.w, out_h, out_w,
                                      self.parents[0]->grad_buffer().data());
  });
}

template <typename T>
Var<T> spatial_attention(const Var<T>& query, const Var<T>& key, const Var<T>& value) {
  const Dims4 q = query.value().dims4();
  const Dims4 k = key.value().dims4();
  const Dims4 v = value.value().dims4();
  require(q.shape() == k.shape(), "spatial_attention: query/key shape mismatch");
  require(v.n == q.n && v.h == q.h && v.w == q.w, "spatial_attention: value spatial mismatch");
  const kernels::AttentionGeometry g{q.c, v.c, q.plane()};
  Tensor<T> out(v.shape());
  kernels::attention_forward(query.value().data(), key.value().data(), value.value().data(), q.n, g, out.data());
  return Var<T>::make(std::move(out), {query, key, value}, [g, n = q.n](Node<T>& self) {
    // The kernel accumulates into all three buffers; unused ones go to scratch.
    std::vector<T> scratch[3];
    T* grads[3];
    for (std::size_t i = 0; i < 3; ++i) {
      if (self.parent_needs_grad(i)) {
        grads[i] = self.parents[i]->grad_buffer().data();
      } else {
        scratch[i].assign(self.parents[i]->value.numel(), T{0});
        grads[i] = scratch[i].data();
      }
    }
    kernels::attention_backward(self.parents[0]->value.data(), self.parents[1]->value.data(),
                                self.parents[2]->value.data(), self.grad.data(), n, g, grads[0], grads[1], grads[2]);
  });
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& target) {
  require_same_shape(logits.value(), target, "bce_with_logits");
  const std::size_t count = target.numel();
  require(count > 0, "bce_with_logits: empty input");
  using A = acc_t<T>;
  const T* z = logits.value().data();
  A total = A{0};
  for (std::size_t i = 0; i < count; ++i) {
    const A zi = z[i];
    total += std::max(zi, A{0}) - zi * static_cast<A>(target[i]) + std::log1p(std::exp(-std::abs(zi)));
  }
  Tensor<T> out({1}, static_cast<T>(total / static_cast<A>(count)));
  return Var<T>::make(std::move(out), {logits}, [target, count](Node<T>& self) {
    const T upstream = self.grad[0] / static_cast<T>(count);
    const T* z = self.parents[0]->value.data();
    T* dz = self.parents[0]->grad_buffer().data();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < count; ++i) dz[i] += upstream * (stable_sigmoid(z[i]) - target[i]);
  });
}

template <typename T>
Var<T> dice_loss(const Var<T>& logits, const Tensor<T>& target, T eps) {
  require_same_shape(logits.value(), target, "dice_loss");
  require(eps > T{0}, "dice_loss: smoothing must be positive");
  const std::size_t batch = target.shape().empty() ? 1 : target.shape()[0];
  require(batch > 0 && target.numel() % batch == 0, "dice_loss: empty input");
  const std::size_t per = target.numel() / batch;
  using A = acc_t<T>;
  const T* z = logits.value().data();
  std::vector<A> inter(batch, A{0}), denom(batch, A{0});
  A loss = A{0};
  for (std::size_t n = 0; n < batch; ++n) {
    A i_sum = A{0}, p_sum = A{0}, t_sum = A{0};
    for (std::size_t i = 0; i < per; ++i) {
      const A p = stable_sigmoid(static_cast<A>(z[n * per + i]));
      const A t = target[n * per + i];
      i_sum += p * t;
      p_sum += p;
      t_sum += t;
    }
    inter[n] = i_sum;
    denom[n] = p_sum + t_sum + static_cast<A>(eps);
    loss += A{1} - (A{2} * i_sum + static_cast<A>(eps)) / denom[n];
  }
  Tensor<T> out({1}, static_cast<T>(loss / static_cast<A>(batch)));
  return Var<T>::make(std::move(out), {logits}, [target, eps, batch, per, inter, denom](Node<T>& self) {
    const A upstream = static_cast<A>(self.grad[0]) / static_cast<A>(batch);
    const T* z = self.parents[0]->value.data();
    T* dz = self.parents[0]->grad_buffer().data();
    for (std::size_t n = 0; n < batch; ++n) {
      const A num = A{2} * inter[n] + static_cast<A>(eps);
      const A den = denom[n];
      for (std::size_t i = 0; i < per; ++i) {
        const std::size_t idx = n * per + i;
        const A p = stable_sigmoid(static_cast<A>(z[idx]));
        const A dp = -(A{2} * static_cast<A>(target[idx]) * den - num) / (den * den);
        dz[idx] += static_cast<T>(upstream * dp * p * (A{1} - p));
      }
    }
  });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
  require(terms.size() == weights.size() && !terms.empty(), "weighted_sum: terms/weights mismatch");
  T total{0};
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(terms[i].value().numel() == 1, "weighted_sum: terms must be scalars");
    total += weights[i] * terms[i].value()[0];
  }
  return Var<T>::make(Tensor<T>({1}, total), terms, [weights](Node<T>& self) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (self.parent_needs_grad(i)) self.parents[i]->grad_buffer()[0] += weights[i] * self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  const Dims4 d = x.dims4();
  Tensor<T> out({d.n, d.c, out_h, out_w});
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const std::size_t sy = std::min(y * d.h / out_h, d.h - 1);
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const std::size_t sx = std::min(xx * d.w / out_w, d.w - 1);
        out[(p * out_h + y) * out_w + xx] = x[(p * d.h + sy) * d.w + sx];
      }
    }
  }
  return out;
}

#define ACSSEG_INSTANTIATE_OPS(T)                                                                             \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);          \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, bool, T, \
                                T);                                                                           \
  template Var<T> group_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, T);                \
  template Var<T> relu<T>(const Var<T>&);                                                                     \
  template Var<T> sigmoid<T>(const Var<T>&);                                                                  \
  template Var<T> max_pool2d<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);                        \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> gate_spatial_residual<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> scale_channels<T>(const Var<T>&, const Var<T>&);                                            \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                             \
  template Var<T> adaptive_avg_pool2d<T>(const Var<T>&, std::size_t, std::size_t);                            \
  template Var<T> upsample_bilinear<T>(const Var<T>&, std::size_t, std::size_t);                              \
  template Var<T> spatial_attention<T>(const Var<T>&, const Var<T>&, const Var<T>&);                          \
  template Var<T> bce_with_logits<T>(const Var<T>&, const Tensor<T>&);                                        \
  template Var<T> dice_loss<T>(const Var<T>&, const Tensor<T>&, T);                                           \
  template Var<T> weighted_sum<T>(const std::vector<Var<T>>&, const std::vector<T>&);                         \
  template Tensor<T> resize_nearest<T>(const Tensor<T>&, std::size_t, std::size_t);

ACSSEG_INSTANTIATE_OPS(float)
ACSSEG_INSTANTIATE_OPS(double)
ACSSEG_INSTANTIATE_OPS(long double)

#undef ACSSEG_INSTANTIATE_OPS

}  // namespace acsseg::ops
