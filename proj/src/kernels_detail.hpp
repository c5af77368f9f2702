#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace acsseg::kernels::detail {

// Source taps for one output coordinate of a half-pixel bilinear resample.
struct LinearTap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double frac = 0.0;
};

inline std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(src);
    lo = std::min(lo, in - 1);
    taps[o].lo = lo;
    taps[o].hi = std::min(lo + 1, in - 1);
    taps[o].frac = src - static_cast<double>(lo);
  }
  return taps;
}

inline std::size_t pool_start(std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; }
inline std::size_t pool_end(std::size_t i, std::size_t in, std::size_t out) {
  return ((i + 1) * in + out - 1) / out;
}

}  // namespace acsseg::kernels::detail
