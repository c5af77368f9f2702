#pragma once

#include <cstddef>

namespace acsseg {

struct PolySchedule {
  double init_lr = 0.001;
  double power = 0.9;
  std::size_t n_epoch = 150;
};

// init_lr * (1 - epoch / n_epoch)^power; throws std::out_of_range outside [0, n_epoch].
double poly_lr(const PolySchedule& s, std::size_t epoch);

}  // namespace acsseg
