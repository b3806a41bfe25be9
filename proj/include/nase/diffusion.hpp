#pragma once

#include "nase/rng.hpp"
#include "nase/schedule.hpp"
#include "nase/tensor.hpp"

namespace nase {

struct DiffusionSample {
  int t = 0;
  Tensor x_t;
  Tensor eps;
  Tensor target;
};

// Draws x_t ~ q(x_t | x0, y) and the combined-noise target C_t for that draw.
DiffusionSample forward_sample(const Schedule& s, const Tensor& x0, const Tensor& y, int t, Rng& rng);

// x_t for a given standard-normal draw eps.
Tensor forward_state(const Schedule& s, const Tensor& x0, const Tensor& y, const Tensor& eps, int t);

// C_t = w_t sqrt(abar_t) / sqrt(1 - abar_t) (y - x0) + sqrt(delta_t) / sqrt(1 - abar_t) eps.
Tensor build_target(const Schedule& s, const Tensor& x0, const Tensor& y, const Tensor& eps, int t);

// Inverts forward_state for eps.
Tensor recover_eps(const Schedule& s, const Tensor& x0, const Tensor& y, const Tensor& x_t, int t);

}  // namespace nase
