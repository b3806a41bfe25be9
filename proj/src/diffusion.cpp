#include "nase/diffusion.hpp"

#include <cmath>

namespace nase {

namespace {

void require_pair(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": length mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_step(const Schedule& s, int t) {
  if (t < 1 || t > s.steps()) throw ScheduleError("diffusion step " + std::to_string(t) + " out of range");
}

}  // namespace

Tensor forward_state(const Schedule& s, const Tensor& x0, const Tensor& y, const Tensor& eps, int t) {
  require_pair("forward_state", x0, y);
  require_pair("forward_state", x0, eps);
  require_step(s, t);
  const double a = s.clean_gain(t), b = s.noisy_gain(t), sd = std::sqrt(s.delta(t));
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a * x0[i] + b * y[i] + sd * eps[i];
  return out;
}

DiffusionSample forward_sample(const Schedule& s, const Tensor& x0, const Tensor& y, int t, Rng& rng) {
  require_pair("forward_sample", x0, y);
  require_step(s, t);
  DiffusionSample out;
  out.t = t;
  out.eps = gauss(rng, x0.shape());
  out.x_t = forward_state(s, x0, y, out.eps, t);
  out.target = build_target(s, x0, y, out.eps, t);
  return out;
}

Tensor build_target(const Schedule& s, const Tensor& x0, const Tensor& y, const Tensor& eps, int t) {
  require_pair("build_target", x0, y);
  require_pair("build_target", x0, eps);
  require_step(s, t);
  const double ab = s.alpha_bar(t);
  const double denom = std::sqrt(1.0 - ab);
  // m_t is taken to be w_t.
  const double residual_gain = s.w(t) * std::sqrt(ab) / denom;
  const double noise_gain = std::sqrt(s.delta(t)) / denom;
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = residual_gain * (y[i] - x0[i]) + noise_gain * eps[i];
  }
  return out;
}

Tensor recover_eps(const Schedule& s, const Tensor& x0, const Tensor& y, const Tensor& x_t, int t) {
  require_pair("recover_eps", x0, y);
  require_pair("recover_eps", x0, x_t);
  require_step(s, t);
  const double a = s.clean_gain(t), b = s.noisy_gain(t), sd = std::sqrt(s.delta(t));
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = (x_t[i] - a * x0[i] - b * y[i]) / sd;
  return out;
}

}  // namespace nase
