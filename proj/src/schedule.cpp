#include "nase/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

namespace nase {

namespace {

// Below this the marginal variance is treated as zero (chain infeasible).
constexpr double kMinDelta = 1e-12;

std::string at_step(int t) { return " at t=" + std::to_string(t); }

}  // namespace

std::size_t Schedule::check(int t, int lo) const {
  if (t < lo || t > steps_) {
    throw ScheduleError("step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(steps_) + "]");
  }
  return static_cast<std::size_t>(t);
}

double Schedule::clean_gain(int t) const { return (1.0 - w(t)) * std::sqrt(alpha_bar(t)); }

double Schedule::noisy_gain(int t) const { return w(t) * std::sqrt(alpha_bar(t)); }

Schedule build_schedule(int steps, const BetaSpec& beta, const WeightSpec& weight) {
  if (steps < 2) throw ScheduleError("schedule needs at least 2 steps, got " + std::to_string(steps));
  const auto n = static_cast<std::size_t>(steps);

  Schedule s;
  s.steps_ = steps;
  s.beta_.assign(n + 1, 0.0);
  if (beta.kind == BetaSpec::Kind::linear) {
    for (std::size_t t = 1; t <= n; ++t) {
      s.beta_[t] = beta.start + (beta.end - beta.start) * static_cast<double>(t - 1) / static_cast<double>(n - 1);
    }
  } else {
    if (beta.values.size() != n) throw ScheduleError("explicit beta needs exactly T values");
    std::copy(beta.values.begin(), beta.values.end(), s.beta_.begin() + 1);
  }
  for (std::size_t t = 1; t <= n; ++t) {
    if (!(s.beta_[t] > 0.0 && s.beta_[t] < 1.0)) {
      throw ScheduleError("beta must lie in (0, 1)" + at_step(static_cast<int>(t)));
    }
  }

  s.alpha_bar_.assign(n + 1, 1.0);
  for (std::size_t t = 1; t <= n; ++t) s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t]);

  s.w_.assign(n + 1, 0.0);
  switch (weight.kind) {
    case WeightSpec::Kind::zero:
      break;
    case WeightSpec::Kind::explicit_values:
      if (weight.values.size() != n + 1) throw ScheduleError("explicit w needs exactly T+1 values");
      s.w_ = weight.values;
      break;
    case WeightSpec::Kind::scaled_ratio: {
      auto ratio = [&](std::size_t t) { return std::sqrt((1.0 - s.alpha_bar_[t]) / s.alpha_bar_[t]); };
      if (!weight.kappa && !(s.alpha_bar_[n] < 0.5)) {
        throw ScheduleError("infeasible schedule: w_T = 1 needs alpha_bar_T < 0.5, got " +
                            std::to_string(s.alpha_bar_[n]) + "; use more steps, a larger beta_end or kappa < 1");
      }
      const double kappa = weight.kappa.value_or(1.0 / ratio(n));
      for (std::size_t t = 1; t <= n; ++t) s.w_[t] = std::min(1.0, kappa * ratio(t));
      if (!weight.kappa) s.w_[n] = 1.0;
      break;
    }
  }
  if (s.w_[0] != 0.0) throw ScheduleError("w[0] must be 0");
  for (std::size_t t = 1; t <= n; ++t) {
    if (s.w_[t] < s.w_[t - 1]) throw ScheduleError("w must be non-decreasing" + at_step(static_cast<int>(t)));
    if (s.w_[t] > 1.0) throw ScheduleError("w must not exceed 1" + at_step(static_cast<int>(t)));
    if (t < n && s.w_[t] >= 1.0) {
      throw ScheduleError("w reaches 1 before the final step" + at_step(static_cast<int>(t)));
    }
  }

  s.delta_.assign(n + 1, 0.0);
  for (std::size_t t = 1; t <= n; ++t) {
    const double ab = s.alpha_bar_[t];
    s.delta_[t] = (1.0 - ab) - s.w_[t] * s.w_[t] * ab;
    if (!(s.delta_[t] > kMinDelta)) {
      throw ScheduleError("infeasible schedule: delta <= 0" + at_step(static_cast<int>(t)) +
                          " (w grows too fast relative to alpha_bar decay)");
    }
  }

  s.beta_tilde_.assign(n + 1, 0.0);
  for (std::size_t t = 1; t <= n; ++t) {
    s.beta_tilde_[t] = (1.0 - s.alpha_bar_[t - 1]) / (1.0 - s.alpha_bar_[t]) * s.beta_[t];
  }

  s.coeffs_.assign(n + 1, PosteriorCoefficients{});
  for (int t = 1; t <= steps; ++t) {
    if (transition(s, t, t - 1).variance < 0.0) {
      throw ScheduleError("infeasible schedule: negative transition variance" + at_step(t));
    }
    s.coeffs_[static_cast<std::size_t>(t)] = derive_posterior(s, t, t - 1);
  }
  return s;
}

Transition transition(const Schedule& s, int t, int prev) {
  if (prev < 0 || prev >= t) throw ScheduleError("transition needs 0 <= prev < t");
  const double gain = s.clean_gain(t) / s.clean_gain(prev);
  Transition tr;
  tr.gain = gain;
  tr.y_gain = s.noisy_gain(t) - gain * s.noisy_gain(prev);
  tr.variance = s.delta(t) - gain * gain * s.delta(prev);
  // Round-off on an exactly representable zero.
  if (tr.variance < 0.0 && tr.variance > -kMinDelta) tr.variance = 0.0;
  return tr;
}

PosteriorCoefficients derive_posterior(const Schedule& s, int t) { return derive_posterior(s, t, t - 1); }

PosteriorCoefficients derive_posterior(const Schedule& s, int t, int prev) {
  if (t < 1 || t > s.steps()) throw ScheduleError("derive_posterior: t out of range");
  const Transition tr = transition(s, t, prev);
  const double delta_t = s.delta(t);
  const double delta_prev = s.delta(prev);
  const double sqrt_ab = std::sqrt(s.alpha_bar(t));

  // Regression slope of x_prev on x_t given (x0, y).
  const double slope = tr.gain * delta_prev / delta_t;
  // Residual weight on x0, re-expressed through x0 = (x_t - sqrt(1 - abar_t) C_t) / sqrt(abar_t).
  const double x0_weight = s.clean_gain(prev) - slope * s.clean_gain(t);

  PosteriorCoefficients c;
  c.c_xt = slope + x0_weight / sqrt_ab;
  c.c_yt = s.noisy_gain(prev) - slope * s.noisy_gain(t);
  c.c_eps = x0_weight * std::sqrt(1.0 - s.alpha_bar(t)) / sqrt_ab;
  c.delta_tilde = delta_prev * tr.variance / delta_t;
  return c;
}

nlohmann::json Schedule::to_json() const {
  nlohmann::json doc;
  doc["steps"] = steps_;
  doc["beta"] = std::vector<double>(beta_.begin() + 1, beta_.end());
  doc["w"] = w_;
  doc["alpha_bar"] = alpha_bar_;
  doc["delta"] = delta_;
  return doc;
}

Schedule Schedule::from_json(const nlohmann::json& doc) {
  try {
    const int steps = doc.at("steps").get<int>();
    Schedule s = build_schedule(steps, BetaSpec::explicit_values(doc.at("beta").get<std::vector<double>>()),
                                WeightSpec::explicit_values(doc.at("w").get<std::vector<double>>()));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ScheduleError(std::string("malformed schedule document: ") + e.what());
  }
}

}  // namespace nase
