#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace nase {

class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BetaSpec {
  enum class Kind { linear, explicit_values };
  Kind kind = Kind::linear;
  double start = 1e-4;
  double end = 0.035;
  std::vector<double> values;  // beta[1..T] when explicit

  static BetaSpec linear(double start, double end) { return {Kind::linear, start, end, {}}; }
  static BetaSpec explicit_values(std::vector<double> v) { return {Kind::explicit_values, 0, 0, std::move(v)}; }
};

// Interpolation weight w_t between the clean and the noisy mean.
struct WeightSpec {
  enum class Kind { scaled_ratio, zero, explicit_values };
  Kind kind = Kind::scaled_ratio;
  // w_t = min(1, kappa * sqrt((1 - abar_t) / abar_t)); nullopt picks kappa so w_T = 1.
  std::optional<double> kappa;
  std::vector<double> values;  // w[0..T] when explicit

  static WeightSpec scaled_ratio(std::optional<double> kappa = std::nullopt) {
    return {Kind::scaled_ratio, kappa, {}};
  }
  static WeightSpec zero() { return {Kind::zero, std::nullopt, {}}; }
  static WeightSpec explicit_values(std::vector<double> v) { return {Kind::explicit_values, std::nullopt, std::move(v)}; }
};

// Reverse-step mean c_xt * x_t + c_yt * y - c_eps * eps_hat with variance delta_tilde.
struct PosteriorCoefficients {
  double c_xt = 0.0;
  double c_yt = 0.0;
  double c_eps = 0.0;
  double delta_tilde = 0.0;

  friend bool operator==(const PosteriorCoefficients&, const PosteriorCoefficients&) = default;
};

// Immutable per-step quantities of the interpolating diffusion chain. Index 0
// denotes the clean endpoint (alpha_bar = 1, w = 0, delta = 0).
class Schedule {
 public:
  int steps() const noexcept { return steps_; }

  double beta(int t) const { return beta_.at(check(t, 1)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(check(t, 0)); }
  double w(int t) const { return w_.at(check(t, 0)); }
  double delta(int t) const { return delta_.at(check(t, 0)); }
  double beta_tilde(int t) const { return beta_tilde_.at(check(t, 1)); }
  const PosteriorCoefficients& coeffs(int t) const { return coeffs_.at(check(t, 1)); }

  // Marginal mean of x_t is clean_gain(t) * x0 + noisy_gain(t) * y.
  double clean_gain(int t) const;
  double noisy_gain(int t) const;

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& weights() const noexcept { return w_; }

  nlohmann::json to_json() const;
  static Schedule from_json(const nlohmann::json& doc);

  friend bool operator==(const Schedule&, const Schedule&) = default;

 private:
  friend Schedule build_schedule(int, const BetaSpec&, const WeightSpec&);
  std::size_t check(int t, int lo) const;

  int steps_ = 0;
  std::vector<double> beta_;       // [0] unused
  std::vector<double> alpha_bar_;  // [0] = 1
  std::vector<double> w_;
  std::vector<double> delta_;
  std::vector<double> beta_tilde_;
  std::vector<PosteriorCoefficients> coeffs_;
};

Schedule build_schedule(int steps, const BetaSpec& beta = {}, const WeightSpec& weight = {});

// Posterior of x_{t-1} given (x_t, y) with eps_hat standing in for C_t.
PosteriorCoefficients derive_posterior(const Schedule& s, int t);
// Same for a jump from step t to an earlier retained step `prev` (0 <= prev < t).
PosteriorCoefficients derive_posterior(const Schedule& s, int t, int prev);

// Linear Gaussian transition x_t = gain * x_prev + y_gain * y + sqrt(variance) * z
// that reproduces the marginals at prev and t.
struct Transition {
  double gain = 0.0;
  double y_gain = 0.0;
  double variance = 0.0;
};
Transition transition(const Schedule& s, int t, int prev);

}  // namespace nase
