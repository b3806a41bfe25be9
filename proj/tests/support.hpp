#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nase/config.hpp"
#include "nase/datagen.hpp"
#include "nase/model.hpp"
#include "nase/rng.hpp"
#include "nase/schedule.hpp"
#include "nase/tensor.hpp"

namespace nase::testing {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheck {
  double worst = 0.0;       // largest relative error over all inputs
  std::string worst_input;  // index or name of the input that produced it
};

// Compares tape gradients of f with central differences at the given inputs.
// Relative error per input is |g_tape - g_fd| / max(|g_tape| + |g_fd|, floor)
// over up to `max_entries` randomly chosen coordinates.
GradCheck check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, Rng& pick,
                          std::size_t max_entries = 16, double h = 1e-5,
                          const std::vector<std::string>& names = {});

// Parameter tensors of a model in visit order, and the inverse.
std::vector<Tensor> flatten(const Model& m);
std::vector<std::string> parameter_names(const Model& m);
Model with_parameters(Model m, const std::vector<Tensor>& values);

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0);

// Monte Carlo statistics of x_prev given x_t for scalar (x0, y): x_prev is drawn
// from its marginal and pushed to step t through single-step transitions
// x_s = g x_{s-1} + h y + sqrt(v) z with g = (1 - w_s) / (1 - w_{s-1}) sqrt(alpha_s),
// h = w_s sqrt(abar_s) - g w_{s-1} sqrt(abar_{s-1}), v = delta_s - g^2 delta_{s-1}.
// x_prev is then regressed on x_t by least squares.
struct PosteriorEstimate {
  double slope = 0.0, slope_se = 0.0;
  double x_mean = 0.0;                       // sample mean of x_t
  double mean_at_x = 0.0, mean_at_x_se = 0.0;  // regression line at x_mean
  double variance = 0.0, variance_se = 0.0;  // residual variance
  double xt_var = 0.0, xt_var_se = 0.0;      // sample variance of x_t
};
PosteriorEstimate estimate_posterior(const Schedule& s, int t, int prev, double x0, double y, std::size_t n, Rng& rng);

// Closed-form values the estimate should match, from derive_posterior with
// eps_hat replaced by the oracle target C_t = (x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t).
struct PosteriorPrediction {
  double slope = 0.0;
  double mean_at_x = 0.0;
  double variance = 0.0;
};
PosteriorPrediction predict_posterior(const Schedule& s, int t, int prev, double x0, double y, double x_t);

// Two-sided z threshold that keeps the family-wise false alarm rate of
// `comparisons` Gaussian checks at that of a single 3 sigma check.
double family_z(std::size_t comparisons);

// Small corpus and model shapes for fast end-to-end tests.
CorpusSpec tiny_corpus(std::uint64_t seed, std::size_t per_family = 4);
ModelConfig tiny_model(std::size_t signal_length = 64, int steps = 10, std::size_t classes = 10);

// Tiny corpus, model and 10-step schedule with `epochs` of joint training.
ExperimentConfig tiny_experiment(std::uint64_t seed, int epochs = 1);

// 10-step schedule whose beta range reaches alpha_bar_T < 0.5.
Schedule short_schedule(int steps = 10);

// Random feasible schedule with T steps: random linear beta range and a
// random kappa < 1 that keeps w below 1.
Schedule random_schedule(Rng& rng, int steps);

}  // namespace nase::testing
