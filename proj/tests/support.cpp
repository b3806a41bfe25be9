#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nase::testing {

GradCheck check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, Rng& pick, std::size_t max_entries,
                          double h, const std::vector<std::string>& names) {
  Tape tape;
  std::vector<Tensor> tracked;
  tracked.reserve(inputs.size());
  for (const Tensor& x : inputs) tracked.push_back(tape.watch(x));
  const Gradients grads = tape.backward(f(tracked));

  GradCheck result;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor g = *grads.of(tracked[k]);
    std::vector<std::size_t> entries(inputs[k].size());
    std::iota(entries.begin(), entries.end(), 0);
    for (std::size_t i = entries.size(); i > 1; --i) std::swap(entries[i - 1], entries[pick.below(i)]);
    entries.resize(std::min(entries.size(), max_entries));

    double diff2 = 0.0, tape2 = 0.0, fd2 = 0.0;
    for (std::size_t e : entries) {
      const double saved = probe[k].data()[e];
      probe[k].data()[e] = saved + h;
      const double up = f(probe).item();
      probe[k].data()[e] = saved - h;
      const double down = f(probe).item();
      probe[k].data()[e] = saved;
      const double fd = (up - down) / (2.0 * h);
      diff2 += (g[e] - fd) * (g[e] - fd);
      tape2 += g[e] * g[e];
      fd2 += fd * fd;
    }
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(tape2) + std::sqrt(fd2), 1e-6);
    if (result.worst_input.empty() || rel > result.worst) {
      result.worst = rel;
      result.worst_input = k < names.size() ? names[k] : std::to_string(k);
    }
  }
  return result;
}

std::vector<Tensor> flatten(const Model& m) {
  std::vector<Tensor> out;
  visit(m, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

std::vector<std::string> parameter_names(const Model& m) {
  std::vector<std::string> out;
  visit(m, [&](const std::string& name, const Tensor&) { out.push_back(name); });
  return out;
}

Model with_parameters(Model m, const std::vector<Tensor>& values) {
  std::size_t i = 0;
  visit(m, [&](const std::string&, Tensor& t) { t = values.at(i++); });
  return m;
}

Tensor random_tensor(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

PosteriorEstimate estimate_posterior(const Schedule& s, int t, int prev, double x0, double y, std::size_t n, Rng& rng) {
  auto marginal_mean = [&](int k) { return (1.0 - s.w(k)) * std::sqrt(s.alpha_bar(k)) * x0 + s.w(k) * std::sqrt(s.alpha_bar(k)) * y; };
  const double prev_mean = marginal_mean(prev), t_mean = marginal_mean(t);
  const double prev_sd = std::sqrt((1.0 - s.alpha_bar(prev)) - s.w(prev) * s.w(prev) * s.alpha_bar(prev));

  double sx = 0.0, sp = 0.0, sxx = 0.0, spp = 0.0, sxp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xp = prev_mean + prev_sd * rng.normal();
    double x = xp;
    for (int k = prev + 1; k <= t; ++k) {
      const double sqrt_alpha = std::sqrt(s.alpha(k));
      const double g = (1.0 - s.w(k)) / (1.0 - s.w(k - 1)) * sqrt_alpha;
      const double h = s.w(k) * std::sqrt(s.alpha_bar(k)) - g * s.w(k - 1) * std::sqrt(s.alpha_bar(k - 1));
      const double v = s.delta(k) - g * g * s.delta(k - 1);
      x = g * x + h * y + std::sqrt(std::max(v, 0.0)) * rng.normal();
    }
    // Centred on the marginal means to avoid cancellation.
    const double dx = x - t_mean, dp = xp - prev_mean;
    sx += dx;
    sp += dp;
    sxx += dx * dx;
    spp += dp * dp;
    sxp += dx * dp;
  }
  const double nn = static_cast<double>(n);
  const double mx = sx / nn, mp = sp / nn;
  const double vxx = sxx / nn - mx * mx, vpp = spp / nn - mp * mp, cxp = sxp / nn - mx * mp;

  PosteriorEstimate e;
  e.slope = cxp / vxx;
  e.x_mean = t_mean + mx;
  e.mean_at_x = prev_mean + mp;
  e.variance = std::max(vpp - e.slope * cxp, 0.0) * nn / (nn - 2.0);
  e.slope_se = std::sqrt(e.variance / (nn * vxx));
  e.mean_at_x_se = std::sqrt(e.variance / nn);
  e.variance_se = e.variance * std::sqrt(2.0 / (nn - 2.0));
  e.xt_var = vxx * nn / (nn - 1.0);
  e.xt_var_se = e.xt_var * std::sqrt(2.0 / (nn - 1.0));
  return e;
}

PosteriorPrediction predict_posterior(const Schedule& s, int t, int prev, double x0, double y, double x_t) {
  const PosteriorCoefficients c = derive_posterior(s, t, prev);
  const double ab = s.alpha_bar(t);
  const double oracle = (x_t - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
  PosteriorPrediction p;
  p.slope = c.c_xt - c.c_eps / std::sqrt(1.0 - ab);
  p.mean_at_x = c.c_xt * x_t + c.c_yt * y - c.c_eps * oracle;
  p.variance = c.delta_tilde;
  return p;
}

double family_z(std::size_t comparisons) {
  const double level = std::erfc(3.0 / std::sqrt(2.0)) / static_cast<double>(comparisons);
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::sqrt(2.0)) > level ? lo : hi) = mid;
  }
  return hi;
}

CorpusSpec tiny_corpus(std::uint64_t seed, std::size_t per_family) {
  CorpusSpec spec;
  spec.signal_length = 64;
  spec.train_per_family = per_family;
  spec.test_per_family = 2;
  spec.unseen_per_cell = 1;
  spec.seed = seed;
  return spec;
}

ModelConfig tiny_model(std::size_t signal_length, int steps, std::size_t classes) {
  ModelConfig m;
  m.encoder.signal_length = signal_length;
  m.encoder.frame = 16;
  m.encoder.hop = 8;
  m.encoder.model_dim = 8;
  m.encoder.ff_dim = 8;
  m.encoder.blocks = 1;
  m.encoder.embedding_dim = 4;
  m.encoder.n_classes = classes;
  m.denoiser.frame = 8;
  m.denoiser.hidden = 8;
  m.denoiser.blocks = 1;
  m.denoiser.time_dim = 8;
  m.denoiser.steps = steps;
  m.sync();
  return m;
}

ExperimentConfig tiny_experiment(std::uint64_t seed, int epochs) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.corpus = tiny_corpus(seed, 2);
  cfg.model = tiny_model();
  cfg.schedule.steps = 10;
  cfg.schedule.beta_start = 1e-3;
  cfg.schedule.beta_end = 0.2;
  cfg.train.epochs = epochs;
  cfg.resolve();
  cfg.validate();
  return cfg;
}

Schedule short_schedule(int steps) { return build_schedule(steps, BetaSpec::linear(1e-3, 0.2)); }

Schedule random_schedule(Rng& rng, int steps) {
  const BetaSpec beta = BetaSpec::linear(rng.uniform(1e-4, 0.01), rng.uniform(0.05, 0.3));
  const Schedule probe = build_schedule(steps, beta, WeightSpec::zero());
  const double ratio_T = std::sqrt((1.0 - probe.alpha_bar(steps)) / probe.alpha_bar(steps));
  return build_schedule(steps, beta, WeightSpec::scaled_ratio(rng.uniform(0.3, 0.95) * std::min(1.0, 1.0 / ratio_T)));
}

}  // namespace nase::testing
