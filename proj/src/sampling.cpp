#include "nase/sampling.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "nase/errors.hpp"

namespace nase {

namespace {

void require_rows(const Tensor& y, std::span<Rng> rngs) {
  if (y.rank() != 2) throw ShapeError("sampling: expected a [B, L] batch, got " + shape_str(y.shape()));
  if (rngs.size() != y.dim(0)) throw std::invalid_argument("sampling: need one random stream per row");
}

void require_finite(const Tensor& x, int t) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError("reverse chain produced a non-finite state at step " + std::to_string(t));
  }
}

}  // namespace

void SamplerConfig::validate() const {
  if (stride < 1) throw SchemaError("sampler: stride must be >= 1");
  if (batch_size < 1) throw SchemaError("sampler: batch_size must be >= 1");
  for (std::size_t i = 1; i < steps_used.size(); ++i) {
    if (steps_used[i] >= steps_used[i - 1]) throw SchemaError("sampler: steps_used must be strictly decreasing");
  }
  if (!steps_used.empty() && steps_used.back() != 1) throw SchemaError("sampler: steps_used must end at 1");
}

std::vector<int> resolve_steps(const SamplerConfig& cfg, int steps) {
  cfg.validate();
  if (!cfg.steps_used.empty()) {
    if (cfg.steps_used.front() != steps) {
      throw SchemaError("sampler: steps_used must start at T=" + std::to_string(steps));
    }
    return cfg.steps_used;
  }
  std::vector<int> out;
  for (int t = steps; t >= 1; t -= cfg.stride) out.push_back(t);
  if (out.back() != 1) out.push_back(1);
  return out;
}

double step_variance(const Schedule& s, int t, int prev, bool deterministic_last_step) {
  if (prev == 0 && !deterministic_last_step) return 1.0 - s.alpha_bar(t) / s.alpha_bar(prev);
  if (prev == t - 1) return s.coeffs(t).delta_tilde;
  return derive_posterior(s, t, prev).delta_tilde;
}

Tensor posterior_step(const Schedule& s, const Tensor& x_t, const Tensor& y, const Tensor& eps_hat, int t, int prev,
                      std::span<Rng> rngs, bool deterministic_last_step) {
  require_rows(x_t, rngs);
  if (x_t.shape() != y.shape() || x_t.shape() != eps_hat.shape()) {
    throw ShapeError("posterior_step: x_t, y and eps_hat must share a shape");
  }
  if (t < 1 || t > s.steps()) throw ScheduleError("reverse step " + std::to_string(t) + " out of range");
  if (prev < 0 || prev >= t) throw ScheduleError("reverse step needs 0 <= prev < t");
  const PosteriorCoefficients c = prev == t - 1 ? s.coeffs(t) : derive_posterior(s, t, prev);
  const double variance = step_variance(s, t, prev, deterministic_last_step);
  const double sd = std::sqrt(std::max(variance, 0.0));

  const std::size_t B = x_t.dim(0), L = x_t.dim(1);
  Tensor out(x_t.shape());
  auto o = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t k = b * L + i;
      o[k] = c.c_xt * x_t[k] + c.c_yt * y[k] - c.c_eps * eps_hat[k];
      if (sd > 0.0) o[k] += sd * rngs[b].normal();
    }
  }
  return out;
}

Tensor initial_state(const Schedule& s, const Tensor& y, std::span<Rng> rngs) {
  require_rows(y, rngs);
  const int T = s.steps();
  const double mean_gain = std::sqrt(s.alpha_bar(T));
  const double sd = std::sqrt(s.delta(T));
  const std::size_t B = y.dim(0), L = y.dim(1);
  Tensor x(y.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < L; ++i) x.data()[b * L + i] = mean_gain * y[b * L + i] + sd * rngs[b].normal();
  }
  return x;
}

Tensor run_reverse_chain(const Schedule& s, const Tensor& y, const Tensor& x_start, std::span<const int> steps,
                         const EpsPredictor& predict, std::span<Rng> rngs, bool deterministic_last_step) {
  if (steps.empty()) throw std::invalid_argument("reverse chain: no steps");
  Tensor x = x_start;
  require_finite(x, steps.front());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const int prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    const Tensor eps_hat = predict(x, t);
    x = posterior_step(s, x, y, eps_hat, t, prev, rngs, deterministic_last_step);
    require_finite(x, t);
  }
  return x;
}

Tensor reverse_step(const Model& model, const Schedule& s, const Tensor& x_t, const Tensor& y, int t, int prev,
                    const Tensor* emb, std::span<Rng> rngs, const SamplerConfig& cfg) {
  require_rows(x_t, rngs);
  const std::vector<int> step_col(x_t.dim(0), t);
  const Tensor eps_hat = predict_eps(model.denoiser, model.config.denoiser, x_t, y, step_col, emb);
  return posterior_step(s, x_t, y, eps_hat, t, prev, rngs, cfg.deterministic_last_step);
}

Tensor enhance(const Model& model, const Schedule& s, const Tensor& y, const SamplerConfig& cfg, std::span<Rng> rngs) {
  require_rows(y, rngs);
  if (y.dim(1) != model.config.denoiser.signal_length) {
    throw ShapeError("enhance: signal length " + std::to_string(y.dim(1)) + " differs from model length " +
                     std::to_string(model.config.denoiser.signal_length));
  }
  if (s.steps() != model.config.denoiser.steps) throw std::invalid_argument("enhance: schedule/model step mismatch");
  const std::vector<int> steps = resolve_steps(cfg, s.steps());

  Tensor emb;
  if (model.config.use_conditioner) emb = encode(model.encoder, model.classifier, model.config.encoder, y).embedding;
  const Tensor* emb_ptr = model.config.use_conditioner ? &emb : nullptr;

  const std::size_t B = y.dim(0);
  EpsPredictor predict = [&](const Tensor& x, int t) {
    const std::vector<int> step_col(B, t);
    return predict_eps(model.denoiser, model.config.denoiser, x, y, step_col, emb_ptr);
  };
  const Tensor x_T = initial_state(s, y, rngs);
  return run_reverse_chain(s, y, x_T, steps, predict, rngs, cfg.deterministic_last_step);
}

Rng sampler_rng(const SamplerConfig& cfg, std::string_view utterance_id) {
  return Rng(cfg.seed).substream("sampler").substream(utterance_id);
}

Signal enhance(const Model& model, const Schedule& s, const Signal& y, const SamplerConfig& cfg) {
  if (y.empty()) throw EmptyInputError("enhance: empty signal");
  Rng rng = sampler_rng(cfg, "");
  const Tensor out = enhance(model, s, Tensor({1, y.size()}, y), cfg, std::span<Rng>(&rng, 1));
  return out.values();
}

std::vector<Signal> enhance_records(const Model& model, const Schedule& s, std::span<const Record> records,
                                    const SamplerConfig& cfg, std::size_t threads) {
  cfg.validate();
  if (records.empty()) throw EmptyInputError("enhance: no records to enhance");
  const std::size_t L = model.config.denoiser.signal_length;
  for (const Record& r : records) {
    if (r.noisy.size() != L) throw ShapeError("enhance: record " + r.id + " has the wrong length");
  }
  const std::size_t n_batches = (records.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<Signal> out(records.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t bi = next++; bi < n_batches; bi = next++) {
      try {
        const std::size_t lo = bi * cfg.batch_size;
        const std::size_t hi = std::min(records.size(), lo + cfg.batch_size);
        Tensor y({hi - lo, L});
        std::vector<Rng> rngs;
        for (std::size_t r = lo; r < hi; ++r) {
          std::copy(records[r].noisy.begin(), records[r].noisy.end(), y.data().begin() + (r - lo) * L);
          rngs.push_back(sampler_rng(cfg, records[r].id));
        }
        const Tensor x = enhance(model, s, y, cfg, rngs);
        for (std::size_t r = lo; r < hi; ++r) {
          out[r].assign(x.data().begin() + (r - lo) * L, x.data().begin() + (r - lo + 1) * L);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n_batches;
      }
    }
  };

  const std::size_t n_workers = std::clamp<std::size_t>(threads, 1, n_batches);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace nase
