#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nase/datagen.hpp"
#include "nase/model.hpp"
#include "nase/rng.hpp"
#include "nase/schedule.hpp"
#include "nase/tensor.hpp"

namespace nase {

struct SamplerConfig {
  // Explicit strictly decreasing subsequence starting at T and ending at 1.
  // Empty means every step, thinned by `stride` when stride > 1.
  std::vector<int> steps_used;
  int stride = 1;
  // Zero variance on the final step; when off the final step draws with
  // variance 1 - abar_t / abar_prev.
  bool deterministic_last_step = true;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;

  void validate() const;
};

// The retained steps, e.g. {T, T-2, ..., 2, 1} for stride 2.
std::vector<int> resolve_steps(const SamplerConfig& cfg, int steps);

// eps_hat for a [B, L] state at step t.
using EpsPredictor = std::function<Tensor(const Tensor& x_t, int t)>;

// One reverse update from t to prev given eps_hat. Row b draws its noise from
// rngs[b]; a zero variance consumes no randomness.
Tensor posterior_step(const Schedule& s, const Tensor& x_t, const Tensor& y, const Tensor& eps_hat, int t, int prev,
                      std::span<Rng> rngs, bool deterministic_last_step = true);

// Variance used by posterior_step for the jump t -> prev.
double step_variance(const Schedule& s, int t, int prev, bool deterministic_last_step);

// x_T ~ N(sqrt(abar_T) y, delta_T I) for each row of y.
Tensor initial_state(const Schedule& s, const Tensor& y, std::span<Rng> rngs);

// Full reverse chain over `steps` (as returned by resolve_steps) from x_T.
Tensor run_reverse_chain(const Schedule& s, const Tensor& y, const Tensor& x_start, std::span<const int> steps,
                         const EpsPredictor& predict, std::span<Rng> rngs, bool deterministic_last_step = true);

// Model-driven reverse step with a precomputed embedding (nullptr when the
// model has no conditioner path).
Tensor reverse_step(const Model& model, const Schedule& s, const Tensor& x_t, const Tensor& y, int t, int prev,
                    const Tensor* emb, std::span<Rng> rngs, const SamplerConfig& cfg);

// Enhances a batch y [B, L]. The conditioner runs once per call.
Tensor enhance(const Model& model, const Schedule& s, const Tensor& y, const SamplerConfig& cfg,
               std::span<Rng> rngs);

// Single utterance using the stream sampler_rng(cfg, "").
Signal enhance(const Model& model, const Schedule& s, const Signal& y, const SamplerConfig& cfg);

// Per-utterance stream; results are independent of batching and thread count.
Rng sampler_rng(const SamplerConfig& cfg, std::string_view utterance_id);

// Enhances every record's noisy signal, batching cfg.batch_size records per
// call and spreading batches over `threads` workers.
std::vector<Signal> enhance_records(const Model& model, const Schedule& s, std::span<const Record> records,
                                    const SamplerConfig& cfg, std::size_t threads = 1);

}  // namespace nase
