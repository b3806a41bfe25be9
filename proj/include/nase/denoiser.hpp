#pragma once

#include <optional>
#include <span>
#include <vector>

#include "nase/conditioner.hpp"
#include "nase/layers.hpp"

namespace nase {

// eps_theta(x_t, y, t, E(y)): frames of (x_t, y) become tokens, a stack of
// residual blocks mixes features and tokens, and the embedding is fused in
// every block.
struct DenoiserConfig {
  std::size_t signal_length = 256;
  std::size_t frame = 16;
  std::size_t hidden = 64;
  std::size_t blocks = 4;
  std::size_t time_dim = 64;
  std::size_t embedding_dim = 64;
  int steps = 50;
  bool conditioned = true;
  InjectMode inject = InjectMode::addition;

  std::size_t tokens() const { return signal_length / frame; }
  void validate() const;
};

struct DenoiserBlock {
  std::optional<InjectParams> inject;
  Linear fc1;
  Tensor token_mix;  // [tokens, tokens]
  Linear fc2;
};

struct DenoiserParams {
  Linear in_proj;
  Linear time_proj;
  std::vector<DenoiserBlock> blocks;
  Linear out_proj;
};

DenoiserParams init_denoiser(const DenoiserConfig& cfg, Rng& rng);
void visit(DenoiserParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit(const DenoiserParams& p, const std::string& prefix, const ConstParamVisitor& fn);

// Sinusoidal step embedding, [steps.size(), time_dim].
Tensor time_embedding(std::span<const int> steps, std::size_t dim);

// x_t, y: [B, L]; steps: B values in [1, T]; emb: [B, e] or nullptr for an
// unconditioned pass. Returns [B, L].
Tensor predict_eps(const DenoiserParams& p, const DenoiserConfig& cfg, const Tensor& x_t, const Tensor& y,
                   std::span<const int> steps, const Tensor* emb);

// Mean absolute error over batch and length.
Tensor diff_loss(const Tensor& prediction, const Tensor& target);

}  // namespace nase
