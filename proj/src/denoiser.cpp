#include "nase/denoiser.hpp"

#include <cmath>

namespace nase {

void DenoiserConfig::validate() const {
  if (frame == 0 || signal_length % frame != 0) {
    throw std::invalid_argument("denoiser: frame must divide the signal length");
  }
  if (hidden == 0 || time_dim == 0 || blocks == 0) throw std::invalid_argument("denoiser: zero width");
  if (steps < 2) throw std::invalid_argument("denoiser: steps must be >= 2");
}

DenoiserParams init_denoiser(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t h = cfg.hidden, n = cfg.tokens();
  const double branch_gain = 1.0 / std::sqrt(static_cast<double>(cfg.blocks));
  DenoiserParams p;
  p.in_proj = make_linear(2 * cfg.frame, h, rng);
  p.time_proj = make_linear(cfg.time_dim, h, rng);
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    DenoiserBlock blk;
    if (cfg.conditioned) blk.inject = init_inject(cfg.inject, h, cfg.embedding_dim, rng);
    blk.fc1 = make_linear(h, h, rng);
    blk.token_mix = Tensor({n, n});
    const double bound = 1.0 / std::sqrt(static_cast<double>(n));
    for (double& v : blk.token_mix.data()) v = rng.uniform(-bound, bound);
    blk.fc2 = make_linear(h, h, rng, true, branch_gain);
    p.blocks.push_back(std::move(blk));
  }
  p.out_proj = make_linear(h, cfg.frame, rng);
  return p;
}

namespace {

template <class Params, class Fn>
void visit_denoiser(Params& p, const std::string& prefix, const Fn& fn) {
  visit(p.in_proj, prefix + ".in_proj", fn);
  visit(p.time_proj, prefix + ".time_proj", fn);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string bp = prefix + ".block" + std::to_string(i);
    if (b.inject) visit(*b.inject, bp + ".inject", fn);
    visit(b.fc1, bp + ".fc1", fn);
    fn(bp + ".token_mix", b.token_mix);
    visit(b.fc2, bp + ".fc2", fn);
  }
  visit(p.out_proj, prefix + ".out_proj", fn);
}

// Row permutation between sample-major (b * tokens + k) and token-major
// (k * batch + b) layouts.
std::vector<std::size_t> token_major_index(std::size_t batch, std::size_t tokens) {
  std::vector<std::size_t> idx(batch * tokens);
  for (std::size_t k = 0; k < tokens; ++k)
    for (std::size_t b = 0; b < batch; ++b) idx[k * batch + b] = b * tokens + k;
  return idx;
}

std::vector<std::size_t> sample_major_index(std::size_t batch, std::size_t tokens) {
  std::vector<std::size_t> idx(batch * tokens);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < tokens; ++k) idx[b * tokens + k] = k * batch + b;
  return idx;
}

}  // namespace

void visit(DenoiserParams& p, const std::string& prefix, const ParamVisitor& fn) { visit_denoiser(p, prefix, fn); }
void visit(const DenoiserParams& p, const std::string& prefix, const ConstParamVisitor& fn) {
  visit_denoiser(p, prefix, fn);
}

Tensor time_embedding(std::span<const int> steps, std::size_t dim) {
  Tensor out({steps.size(), dim});
  for (std::size_t b = 0; b < steps.size(); ++b) {
    const auto row = sinusoidal(static_cast<double>(steps[b]), dim);
    std::copy(row.begin(), row.end(), out.data().begin() + b * dim);
  }
  return out;
}

Tensor predict_eps(const DenoiserParams& p, const DenoiserConfig& cfg, const Tensor& x_t, const Tensor& y,
                   std::span<const int> steps, const Tensor* emb) {
  if (x_t.shape() != y.shape()) {
    throw ShapeError("predict_eps: x_t " + shape_str(x_t.shape()) + " vs y " + shape_str(y.shape()));
  }
  if (x_t.rank() != 2 || x_t.dim(1) != cfg.signal_length) {
    throw ShapeError("predict_eps: expected [B, " + std::to_string(cfg.signal_length) + "], got " +
                     shape_str(x_t.shape()));
  }
  const std::size_t batch = x_t.dim(0), tokens = cfg.tokens();
  if (steps.size() != batch) throw ShapeError("predict_eps: one step index per batch row required");
  for (int t : steps) {
    if (t < 1 || t > cfg.steps) throw std::out_of_range("predict_eps: step " + std::to_string(t) + " out of range");
  }
  if (emb && (emb->rank() != 2 || emb->dim(0) != batch || emb->dim(1) != cfg.embedding_dim)) {
    throw ShapeError("predict_eps: embedding shape " + shape_str(emb->shape()));
  }

  const auto to_tokens = token_major_index(batch, tokens);
  const Tensor xt_frames = gather_rows(reshape(x_t, {batch * tokens, cfg.frame}), to_tokens);
  const Tensor y_frames = gather_rows(reshape(y, {batch * tokens, cfg.frame}), to_tokens);

  Tensor h = apply(p.in_proj, concat_cols(xt_frames, y_frames));
  const Tensor te = tanh(apply(p.time_proj, time_embedding(steps, cfg.time_dim)));
  h = add(h, tile_rows(te, tokens));

  for (const DenoiserBlock& blk : p.blocks) {
    Tensor z = (emb && blk.inject) ? inject(*blk.inject, h, *emb, tokens) : h;
    z = relu(apply(blk.fc1, z));
    // Token mixing: with token-major rows, [tokens * B, h] views as [tokens, B * h].
    const Tensor mixed = reshape(matmul(blk.token_mix, reshape(z, {tokens, batch * cfg.hidden})),
                                 {tokens * batch, cfg.hidden});
    z = apply(blk.fc2, add(z, mixed));
    h = add(h, z);
  }

  const Tensor out = apply(p.out_proj, h);
  return reshape(gather_rows(out, sample_major_index(batch, tokens)), {batch, cfg.signal_length});
}

Tensor diff_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.size() == 0) throw std::invalid_argument("diff_loss: empty batch");
  return l1_loss(prediction, target);
}

}  // namespace nase
