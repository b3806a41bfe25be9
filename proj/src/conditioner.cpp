#include "nase/conditioner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace nase {

namespace {

std::atomic<std::uint64_t> g_encode_calls{0};

Tensor ones_tensor(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

Tensor affine_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  return add_rowwise(mul_rowwise(layer_norm(x), gain), bias);
}

// Single-head scaled dot-product self-attention applied independently to each
// contiguous group of `frames` rows.
Tensor self_attention(const EncoderBlock& blk, const Tensor& h, std::size_t batch, std::size_t frames) {
  const Tensor q = apply(blk.query, h);
  const Tensor k = apply(blk.key, h);
  const Tensor v = apply(blk.value, h);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  std::vector<Tensor> parts;
  parts.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t lo = b * frames, hi = lo + frames;
    const Tensor scores = scale(matmul(slice_rows(q, lo, hi), transpose(slice_rows(k, lo, hi))), inv_sqrt_d);
    parts.push_back(matmul(softmax(scores), slice_rows(v, lo, hi)));
  }
  return apply(blk.out, concat_rows(parts));
}

}  // namespace

void EncoderConfig::validate() const {
  if (frame == 0 || hop == 0 || frame > signal_length) throw std::invalid_argument("encoder: bad framing");
  if (model_dim == 0 || ff_dim == 0 || embedding_dim == 0) throw std::invalid_argument("encoder: zero width");
  if (n_classes < 2) throw std::invalid_argument("encoder: n_classes must be >= 2");
}

EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.model_dim;
  EncoderParams p;
  p.frame_proj = make_linear(cfg.frame, d, rng);
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    EncoderBlock blk;
    blk.query = make_linear(d, d, rng);
    blk.key = make_linear(d, d, rng);
    blk.value = make_linear(d, d, rng);
    blk.out = make_linear(d, d, rng);
    blk.norm1_gain = Tensor::full({d}, 1.0);
    blk.norm1_bias = Tensor({d});
    blk.ff1 = make_linear(d, cfg.ff_dim, rng);
    blk.ff2 = make_linear(cfg.ff_dim, d, rng);
    blk.norm2_gain = Tensor::full({d}, 1.0);
    blk.norm2_bias = Tensor({d});
    p.blocks.push_back(std::move(blk));
  }
  p.pool_proj = make_linear(d, cfg.embedding_dim, rng);
  return p;
}

ClassifierParams init_classifier(const EncoderConfig& cfg, Rng& rng) {
  return ClassifierParams{make_linear(cfg.embedding_dim, cfg.n_classes, rng)};
}

namespace {

template <class Params, class Fn>
void visit_encoder(Params& p, const std::string& prefix, const Fn& fn) {
  visit(p.frame_proj, prefix + ".frame_proj", fn);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string bp = prefix + ".block" + std::to_string(i);
    visit(b.query, bp + ".query", fn);
    visit(b.key, bp + ".key", fn);
    visit(b.value, bp + ".value", fn);
    visit(b.out, bp + ".out", fn);
    fn(bp + ".norm1.gain", b.norm1_gain);
    fn(bp + ".norm1.bias", b.norm1_bias);
    visit(b.ff1, bp + ".ff1", fn);
    visit(b.ff2, bp + ".ff2", fn);
    fn(bp + ".norm2.gain", b.norm2_gain);
    fn(bp + ".norm2.bias", b.norm2_bias);
  }
  visit(p.pool_proj, prefix + ".pool_proj", fn);
}

template <class Params, class Fn>
void visit_inject(Params& p, const std::string& prefix, const Fn& fn) {
  switch (p.mode) {
    case InjectMode::addition:
    case InjectMode::concat:
      visit(p.proj, prefix + ".proj", fn);
      break;
    case InjectMode::cross_attn:
      visit(p.query, prefix + ".query", fn);
      visit(p.key, prefix + ".key", fn);
      visit(p.value, prefix + ".value", fn);
      visit(p.out, prefix + ".out", fn);
      break;
  }
}

}  // namespace

void visit(EncoderParams& p, const std::string& prefix, const ParamVisitor& fn) { visit_encoder(p, prefix, fn); }
void visit(const EncoderParams& p, const std::string& prefix, const ConstParamVisitor& fn) {
  visit_encoder(p, prefix, fn);
}
void visit(ClassifierParams& p, const std::string& prefix, const ParamVisitor& fn) {
  visit(p.head, prefix + ".head", fn);
}
void visit(const ClassifierParams& p, const std::string& prefix, const ConstParamVisitor& fn) {
  visit(p.head, prefix + ".head", fn);
}

ConditionerOutput encode(const EncoderParams& enc, const ClassifierParams& cls, const EncoderConfig& cfg,
                         const Tensor& y) {
  g_encode_calls.fetch_add(1, std::memory_order_relaxed);
  const std::size_t length = y.rank() == 1 ? y.dim(0) : (y.rank() == 2 ? y.dim(1) : 0);
  if (length != cfg.signal_length) {
    throw ShapeError("encode: expected signal length " + std::to_string(cfg.signal_length) + ", got " +
                     shape_str(y.shape()));
  }
  const std::size_t batch = y.rank() == 1 ? 1 : y.dim(0);
  const std::size_t frames = cfg.frames();

  // Overlapping frames in sample-major order (row = b * frames + f).
  Tensor framed({batch * frames, cfg.frame});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < frames; ++f)
      std::copy_n(y.data().begin() + b * length + f * cfg.hop, cfg.frame,
                  framed.data().begin() + (b * frames + f) * cfg.frame);

  Tensor positions({frames, cfg.model_dim});
  for (std::size_t f = 0; f < frames; ++f) {
    const auto pe = sinusoidal(static_cast<double>(f), cfg.model_dim);
    std::copy(pe.begin(), pe.end(), positions.data().begin() + f * cfg.model_dim);
  }

  Tensor h = add(apply(enc.frame_proj, framed), tile_rows(positions, batch));
  for (const EncoderBlock& blk : enc.blocks) {
    h = affine_norm(add(h, self_attention(blk, h, batch, frames)), blk.norm1_gain, blk.norm1_bias);
    const Tensor ff = apply(blk.ff2, relu(apply(blk.ff1, h)));
    h = affine_norm(add(h, ff), blk.norm2_gain, blk.norm2_bias);
  }

  Tensor pool({batch, batch * frames});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < frames; ++f) pool.data()[b * batch * frames + b * frames + f] = 1.0 / frames;

  ConditionerOutput out;
  out.embedding = apply(enc.pool_proj, matmul(pool, h));
  out.logits = apply(cls.head, out.embedding);
  out.probs = softmax(out.logits);
  return out;
}

std::uint64_t encode_call_count() noexcept { return g_encode_calls.load(std::memory_order_relaxed); }

Tensor nc_loss(const ConditionerOutput& out, std::span<const int> labels) {
  const std::size_t batch = out.probs.dim(0), classes = out.probs.dim(1);
  if (labels.size() != batch) throw ShapeError("nc_loss: label count does not match batch");
  Tensor onehot({batch, classes});
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw std::out_of_range("nc_loss: label " + std::to_string(labels[b]) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    onehot.data()[b * classes + static_cast<std::size_t>(labels[b])] = 1.0;
  }
  return scale(sum(mul(onehot, log(out.probs))), -1.0 / static_cast<double>(batch));
}

std::vector<int> predicted_classes(const ConditionerOutput& out) {
  const std::size_t batch = out.probs.dim(0), classes = out.probs.dim(1);
  std::vector<int> pred(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = out.probs.data().subspan(b * classes, classes);
    pred[b] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return pred;
}

std::string to_string(InjectMode mode) {
  switch (mode) {
    case InjectMode::addition:
      return "addition";
    case InjectMode::concat:
      return "concat";
    case InjectMode::cross_attn:
      return "cross-attn";
  }
  return "?";
}

InjectMode parse_inject_mode(const std::string& name) {
  if (name == "addition") return InjectMode::addition;
  if (name == "concat") return InjectMode::concat;
  if (name == "cross-attn" || name == "cross_attn") return InjectMode::cross_attn;
  throw std::invalid_argument("unknown injection mode '" + name + "'");
}

InjectParams init_inject(InjectMode mode, std::size_t hidden, std::size_t embedding, Rng& rng) {
  InjectParams p;
  p.mode = mode;
  switch (mode) {
    case InjectMode::addition:
      p.proj = make_linear(embedding, hidden, rng, /*with_bias=*/false);
      break;
    case InjectMode::concat:
      p.proj = make_linear(hidden + embedding, hidden, rng);
      break;
    case InjectMode::cross_attn: {
      const std::size_t attn = std::max<std::size_t>(1, hidden / 2);
      p.query = make_linear(hidden, attn, rng, false);
      p.key = make_linear(embedding, attn, rng, false);
      p.value = make_linear(embedding, attn, rng, false);
      p.out = make_linear(attn, hidden, rng, false);
      break;
    }
  }
  return p;
}

void visit(InjectParams& p, const std::string& prefix, const ParamVisitor& fn) { visit_inject(p, prefix, fn); }
void visit(const InjectParams& p, const std::string& prefix, const ConstParamVisitor& fn) {
  visit_inject(p, prefix, fn);
}

Tensor inject(const InjectParams& p, const Tensor& hidden, const Tensor& emb, std::size_t tokens) {
  if (hidden.rank() != 2 || emb.rank() != 2 || tokens == 0 || hidden.dim(0) != tokens * emb.dim(0)) {
    throw ShapeError("inject: hidden " + shape_str(hidden.shape()) + " incompatible with embedding " +
                     shape_str(emb.shape()) + " over " + std::to_string(tokens) + " tokens");
  }
  switch (p.mode) {
    case InjectMode::addition: {
      if (p.proj.in_features() != emb.dim(1) || p.proj.out_features() != hidden.dim(1)) {
        throw ShapeError("inject(addition): projection width mismatch");
      }
      return add(hidden, tile_rows(apply(p.proj, emb), tokens));
    }
    case InjectMode::concat: {
      if (p.proj.in_features() != hidden.dim(1) + emb.dim(1)) {
        throw ShapeError("inject(concat): projection expects " + std::to_string(p.proj.in_features()) +
                         " features, got " + std::to_string(hidden.dim(1) + emb.dim(1)));
      }
      return apply(p.proj, concat_cols(hidden, tile_rows(emb, tokens)));
    }
    case InjectMode::cross_attn: {
      if (p.key.in_features() != emb.dim(1) || p.query.in_features() != hidden.dim(1)) {
        throw ShapeError("inject(cross-attn): projection width mismatch");
      }
      // The embedding is the only key/value token, so each row attends over a
      // single score.
      const std::size_t attn = p.query.out_features();
      const Tensor q = apply(p.query, hidden);
      const Tensor k = tile_rows(apply(p.key, emb), tokens);
      const Tensor v = tile_rows(apply(p.value, emb), tokens);
      const Tensor scores = scale(matmul(mul(q, k), ones_tensor({attn, 1})), 1.0 / std::sqrt(double(attn)));
      const Tensor weights = softmax(scores);
      const Tensor attended = mul(matmul(weights, ones_tensor({1, attn})), v);
      return add(hidden, apply(p.out, attended));
    }
  }
  throw std::invalid_argument("inject: unknown mode");
}

}  // namespace nase
