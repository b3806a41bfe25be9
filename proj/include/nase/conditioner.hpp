#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nase/layers.hpp"

namespace nase {

// Framed-signal transformer encoder E followed by a linear noise classifier P.
struct EncoderConfig {
  std::size_t signal_length = 256;
  std::size_t frame = 32;
  std::size_t hop = 16;
  std::size_t model_dim = 32;
  std::size_t ff_dim = 64;
  std::size_t blocks = 2;
  std::size_t embedding_dim = 64;
  std::size_t n_classes = 10;

  std::size_t frames() const { return (signal_length - frame) / hop + 1; }
  void validate() const;
};

struct EncoderBlock {
  Linear query, key, value, out;
  Tensor norm1_gain, norm1_bias;
  Linear ff1, ff2;
  Tensor norm2_gain, norm2_bias;
};

struct EncoderParams {
  Linear frame_proj;
  std::vector<EncoderBlock> blocks;
  Linear pool_proj;
};

struct ClassifierParams {
  Linear head;
};

EncoderParams init_encoder(const EncoderConfig& cfg, Rng& rng);
ClassifierParams init_classifier(const EncoderConfig& cfg, Rng& rng);

void visit(EncoderParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit(const EncoderParams& p, const std::string& prefix, const ConstParamVisitor& fn);
void visit(ClassifierParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit(const ClassifierParams& p, const std::string& prefix, const ConstParamVisitor& fn);

struct ConditionerOutput {
  Tensor embedding;  // [B, embedding_dim]
  Tensor logits;     // [B, n_classes]
  Tensor probs;      // [B, n_classes], rows on the simplex
};

// y is [B, L] (or [L] for a single utterance). Differentiable in the parameters.
ConditionerOutput encode(const EncoderParams& enc, const ClassifierParams& cls, const EncoderConfig& cfg,
                         const Tensor& y);

// Number of encode() calls made by this process.
std::uint64_t encode_call_count() noexcept;

// Mean cross-entropy -log probs[b, label[b]] over the batch.
Tensor nc_loss(const ConditionerOutput& out, std::span<const int> labels);

// Argmax class per row.
std::vector<int> predicted_classes(const ConditionerOutput& out);

enum class InjectMode { addition, concat, cross_attn };

std::string to_string(InjectMode mode);
InjectMode parse_inject_mode(const std::string& name);

struct InjectParams {
  InjectMode mode = InjectMode::addition;
  Linear proj;                          // addition: e -> h (no bias); concat: h + e -> h
  Linear query, key, value, out;        // cross-attention
};

InjectParams init_inject(InjectMode mode, std::size_t hidden, std::size_t embedding, Rng& rng);
void visit(InjectParams& p, const std::string& prefix, const ParamVisitor& fn);
void visit(const InjectParams& p, const std::string& prefix, const ConstParamVisitor& fn);

// Fuses the embedding into hidden states. `hidden` is [tokens * B, h] in
// token-major row order (row = token * B + b); `emb` is [B, e].
Tensor inject(const InjectParams& p, const Tensor& hidden, const Tensor& emb, std::size_t tokens);

}  // namespace nase
