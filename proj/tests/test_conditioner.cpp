#include <gtest/gtest.h>

#include <cmath>

#include "nase/conditioner.hpp"
#include "support.hpp"

using namespace nase;
using nase::testing::check_gradients;
using nase::testing::random_tensor;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.signal_length = 32;
  c.frame = 8;
  c.hop = 8;
  c.model_dim = 6;
  c.ff_dim = 8;
  c.blocks = 1;
  c.embedding_dim = 5;
  c.n_classes = 3;
  return c;
}

std::vector<Tensor> encoder_parameters(const EncoderParams& e, const ClassifierParams& c) {
  std::vector<Tensor> out;
  visit(e, "encoder", [&](const std::string&, const Tensor& t) { out.push_back(t); });
  visit(c, "classifier", [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

std::vector<std::string> encoder_names(const EncoderParams& e, const ClassifierParams& c) {
  std::vector<std::string> out;
  visit(e, "encoder", [&](const std::string& n, const Tensor&) { out.push_back(n); });
  visit(c, "classifier", [&](const std::string& n, const Tensor&) { out.push_back(n); });
  return out;
}

void assign(EncoderParams& e, ClassifierParams& c, const std::vector<Tensor>& v) {
  std::size_t i = 0;
  visit(e, "encoder", [&](const std::string&, Tensor& t) { t = v.at(i++); });
  visit(c, "classifier", [&](const std::string&, Tensor& t) { t = v.at(i++); });
}

double cosine(const Tensor& m, std::size_t a, std::size_t b) {
  const std::size_t d = m.dim(1);
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t j = 0; j < d; ++j) {
    ab += m[a * d + j] * m[b * d + j];
    aa += m[a * d + j] * m[a * d + j];
    bb += m[b * d + j] * m[b * d + j];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(Conditioner, ZeroClassifierGivesUniformProbabilities) {
  const EncoderConfig cfg;
  Rng r(1);
  const EncoderParams enc = init_encoder(cfg, r);
  ClassifierParams cls = init_classifier(cfg, r);
  for (double& v : cls.head.weight.data()) v = 0.0;
  for (double& v : cls.head.bias.data()) v = 0.0;
  const auto out = encode(enc, cls, cfg, random_tensor(r, {3, cfg.signal_length}));
  for (double p : out.probs.data()) EXPECT_NEAR(p, 0.1, 1e-15);
}

TEST(Conditioner, DeterministicAndOnSimplex) {
  const EncoderConfig cfg;
  Rng r(2);
  const EncoderParams enc = init_encoder(cfg, r);
  const ClassifierParams cls = init_classifier(cfg, r);
  const Tensor y = random_tensor(r, {4, cfg.signal_length});
  const auto a = encode(enc, cls, cfg, y);
  const auto b = encode(enc, cls, cfg, y);
  EXPECT_EQ(a.embedding.values(), b.embedding.values());
  EXPECT_EQ(a.probs.shape(), (Shape{4, cfg.n_classes}));
  EXPECT_EQ(a.embedding.shape(), (Shape{4, cfg.embedding_dim}));
  for (std::size_t row = 0; row < 4; ++row) {
    double total = 0.0;
    for (std::size_t k = 0; k < cfg.n_classes; ++k) {
      EXPECT_GE(a.probs[row * cfg.n_classes + k], 0.0);
      total += a.probs[row * cfg.n_classes + k];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  // A single utterance is a batch of one.
  const auto single = encode(enc, cls, cfg, slice_rows(y, 1, 2).detached());
  EXPECT_EQ(single.embedding.shape(), (Shape{1, cfg.embedding_dim}));
  EXPECT_THROW(encode(enc, cls, cfg, Tensor({2, cfg.signal_length + 1})), ShapeError);
}

TEST(Conditioner, BatchRowsAreIndependent) {
  const EncoderConfig cfg;
  Rng r(3);
  const EncoderParams enc = init_encoder(cfg, r);
  const ClassifierParams cls = init_classifier(cfg, r);
  const Tensor y = random_tensor(r, {3, cfg.signal_length});
  const auto batch = encode(enc, cls, cfg, y);
  const auto one = encode(enc, cls, cfg, Tensor({1, cfg.signal_length}, std::vector<double>(
      y.data().begin() + cfg.signal_length, y.data().begin() + 2 * cfg.signal_length)));
  for (std::size_t j = 0; j < cfg.embedding_dim; ++j)
    EXPECT_NEAR(batch.embedding[cfg.embedding_dim + j], one.embedding[j], 1e-12);
}

TEST(Conditioner, NcLossExamples) {
  ConditionerOutput out;
  out.probs = Tensor({1, 10}, std::vector<double>(10, 0.1));
  const int label = 4;
  EXPECT_NEAR(nc_loss(out, std::span<const int>(&label, 1)).item(), std::log(10.0), 1e-12);

  std::vector<double> onehot(10, 1e-30);
  onehot[4] = 1.0;
  out.probs = Tensor({1, 10}, onehot);
  EXPECT_NEAR(nc_loss(out, std::span<const int>(&label, 1)).item(), 0.0, 1e-12);

  out.probs = Tensor({2, 2}, {0.3, 0.7, 0.3, 0.7});
  const std::vector<int> labels{0, 0};
  EXPECT_NEAR(nc_loss(out, labels).item(), -std::log(0.3), 1e-12);

  const std::vector<int> bad{0, 2};
  EXPECT_THROW(nc_loss(out, bad), std::out_of_range);
  const std::vector<int> short_labels{0};
  EXPECT_THROW(nc_loss(out, short_labels), ShapeError);
}

TEST(Conditioner, PredictedClassesAreArgmax) {
  ConditionerOutput out;
  out.probs = Tensor({2, 3}, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3});
  EXPECT_EQ(predicted_classes(out), (std::vector<int>{1, 0}));
}

TEST(Conditioner, EncodeCallCounter) {
  const EncoderConfig cfg = small_encoder();
  Rng r(4);
  const EncoderParams enc = init_encoder(cfg, r);
  const ClassifierParams cls = init_classifier(cfg, r);
  const auto before = encode_call_count();
  encode(enc, cls, cfg, Tensor({2, cfg.signal_length}));
  encode(enc, cls, cfg, Tensor({2, cfg.signal_length}));
  EXPECT_EQ(encode_call_count() - before, 2u);
}

TEST(Inject, InjectModeNames) {
  for (auto m : {InjectMode::addition, InjectMode::concat, InjectMode::cross_attn})
    EXPECT_EQ(parse_inject_mode(to_string(m)), m);
  EXPECT_THROW(parse_inject_mode("film"), std::invalid_argument);
}

TEST(Inject, AdditionWithZeroEmbeddingIsIdentity) {
  Rng r(5);
  const InjectParams p = init_inject(InjectMode::addition, 8, 4, r);
  const Tensor h = random_tensor(r, {6, 8});
  EXPECT_EQ(inject(p, h, Tensor({2, 4}), 3).values(), h.values());
}

TEST(Inject, ConcatWidthAndValue) {
  Rng r(6);
  const InjectParams p = init_inject(InjectMode::concat, 8, 4, r);
  EXPECT_EQ(p.proj.in_features(), 12u);
  EXPECT_EQ(p.proj.out_features(), 8u);
  const Tensor h = random_tensor(r, {6, 8}), e = random_tensor(r, {2, 4});
  const Tensor out = inject(p, h, e, 3);
  EXPECT_EQ(out.shape(), (Shape{6, 8}));
  // Row 3 is token 1 of sample 1.
  for (std::size_t j = 0; j < 8; ++j) {
    double acc = p.proj.bias[j];
    for (std::size_t i = 0; i < 8; ++i) acc += h[3 * 8 + i] * p.proj.weight[i * 8 + j];
    for (std::size_t i = 0; i < 4; ++i) acc += e[4 + i] * p.proj.weight[(8 + i) * 8 + j];
    EXPECT_NEAR(out[3 * 8 + j], acc, 1e-12);
  }
}

TEST(Inject, CrossAttentionOverOneTokenAddsProjectedValue) {
  Rng r(7);
  const InjectParams p = init_inject(InjectMode::cross_attn, 8, 4, r);
  const Tensor h = random_tensor(r, {6, 8}), e = random_tensor(r, {2, 4});
  const Tensor out = inject(p, h, e, 3);
  for (std::size_t b = 0; b < 2; ++b) {
    const Tensor eb({1, 4}, std::vector<double>(e.data().begin() + 4 * b, e.data().begin() + 4 * b + 4));
    const Tensor delta = apply(p.out, apply(p.value, eb));
    for (std::size_t tok = 0; tok < 3; ++tok)
      for (std::size_t j = 0; j < 8; ++j)
        EXPECT_NEAR(out[(tok * 2 + b) * 8 + j], h[(tok * 2 + b) * 8 + j] + delta[j], 1e-12);
  }
}

TEST(Inject, ShapeErrors) {
  Rng r(8);
  const InjectParams p = init_inject(InjectMode::concat, 8, 4, r);
  EXPECT_THROW(inject(p, Tensor({5, 8}), Tensor({2, 4}), 3), ShapeError);
  EXPECT_THROW(inject(p, Tensor({6, 8}), Tensor({2, 5}), 3), ShapeError);
}

class InjectGradient : public ::testing::TestWithParam<InjectMode> {};

TEST_P(InjectGradient, MatchesCentralDifferences) {
  Rng r(9);
  const InjectParams base = init_inject(GetParam(), 5, 3, r);
  std::vector<Tensor> inputs{random_tensor(r, {4, 5}), random_tensor(r, {2, 3})};
  std::vector<std::string> names{"hidden", "embedding"};
  visit(base, "inject", [&](const std::string& n, const Tensor& t) {
    inputs.push_back(t);
    names.push_back(n);
  });
  const Tensor w = random_tensor(r, {4, 5});
  auto f = [&](const std::vector<Tensor>& v) {
    InjectParams p = base;
    std::size_t i = 2;
    visit(p, "inject", [&](const std::string&, Tensor& t) { t = v.at(i++); });
    return sum(mul(tanh(inject(p, v[0], v[1], 2)), w));
  };
  const auto res = check_gradients(f, inputs, r, 32, 1e-5, names);
  EXPECT_LT(res.worst, 1e-4) << res.worst_input;
}

INSTANTIATE_TEST_SUITE_P(Modes, InjectGradient,
                         ::testing::Values(InjectMode::addition, InjectMode::concat, InjectMode::cross_attn),
                         [](const auto& info) {
                           std::string s = to_string(info.param);
                           for (char& c : s) if (c == '-') c = '_';
                           return s;
                         });

TEST(ConditionerGradient, EncoderAndClassifierMatchCentralDifferences) {
  const EncoderConfig cfg = small_encoder();
  Rng r(10);
  const EncoderParams enc = init_encoder(cfg, r);
  const ClassifierParams cls = init_classifier(cfg, r);
  const Tensor y = random_tensor(r, {2, cfg.signal_length});
  const std::vector<int> labels{0, 2};
  const Tensor w = random_tensor(r, {2, cfg.embedding_dim});
  auto f = [&](const std::vector<Tensor>& v) {
    EncoderParams e = enc;
    ClassifierParams c = cls;
    assign(e, c, v);
    const auto out = encode(e, c, cfg, y);
    return add(nc_loss(out, labels), sum(mul(out.embedding, w)));
  };
  const auto res = check_gradients(f, encoder_parameters(enc, cls), r, 16, 1e-5, encoder_names(enc, cls));
  EXPECT_LT(res.worst, 1e-4) << res.worst_input;
}

TEST(Conditioner, TrainedEmbeddingsClusterByClass) {
  // Two classes: low-frequency vs high-frequency sinusoids with random phase.
  EncoderConfig cfg = small_encoder();
  cfg.signal_length = 64;
  cfg.frame = 16;
  cfg.hop = 8;
  cfg.model_dim = 8;
  cfg.embedding_dim = 6;
  cfg.n_classes = 2;
  Rng r(11);
  EncoderParams enc = init_encoder(cfg, r);
  ClassifierParams cls = init_classifier(cfg, r);

  auto batch = [&](std::size_t n, std::vector<int>& labels) {
    Tensor y({n, cfg.signal_length});
    labels.assign(n, 0);
    for (std::size_t b = 0; b < n; ++b) {
      labels[b] = static_cast<int>(b % 2);
      const double f = labels[b] == 0 ? 1.5 : 11.0, phase = r.uniform(0, 6.283);
      for (std::size_t i = 0; i < cfg.signal_length; ++i)
        y.data()[b * cfg.signal_length + i] =
            0.5 * std::sin(6.283185307 * f * double(i) / double(cfg.signal_length) + phase) + 0.05 * r.normal();
    }
    return y;
  };

  std::vector<Tensor> params = encoder_parameters(enc, cls);
  const double lr = 0.05;
  for (int step = 0; step < 150; ++step) {
    std::vector<int> labels;
    const Tensor y = batch(16, labels);
    Tape tape;
    std::vector<Tensor> tracked;
    for (const Tensor& p : params) tracked.push_back(tape.watch(p));
    EncoderParams e = enc;
    ClassifierParams c = cls;
    assign(e, c, tracked);
    const auto g = tape.backward(nc_loss(encode(e, c, cfg, y), labels));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const Tensor d = *g.of(tracked[k]);
      for (std::size_t i = 0; i < params[k].size(); ++i) params[k].data()[i] -= lr * d[i];
    }
  }
  assign(enc, cls, params);

  std::vector<int> labels;
  const Tensor emb = encode(enc, cls, cfg, batch(40, labels)).embedding;
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t a = 0; a < 40; ++a)
    for (std::size_t b = a + 1; b < 40; ++b) {
      if (labels[a] == labels[b]) {
        intra += cosine(emb, a, b);
        ++n_intra;
      } else {
        inter += cosine(emb, a, b);
        ++n_inter;
      }
    }
  EXPECT_GT(intra / n_intra, inter / n_inter);
}
