#include <gtest/gtest.h>

#include <cmath>

#include "nase/model.hpp"
#include "support.hpp"

using namespace nase;
using nase::testing::check_gradients;
using nase::testing::random_tensor;

namespace {

DenoiserConfig small_denoiser(InjectMode mode) {
  DenoiserConfig c;
  c.signal_length = 24;
  c.frame = 8;
  c.hidden = 5;
  c.blocks = 2;
  c.time_dim = 4;
  c.embedding_dim = 3;
  c.steps = 10;
  c.inject = mode;
  return c;
}

std::vector<Tensor> params_of(const DenoiserParams& p, std::vector<std::string>* names = nullptr) {
  std::vector<Tensor> out;
  visit(p, "denoiser", [&](const std::string& n, const Tensor& t) {
    out.push_back(t);
    if (names) names->push_back(n);
  });
  return out;
}

DenoiserParams with(DenoiserParams p, const std::vector<Tensor>& v, std::size_t offset) {
  std::size_t i = offset;
  visit(p, "denoiser", [&](const std::string&, Tensor& t) { t = v.at(i++); });
  return p;
}

}  // namespace

TEST(Denoiser, OutputShape) {
  const DenoiserConfig cfg;
  Rng r(1);
  const DenoiserParams p = init_denoiser(cfg, r);
  const Tensor x = random_tensor(r, {3, 256}), y = random_tensor(r, {3, 256}), e = random_tensor(r, {3, 64});
  const std::vector<int> steps{1, 25, 50};
  EXPECT_EQ(predict_eps(p, cfg, x, y, steps, &e).shape(), (Shape{3, 256}));
  EXPECT_EQ(predict_eps(p, cfg, x, y, steps, nullptr).shape(), (Shape{3, 256}));
}

TEST(Denoiser, AdditionWithZeroEmbeddingEqualsUnconditionedPass) {
  const DenoiserConfig cfg;
  Rng r(2);
  const DenoiserParams p = init_denoiser(cfg, r);
  const Tensor x = random_tensor(r, {2, 256}), y = random_tensor(r, {2, 256});
  const std::vector<int> steps{3, 40};
  const Tensor zero({2, 64});
  EXPECT_EQ(predict_eps(p, cfg, x, y, steps, &zero).values(), predict_eps(p, cfg, x, y, steps, nullptr).values());
}

TEST(Denoiser, BatchRowsAreIndependent) {
  const DenoiserConfig cfg = small_denoiser(InjectMode::concat);
  Rng r(3);
  const DenoiserParams p = init_denoiser(cfg, r);
  const Tensor x = random_tensor(r, {3, 24}), y = random_tensor(r, {3, 24}), e = random_tensor(r, {3, 3});
  const std::vector<int> steps{2, 5, 9};
  const Tensor full = predict_eps(p, cfg, x, y, steps, &e);
  const std::vector<int> one_step{5};
  const Tensor one = predict_eps(p, cfg, slice_rows(x, 1, 2), slice_rows(y, 1, 2), one_step, &(const Tensor&)slice_rows(e, 1, 2));
  for (std::size_t i = 0; i < 24; ++i) EXPECT_NEAR(full[24 + i], one[i], 1e-12);
}

TEST(Denoiser, Errors) {
  const DenoiserConfig cfg = small_denoiser(InjectMode::addition);
  Rng r(4);
  const DenoiserParams p = init_denoiser(cfg, r);
  const Tensor x({2, 24});
  const std::vector<int> steps{1, 2}, bad{0, 2}, short_steps{1};
  EXPECT_THROW(predict_eps(p, cfg, x, Tensor({2, 16}), steps, nullptr), ShapeError);
  EXPECT_THROW(predict_eps(p, cfg, x, x, short_steps, nullptr), ShapeError);
  EXPECT_THROW(predict_eps(p, cfg, x, x, bad, nullptr), std::out_of_range);
  const Tensor wrong_emb({2, 4});
  EXPECT_THROW(predict_eps(p, cfg, x, x, steps, &wrong_emb), ShapeError);
}

TEST(Denoiser, TimeEmbeddingsAreDistinct) {
  std::vector<int> steps(50);
  for (int t = 0; t < 50; ++t) steps[t] = t + 1;
  const Tensor te = time_embedding(steps, 64);
  for (std::size_t a = 0; a < 50; ++a)
    for (std::size_t b = a + 1; b < 50; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < 64; ++j) d2 += (te[a * 64 + j] - te[b * 64 + j]) * (te[a * 64 + j] - te[b * 64 + j]);
      EXPECT_GT(d2, 1e-6) << a << " " << b;
    }
}

TEST(Denoiser, DiffLossExamples) {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(diff_loss(a, a).item(), 0.0);
  EXPECT_DOUBLE_EQ(diff_loss(a, shift(a, 1.0)).item(), 1.0);
  const Tensor b({2, 3}, {0, 1, -1, 2, 2, 2});
  const Tensor a_perm({2, 3}, {4, 5, 6, 1, 2, 3}), b_perm({2, 3}, {2, 2, 2, 0, 1, -1});
  EXPECT_DOUBLE_EQ(diff_loss(a, b).item(), diff_loss(a_perm, b_perm).item());
  EXPECT_THROW(diff_loss(Tensor(), Tensor()), std::invalid_argument);
}

TEST(Denoiser, DefaultModelFitsParameterBudget) {
  for (auto mode : {InjectMode::addition, InjectMode::concat, InjectMode::cross_attn}) {
    ModelConfig cfg;
    cfg.denoiser.inject = mode;
    const Model m = init_model(cfg, Rng(1));
    EXPECT_LE(parameter_count(m), 100'000u) << to_string(mode);
    EXPECT_LT(denoiser_parameter_count(m), parameter_count(m));
  }
}

class DenoiserGradient : public ::testing::TestWithParam<InjectMode> {};

TEST_P(DenoiserGradient, MatchesCentralDifferences) {
  const DenoiserConfig cfg = small_denoiser(GetParam());
  Rng r(5);
  const DenoiserParams base = init_denoiser(cfg, r);
  const Tensor x = random_tensor(r, {2, 24}), y = random_tensor(r, {2, 24}), target = random_tensor(r, {2, 24});
  const std::vector<int> steps{3, 8};
  std::vector<std::string> names{"embedding"};
  std::vector<Tensor> inputs{random_tensor(r, {2, 3})};
  for (const Tensor& t : params_of(base, &names)) inputs.push_back(t);
  // A smooth squared loss keeps the check away from the kinks of the L1 loss.
  auto f = [&](const std::vector<Tensor>& v) {
    const Tensor d = sub(predict_eps(with(base, v, 1), cfg, x, y, steps, &v[0]), target);
    return sum(mul(d, d));
  };
  const auto res = check_gradients(f, inputs, r, 24, 1e-5, names);
  EXPECT_LT(res.worst, 1e-4) << res.worst_input;
}

INSTANTIATE_TEST_SUITE_P(Modes, DenoiserGradient,
                         ::testing::Values(InjectMode::addition, InjectMode::concat, InjectMode::cross_attn),
                         [](const auto& info) {
                           std::string s = to_string(info.param);
                           for (char& c : s) if (c == '-') c = '_';
                           return s;
                         });
