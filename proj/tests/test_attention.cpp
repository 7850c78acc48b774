#include <gtest/gtest.h>

#include <cmath>

#include "coper/attention.hpp"
#include "coper/gradcheck.hpp"

using namespace coper;

namespace {

Tensor rand_t(Shape s, Rng& rng, bool grad = false) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(shape_numel(s));
  for (double& x : v) x = d(rng);
  return Tensor::from(std::move(s), std::move(v), grad);
}

Tensor probe(const Tensor& y) {
  Rng rng(91);
  return sum(mul(y, rand_t(y.shape(), rng)));
}

}  // namespace

TEST(Attention, SingleKeyReturnsValue) {
  Rng rng(1);
  Tensor q = rand_t({2, 3, 4}, rng), k = rand_t({2, 1, 4}, rng), v = rand_t({2, 1, 5}, rng);
  Tensor out = scaled_dot_attention(q, k, v, nullptr, 0.0, {});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(out.at({b, i, j}), v.at({b, 0, j}));
}

TEST(Attention, IdenticalKeysGiveUniformWeights) {
  Rng rng(2);
  Tensor q = rand_t({1, 2, 3}, rng);
  Tensor k = Tensor::full({1, 4, 3}, 0.7);
  Tensor v = rand_t({1, 4, 2}, rng);
  Tensor w;
  scaled_dot_attention(q, k, v, nullptr, 0.0, {}, &w);
  for (double x : w.data()) EXPECT_NEAR(x, 0.25, 1e-15);
}

TEST(Attention, HandComputedTwoKeyCase) {
  Tensor q = Tensor::from({1, 1, 2}, {1, 0});
  Tensor k = Tensor::from({1, 2, 2}, {1, 0, 0, 1});
  Tensor v = Tensor::from({1, 2, 1}, {1, 0});
  const double out = scaled_dot_attention(q, k, v, nullptr, 0.0, {}).item();
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(out, std::exp(s) / (std::exp(s) + 1.0), 1e-15);
  EXPECT_NEAR(out, 0.6698, 5e-5);
}

TEST(Attention, WeightsSumToOnePerRow) {
  Rng rng(3);
  Tensor q = rand_t({3, 5, 4}, rng), k = rand_t({3, 5, 4}, rng), v = rand_t({3, 5, 2}, rng);
  const BoolMask mask = causal_mask(5, 5);
  Tensor w;
  scaled_dot_attention(scale(q, 20.0), k, v, &mask, 0.5, {}, &w);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = 0; i < 5; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        total += w.at({b, i, j});
        if (j > i) {
          EXPECT_EQ(w.at({b, i, j}), 0.0);
        }
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Attention, CausalMaskLayout) {
  EXPECT_EQ(causal_mask(1, 1).bits, (std::vector<std::uint8_t>{1}));
  EXPECT_EQ(causal_mask(3, 3).bits, (std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0, 1, 1, 1}));
}

TEST(Attention, FullyMaskedRowIsAnError) {
  Rng rng(4);
  Tensor q = rand_t({1, 2, 2}, rng), k = rand_t({1, 2, 2}, rng), v = rand_t({1, 2, 1}, rng);
  BoolMask mask{{2, 2}, {1, 0, 0, 0}};
  EXPECT_THROW(scaled_dot_attention(q, k, v, &mask, 0.0, {}), std::invalid_argument);
  BoolMask wrong{{3, 2}, std::vector<std::uint8_t>(6, 1)};
  EXPECT_THROW(scaled_dot_attention(q, k, v, &wrong, 0.0, {}), ShapeError);
  EXPECT_THROW(scaled_dot_attention(q, rand_t({1, 2, 3}, rng), v, nullptr, 0.0, {}), ShapeError);
}

TEST(Perceiver, OutputShape) {
  Rng rng(5);
  PerceiverBlock block(48, 64, 32, 128, 0.5, true, rng);
  EXPECT_EQ(block.forward(Tensor::zeros({4, 48, 32}), {}).shape(), (Shape{4, 48, 64}));
  EXPECT_THROW(block.forward(Tensor::zeros({4, 47, 32}), {}), std::invalid_argument);
  EXPECT_THROW(block.forward(Tensor::zeros({4, 48, 31}), {}), ShapeError);
  PerceiverBlock free(8, 16, 32, 16, 0.0, false, rng);
  EXPECT_EQ(free.forward(Tensor::zeros({2, 48, 32}), {}).shape(), (Shape{2, 8, 16}));
}

TEST(Perceiver, PerturbingLateStepLeavesEarlierLatentsBitIdentical) {
  Rng rng(6);
  PerceiverBlock block(12, 6, 4, 8, 0.0, true, rng);
  Tensor x = rand_t({2, 12, 4}, rng);
  const auto base = block.forward(x, {}).to_vector();
  for (std::size_t j = 0; j < 12; ++j) {
    std::vector<double> v = x.to_vector();
    for (std::size_t f = 0; f < 4; ++f) v[(1 * 12 + j) * 4 + f] += 3.0;
    const auto out = block.forward(Tensor::from({2, 12, 4}, v), {}).to_vector();
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t d = 0; d < 6; ++d) {
        const std::size_t other = (0 * 12 + i) * 6 + d;
        EXPECT_EQ(out[other], base[other]);  // other sample untouched
        const std::size_t idx = (1 * 12 + i) * 6 + d;
        if (i < j) {
          EXPECT_EQ(out[idx], base[idx]) << "latent " << i << " saw step " << j;
        }
      }
  }
}

TEST(Perceiver, BatchPermutationPermutesOutputs) {
  Rng rng(7);
  PerceiverBlock block(5, 4, 3, 4, 0.0, true, rng);
  Tensor x = rand_t({3, 5, 3}, rng);
  const auto base = block.forward(x, {}).to_vector();
  auto v = x.to_vector();
  std::vector<double> swapped(v.size());
  const std::size_t stride = 15, out_stride = 20;
  const std::size_t perm[3] = {2, 0, 1};
  for (std::size_t b = 0; b < 3; ++b)
    std::copy_n(v.begin() + perm[b] * stride, stride, swapped.begin() + b * stride);
  const auto out = block.forward(Tensor::from({3, 5, 3}, swapped), {}).to_vector();
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t e = 0; e < out_stride; ++e)
      EXPECT_EQ(out[b * out_stride + e], base[perm[b] * out_stride + e]);
}

TEST(Perceiver, ParameterNamesAndGradients) {
  Rng rng(8);
  PerceiverBlock block(4, 5, 3, 4, 0.0, true, rng);
  ParameterList p;
  block.collect("perceiver.", p);
  EXPECT_EQ(p.front().name, "perceiver.latents");
  EXPECT_EQ(p.size(), 1u + 8u + 8u);
  Tensor x = rand_t({2, 4, 3}, rng, true);
  std::vector<Tensor> inputs{x};
  for (auto& n : p) inputs.push_back(n.tensor);
  EXPECT_LT(gradient_error([&] { return probe(block.forward(x, {})); }, inputs), 1e-4);
}

TEST(AttentionLayer, ResidualWithZeroOutputProjection) {
  Rng rng(9);
  AttentionLayer layer({4, 3, 5, 0.0, true}, rng);
  ParameterList p;
  layer.collect("", p);
  for (auto& n : p) {
    if (n.name.rfind("out.", 0) == 0) {
      for (double& v : n.tensor.mutable_data()) v = 0.0;
    }
  }
  Tensor q = rand_t({2, 3, 4}, rng), c = rand_t({2, 3, 3}, rng);
  EXPECT_EQ(layer.forward(q, c, {}).to_vector(), q.to_vector());
}
