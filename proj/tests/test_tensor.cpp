#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>

#include "coper/tensor.hpp"

using namespace coper;

namespace {

Tensor rand_t(Shape s, std::mt19937_64& rng, bool grad = true, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(shape_numel(s));
  for (double& x : v) x = d(rng);
  return Tensor::from(std::move(s), std::move(v), grad);
}

// Largest elementwise relative error between backward() and central
// differences of `f` with respect to `x`.
double fd_error(const std::function<Tensor()>& f, Tensor x, double h = 1e-6) {
  x.zero_grad();
  f().backward();
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double saved = x.data()[i];
    x.mutable_data()[i] = saved + h;
    const double up = f().item();
    x.mutable_data()[i] = saved - h;
    const double down = f().item();
    x.mutable_data()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(numeric - analytic[i]) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

Tensor weighted_sum(const Tensor& y, unsigned salt) {
  std::mt19937_64 rng(1000 + salt);
  return sum(mul(y, rand_t(y.shape(), rng, false)));
}

}  // namespace

TEST(Tensor, FactoriesAndShape) {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.dim(-1), 3u);
  EXPECT_DOUBLE_EQ(t.at({1, 2}), 6.0);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_EQ(Tensor::scalar(2.5).shape(), Shape{});
  EXPECT_DOUBLE_EQ(Tensor::full({2}, 7.0).data()[1], 7.0);
}

TEST(Tensor, MatmulExamples) {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(matmul(eye, m).to_vector(), (std::vector<double>{1, 2, 3, 4}));
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  EXPECT_EQ(matmul(m, b).to_vector(), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Tensor, MatmulShapeErrorNamesBothShapes) {
  Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4, 2)"), std::string::npos) << msg;
  }
}

TEST(Tensor, MatmulGradIsOnesTimesBTransposed) {
  std::mt19937_64 rng(11);
  Tensor a = rand_t({3, 4}, rng), b = rand_t({4, 2}, rng, false);
  sum(matmul(a, b)).backward();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 4; ++p) {
      const double expected = b.at({p, 0}) + b.at({p, 1});
      EXPECT_NEAR(a.grad()[i * 4 + p], expected, 1e-14);
    }
  EXPECT_LT(fd_error([&] { return sum(matmul(a, b)); }, a), 1e-6);
}

TEST(Tensor, SoftmaxExamples) {
  auto s = softmax(Tensor::from({3}, {0, 0, 0}), 0).to_vector();
  for (double v : s) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  s = softmax(Tensor::from({2}, {1000, 1000}), 0).to_vector();
  EXPECT_EQ(s, (std::vector<double>{0.5, 0.5}));
  s = softmax(Tensor::from({2}, {0, std::log(3.0)}), 0).to_vector();
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Tensor, SoftmaxRejectsNaNAndAllMasked) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax(Tensor::from({2}, {0, nan}), 0), NumericError);
  EXPECT_THROW(softmax(Tensor::from({2}, {-inf, -inf}), 0), NumericError);
  EXPECT_THROW(softmax(Tensor::from({2}, {inf, 0}), 0), NumericError);
  auto s = softmax(Tensor::from({2}, {-inf, 3.0}), 0).to_vector();
  EXPECT_EQ(s, (std::vector<double>{0.0, 1.0}));
}

TEST(Tensor, SoftmaxSumsToOneProperty) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + trial % 5, cols = 1 + trial % 13;
    Tensor x = rand_t({rows, cols}, rng, false, -50.0, 50.0);
    const int axis = trial % 2;
    auto y = softmax(x, axis);
    const std::size_t outer = axis == 0 ? cols : rows;
    const std::size_t inner = axis == 0 ? rows : cols;
    for (std::size_t o = 0; o < outer; ++o) {
      double total = 0.0;
      for (std::size_t i = 0; i < inner; ++i) total += axis == 0 ? y.at({i, o}) : y.at({o, i});
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Tensor, BackwardExamples) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  sum(mul(x, x)).backward();
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));

  Tensor w = Tensor::from({1, 3}, {0, 0, 0}, true);
  Tensor xv = Tensor::from({3, 1}, {1.0, -2.0, 0.5});
  sum(sigmoid(matmul(w, xv))).backward();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 0.25 * xv.data()[i]);
}

TEST(Tensor, BackwardRequiresScalar) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(mul(x, x).backward(), ShapeError);
}

TEST(Tensor, RepeatedBackwardAccumulatesIntoLeaves) {
  Tensor x = Tensor::from({2}, {1, 3}, true);
  Tensor loss = sum(mul(x, x));
  loss.backward();
  loss.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 12.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Tensor, FanOutSumsBothContributions) {
  Tensor x = Tensor::from({2}, {0.5, -1.5}, true);
  Tensor y = tanh(x);
  Tensor loss = add(sum(scale(y, 3.0)), sum(mul(y, y)));
  loss.backward();
  for (std::size_t i = 0; i < 2; ++i) {
    const double t = std::tanh(x.data()[i]);
    EXPECT_NEAR(x.grad()[i], (3.0 + 2.0 * t) * (1.0 - t * t), 1e-14);
  }
}

TEST(Tensor, EveryReachableRequiresGradTensorHasGrad) {
  std::mt19937_64 rng(13);
  Tensor a = rand_t({2, 3}, rng), b = rand_t({3, 2}, rng);
  Tensor c = rand_t({2, 2}, rng, false);
  Tensor m = matmul(a, b);
  Tensor h = tanh(m);
  Tensor z = mul(h, c);
  sum(z).backward();
  for (const Tensor* t : {&a, &b, &m, &h, &z}) {
    ASSERT_TRUE(t->has_grad());
    EXPECT_EQ(t->grad().size(), t->numel());
  }
  EXPECT_FALSE(c.has_grad());
}

TEST(Tensor, ResultsRecordParentsOnlyWhenNeeded) {
  Tensor a = Tensor::from({2}, {1, 2}), b = Tensor::from({2}, {3, 4});
  EXPECT_FALSE(add(a, b).requires_grad());
  Tensor c = Tensor::from({2}, {1, 1}, true);
  Tensor d = add(a, c);
  EXPECT_TRUE(d.requires_grad());
  EXPECT_FALSE(d.is_leaf());
  NoGradGuard guard;
  EXPECT_FALSE(add(a, c).requires_grad());
}

TEST(Tensor, TapeIsTopologicallyOrdered) {
  std::mt19937_64 rng(14);
  Tensor x = rand_t({3}, rng), y = rand_t({3}, rng);
  Tensor u = mul(x, y), v = tanh(u), w = add(u, v);
  Tensor loss = sum(mul(w, v));
  const GradTape tape = GradTape::record(loss);
  const auto ids = tape.node_ids();
  const auto parents = tape.parent_ids();
  ASSERT_EQ(ids.size(), parents.size());
  std::map<const void*, std::size_t> pos;
  for (std::size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = i;
  EXPECT_EQ(ids.back(), loss.id());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (const void* p : parents[i]) {
      ASSERT_TRUE(pos.count(p));
      EXPECT_LT(pos[p], i);
    }
  }
  EXPECT_EQ(ids.size(), 7u);  // x, y, u, v, w, w*v, sum
}

TEST(Tensor, BroadcastingOverLeadingDims) {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2}, {10, 20});
  EXPECT_EQ(add(a, b).to_vector(), (std::vector<double>{11, 22, 13, 24}));
  EXPECT_EQ(sub(b, a).to_vector(), (std::vector<double>{9, 18, 7, 16}));
  EXPECT_THROW(add(a, Tensor::zeros({3})), ShapeError);
}

TEST(Tensor, ShapeOps) {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(transpose(x).to_vector(), (std::vector<double>{1, 4, 2, 5, 3, 6}));
  EXPECT_EQ(slice(x, 1, 1, 3).to_vector(), (std::vector<double>{2, 3, 5, 6}));
  EXPECT_EQ(concat({x, x}, 0).shape(), (Shape{4, 3}));
  EXPECT_EQ(sum(x, 0).to_vector(), (std::vector<double>{5, 7, 9}));
  EXPECT_EQ(mean(x, 1, true).shape(), (Shape{2, 1}));
  EXPECT_EQ(expand(x, {4}).shape(), (Shape{4, 2, 3}));
  EXPECT_THROW(reshape(x, {4}), ShapeError);
  EXPECT_THROW(slice(x, 1, 2, 4), ShapeError);
  BoolMask mask{{2, 3}, {1, 0, 0, 0, 0, 1}};
  EXPECT_EQ(masked_fill(x, mask, -1.0).to_vector(), (std::vector<double>{-1, 2, 3, 4, 5, -1}));
  Tensor other = Tensor::full({2, 3}, 0.0);
  EXPECT_EQ(select_rows({0, 1}, x, other).to_vector(), (std::vector<double>{0, 0, 0, 4, 5, 6}));
  Tensor seq = Tensor::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_EQ(take_steps(seq, {1, 0}).to_vector(), (std::vector<double>{3, 4, 5, 6}));
}

// Each primitive is checked against central differences at 10 random points.
TEST(Tensor, PrimitiveGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(15);
  struct Case {
    const char* name;
    std::function<Tensor(const Tensor&)> op;
    Shape shape;
    bool away_from_zero;
  };
  Tensor other = rand_t({3, 4}, rng, false);
  Tensor row = rand_t({4}, rng, false);
  Tensor right = rand_t({4, 2}, rng, false);
  BoolMask mask{{3, 4}, {0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0}};
  const std::vector<Case> cases{
      {"add", [&](const Tensor& x) { return add(x, other); }, {3, 4}, false},
      {"add row", [&](const Tensor& x) { return add(x, row); }, {3, 4}, false},
      {"sub", [&](const Tensor& x) { return sub(other, x); }, {3, 4}, false},
      {"mul", [&](const Tensor& x) { return mul(x, other); }, {3, 4}, false},
      {"mul self", [&](const Tensor& x) { return mul(x, x); }, {3, 4}, false},
      {"scale", [&](const Tensor& x) { return scale(x, -2.5); }, {3, 4}, false},
      {"exp", [&](const Tensor& x) { return exp(x); }, {3, 4}, false},
      {"tanh", [&](const Tensor& x) { return tanh(x); }, {3, 4}, false},
      {"sigmoid", [&](const Tensor& x) { return sigmoid(x); }, {3, 4}, false},
      {"relu", [&](const Tensor& x) { return relu(x); }, {3, 4}, true},
      {"sum axis", [&](const Tensor& x) { return sum(x, 0); }, {3, 4}, false},
      {"mean axis", [&](const Tensor& x) { return mean(x, 1, true); }, {3, 4}, false},
      {"transpose", [&](const Tensor& x) { return transpose(x); }, {3, 4}, false},
      {"reshape", [&](const Tensor& x) { return reshape(x, {2, 6}); }, {3, 4}, false},
      {"concat", [&](const Tensor& x) { return concat({other, x}, 1); }, {3, 4}, false},
      {"slice", [&](const Tensor& x) { return slice(x, 0, 1, 3); }, {3, 4}, false},
      {"matmul", [&](const Tensor& x) { return matmul(x, right); }, {3, 4}, false},
      {"matmul_bt", [&](const Tensor& x) { return matmul_bt(other, x); }, {3, 4}, false},
      {"masked_fill", [&](const Tensor& x) { return masked_fill(x, mask, 0.0); }, {3, 4}, false},
      {"softmax", [&](const Tensor& x) { return softmax(x, -1); }, {3, 4}, false},
      {"softmax axis 0", [&](const Tensor& x) { return softmax(x, 0); }, {3, 4}, false},
  };
  unsigned salt = 0;
  for (const auto& c : cases) {
    for (int point = 0; point < 10; ++point) {
      Tensor x = rand_t(c.shape, rng);
      if (c.away_from_zero) {
        for (double& v : x.mutable_data()) v += v >= 0 ? 0.1 : -0.1;
      }
      ++salt;
      const double err = fd_error([&] { return weighted_sum(c.op(x), salt); }, x);
      EXPECT_LT(err, 1e-4) << c.name << " point " << point;
    }
  }
}

TEST(Tensor, ThreeLayerMlpGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(16);
  Tensor x = rand_t({5, 4}, rng, false);
  Tensor w1 = rand_t({4, 6}, rng), w2 = rand_t({6, 6}, rng), w3 = rand_t({6, 1}, rng);
  Tensor b1 = rand_t({6}, rng);
  auto loss = [&] {
    Tensor h = tanh(add(matmul(x, w1), b1));
    h = tanh(matmul(h, w2));
    return mean(mul(matmul(h, w3), matmul(h, w3)));
  };
  for (Tensor p : {w1, w2, w3, b1}) EXPECT_LT(fd_error(loss, p, 1e-5), 1e-4);
}

TEST(Tensor, DeepChainDestructsWithoutOverflow) {
  Tensor x = Tensor::from({1}, {0.0}, true);
  Tensor y = x;
  for (int i = 0; i < 200000; ++i) y = add_scalar(y, 1e-6);
  EXPECT_NEAR(y.item(), 0.2, 1e-9);
}
