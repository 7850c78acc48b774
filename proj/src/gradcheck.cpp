#include "coper/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "coper/attention.hpp"
#include "coper/data.hpp"
#include "coper/layers.hpp"
#include "coper/metrics.hpp"
#include "coper/models.hpp"
#include "coper/odeint.hpp"

namespace coper {

double gradient_error(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs,
                      double eps) {
  std::vector<Tensor> xs = inputs;
  for (auto& x : xs) {
    if (!x.is_leaf() || !x.requires_grad()) {
      throw std::invalid_argument("gradient_error: inputs must be leaves that require grad");
    }
    x.zero_grad();
  }
  loss().backward();
  double worst = 0.0;
  for (auto& x : xs) {
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t j = 0; j < x.numel(); ++j) {
      const double saved = x.data()[j];
      double plus, minus;
      {
        NoGradGuard guard;
        x.mutable_data()[j] = saved + eps;
        plus = loss().item();
        x.mutable_data()[j] = saved - eps;
        minus = loss().item();
        x.mutable_data()[j] = saved;
      }
      const double numeric = (plus - minus) / (2.0 * eps);
      diff += (analytic[j] - numeric) * (analytic[j] - numeric);
      na += analytic[j] * analytic[j];
      nn += numeric * numeric;
    }
    diff = std::sqrt(diff);
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    worst = std::max(worst, scale < 1e-7 ? diff : diff / scale);
  }
  for (auto& x : xs) x.zero_grad();
  return worst;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Away from zero so relu and similar kinks are not straddled by the stencil.
Tensor signed_away_from_zero(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> dist(0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = sign(rng) ? dist(rng) : -dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Scalar probe sum(out * w) with a fixed random weighting.
Tensor probe(const Tensor& out, std::uint64_t salt) {
  Rng rng(0x9e3779b97f4a7c15ULL ^ salt);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(out.numel());
  for (double& x : w) x = dist(rng);
  return sum(mul(out, Tensor::from(out.shape(), std::move(w))));
}

std::vector<Tensor> tensors_of(const ParameterList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

struct Suite {
  std::vector<GradcheckCase> cases;

  void run(const std::string& name, double tolerance, const std::function<Tensor()>& loss,
           const std::vector<Tensor>& inputs) {
    GradcheckCase c;
    c.name = name;
    c.tolerance = tolerance;
    try {
      c.error = gradient_error(loss, inputs);
      c.passed = std::isfinite(c.error) && c.error < tolerance;
    } catch (const std::exception& e) {
      c.failure = e.what();
      c.passed = false;
    }
    cases.push_back(std::move(c));
  }
};

// Tiny irregular batch: n=2, t=6, i=3, hourly steps, different gaps per row.
IrregularSeriesBatch tiny_batch(Rng& rng) {
  std::vector<Sample> samples(2);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const std::vector<std::vector<std::uint8_t>> present{{1, 0, 1, 1, 0, 1}, {1, 1, 0, 0, 1, 0}};
  for (std::size_t r = 0; r < 2; ++r) {
    samples[r].id = "g" + std::to_string(r);
    samples[r].label = static_cast<int>(r);
    samples[r].present = present[r];
    for (std::size_t k = 0; k < 6; ++k) samples[r].times.push_back(static_cast<double>(k));
    for (std::size_t k = 0; k < 18; ++k) samples[r].values.push_back(dist(rng));
  }
  return make_batch(samples, 6, 3, 6.0);
}

CoperConfig tiny_coper() {
  CoperConfig cfg;
  cfg.features = 3;
  cfg.embed_dim = 4;
  cfg.ode_hidden = 6;
  cfg.ode_hidden_layers = 2;
  cfg.latent_dim = 5;
  cfg.head_dim = 4;
  cfg.grid_steps = 6;
  cfg.dropout = 0.5;
  return cfg;
}

}  // namespace

std::vector<GradcheckCase> run_gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  Suite s;
  constexpr double prim = 1e-4;
  constexpr double e2e = 1e-3;

  // ---- primitives
  {
    Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 4, 5}, rng);
    s.run("matmul", prim, [=] { return probe(matmul(a, b), 1); }, {a, b});
    Tensor w = random_tensor({4, 5}, rng);
    s.run("matmul shared rhs", prim, [=] { return probe(matmul(a, w), 2); }, {a, w});
    Tensor c = random_tensor({2, 5, 4}, rng);
    s.run("matmul_bt", prim, [=] { return probe(matmul_bt(a, c), 3); }, {a, c});
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({3, 4}, rng);
    Tensor bias = random_tensor({4}, rng);
    s.run("add broadcast", prim, [=] { return probe(add(a, bias), 4); }, {a, bias});
    s.run("sub broadcast", prim, [=] { return probe(sub(b, a), 5); }, {a, b});
    s.run("mul broadcast", prim, [=] { return probe(mul(a, b), 6); }, {a, b});
    s.run("scale, add_scalar", prim, [=] { return probe(add_scalar(scale(a, -1.7), 0.3), 7); },
          {a});
  }
  {
    Tensor x = signed_away_from_zero({3, 5}, rng);
    s.run("exp", prim, [=] { return probe(exp(x), 8); }, {x});
    s.run("tanh", prim, [=] { return probe(tanh(x), 9); }, {x});
    s.run("sigmoid", prim, [=] { return probe(sigmoid(x), 10); }, {x});
    s.run("relu", prim, [=] { return probe(relu(x), 11); }, {x});
  }
  {
    Tensor x = random_tensor({2, 3, 4}, rng);
    s.run("sum", prim, [=] { return scale(sum(x), 0.5); }, {x});
    s.run("mean", prim, [=] { return mean(mul(x, x)); }, {x});
    s.run("sum axis", prim, [=] { return probe(sum(x, 1), 12); }, {x});
    s.run("mean axis keepdim", prim, [=] { return probe(mean(x, -1, true), 13); }, {x});
    s.run("transpose", prim, [=] { return probe(transpose(x), 14); }, {x});
    s.run("reshape", prim, [=] { return probe(reshape(x, {6, 4}), 15); }, {x});
    Tensor y = random_tensor({2, 2, 4}, rng);
    s.run("concat", prim, [=] { return probe(concat({x, y}, 1), 16); }, {x, y});
    s.run("slice", prim, [=] { return probe(slice(x, 2, 1, 3), 17); }, {x});
    s.run("expand", prim, [=] { return probe(expand(y, {3}), 18); }, {y});
    BoolMask mask{{3, 4}, {1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 0}};
    s.run("masked_fill", prim, [=] { return probe(masked_fill(x, mask, 2.0), 19); }, {x});
    s.run("softmax", prim, [=] { return probe(softmax(x, -1), 20); }, {x});
    s.run("softmax with -inf", prim, [=] {
      return probe(softmax(masked_fill(x, mask, -INFINITY), -1), 21);
    }, {x});
    Tensor z = random_tensor({2, 3, 4}, rng);
    s.run("select_rows", prim, [=] { return probe(select_rows({0, 1}, x, z), 22); }, {x, z});
    s.run("take_steps", prim, [=] { return probe(take_steps(x, {2, 0}), 23); }, {x});
    s.run("dropout (training)", prim, [=] {
      Rng local(99);
      return probe(dropout(x, 0.5, {true, &local}), 24);
    }, {x});
    Tensor logits = random_tensor({6, 1}, rng, -3.0, 3.0);
    const std::vector<int> labels{0, 1, 1, 0, 1, 0};
    s.run("bce_with_logits", prim, [=] { return bce_with_logits(logits, labels); }, {logits});
  }

  // ---- layers
  {
    Linear lin(4, 3, rng);
    Tensor x = random_tensor({2, 5, 4}, rng);
    ParameterList p;
    lin.collect("", p);
    auto inputs = tensors_of(p);
    inputs.push_back(x);
    s.run("linear", prim, [=] { return probe(lin.forward(x), 25); }, inputs);
  }
  {
    Mlp mlp({4, 6, 6, 3}, 0.5, rng);
    Tensor x = random_tensor({5, 4}, rng);
    ParameterList p;
    mlp.collect("", p);
    auto inputs = tensors_of(p);
    inputs.push_back(x);
    s.run("mlp (training dropout)", prim, [=] {
      Rng local(5);
      return probe(mlp.forward(x, {true, &local}), 26);
    }, inputs);
  }
  {
    LstmStack lstm(3, 4, 2, 0.5, rng);
    Tensor x = random_tensor({2, 6, 3}, rng);
    ParameterList p;
    lstm.collect("", p);
    auto inputs = tensors_of(p);
    inputs.push_back(x);
    s.run("lstm stack", prim, [=] { return probe(lstm.forward(x, {}), 27); }, inputs);
    s.run("lstm stack (training dropout)", prim, [=] {
      Rng local(6);
      return probe(lstm.forward(x, {true, &local}), 28);
    }, inputs);
  }
  {
    AttentionLayer attn({5, 3, 4, 0.0, true}, rng);
    Tensor q = random_tensor({2, 6, 5}, rng), c = random_tensor({2, 6, 3}, rng);
    ParameterList p;
    attn.collect("", p);
    auto inputs = tensors_of(p);
    inputs.push_back(q);
    inputs.push_back(c);
    s.run("causal attention layer", prim, [=] { return probe(attn.forward(q, c, {}), 29); },
          inputs);
  }
  {
    PerceiverBlock block(6, 5, 3, 4, 0.5, true, rng);
    Tensor x = random_tensor({2, 6, 3}, rng);
    ParameterList p;
    block.collect("", p);
    auto inputs = tensors_of(p);
    inputs.push_back(x);
    s.run("perceiver block (training dropout)", prim, [=] {
      Rng local(7);
      return probe(block.forward(x, {true, &local}), 30);
    }, inputs);
  }
  {
    OdeDynamics f(3, 6, 2, 0.0, rng);
    Tensor z0 = random_tensor({2, 3}, rng);
    ParameterList p;
    f.collect("", p);
    auto inputs = tensors_of(p);
    inputs.push_back(z0);
    s.run("ode integrate rk4", prim, [=] {
      return probe(integrate(f, z0, 0.0, 0.3, OdeMethod::rk4, 0.04), 31);
    }, inputs);
    s.run("ode solve euler", prim, [=] {
      return probe(ode_solve(f, z0, 0.0, {OdeMethod::euler, 0.05, {0.1, 0.17, 0.3}}), 32);
    }, inputs);
    s.run("ode row-masked rk4", prim, [=] {
      RowMaskedDynamics masked(f, {1, 0});
      return probe(integrate(masked, z0, 0.2, 0.45, OdeMethod::rk4, 0.05), 33);
    }, inputs);
  }

  // ---- end to end
  {
    const IrregularSeriesBatch batch = tiny_batch(rng);
    auto coper = std::make_shared<CoperModel>(tiny_coper(), rng);
    const auto inputs = tensors_of(coper->parameters());
    s.run("coper end-to-end", e2e, [=] { return bce_with_logits(coper->forward(batch, {}), batch.labels); },
          inputs);
    s.run("coper end-to-end (training dropout)", e2e, [=] {
      Rng local(8);
      return bce_with_logits(coper->forward(batch, {true, &local}), batch.labels);
    }, inputs);
    s.run("coper mid-window query", e2e, [=] {
      return probe(coper->forward(batch, 0.55, {}), 34);
    }, inputs);

    LstmBaselineConfig lc;
    lc.features = 3;
    lc.hidden = 4;
    auto lstm = std::make_shared<LstmBaseline>(lc, rng);
    s.run("lstm baseline end-to-end", e2e, [=] {
      return bce_with_logits(lstm->forward(batch, {}), batch.labels);
    }, tensors_of(lstm->parameters()));

    PerceiverBaselineConfig pc;
    pc.features = 3;
    pc.embed_dim = 4;
    pc.latent_dim = 5;
    pc.head_dim = 4;
    pc.steps = 6;
    auto perceiver = std::make_shared<PerceiverBaseline>(pc, rng);
    s.run("perceiver baseline end-to-end", e2e, [=] {
      return bce_with_logits(perceiver->forward(batch, {}), batch.labels);
    }, tensors_of(perceiver->parameters()));
  }
  return s.cases;
}

}  // namespace coper
