#include "coper/attention.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace coper {

BoolMask causal_mask(std::size_t lq, std::size_t lk) {
  BoolMask mask{{lq, lk}, std::vector<std::uint8_t>(lq * lk, 0)};
  for (std::size_t i = 0; i < lq; ++i) {
    for (std::size_t j = 0; j <= i && j < lk; ++j) mask.bits[i * lk + j] = 1;
  }
  return mask;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const BoolMask* mask, double dropout_rate, const ForwardContext& ctx,
                            Tensor* weights_out) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 || q.dim(0) != k.dim(0) ||
      k.dim(0) != v.dim(0) || q.dim(2) != k.dim(2) || k.dim(1) != v.dim(1)) {
    throw ShapeError("attention: incompatible q " + shape_str(q.shape()) + ", k " +
                     shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  const std::size_t lq = q.dim(1);
  const std::size_t lk = k.dim(1);
  Tensor scores = scale(matmul_bt(q, k), 1.0 / std::sqrt(static_cast<double>(q.dim(2))));
  if (mask != nullptr) {
    if (mask->shape != Shape{lq, lk}) {
      throw ShapeError("attention: mask " + shape_str(mask->shape) + " for scores [" +
                       std::to_string(lq) + ", " + std::to_string(lk) + "]");
    }
    for (std::size_t i = 0; i < lq; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < lk && !any; ++j) any = mask->at(i * lk + j);
      if (!any) {
        throw std::invalid_argument("attention: mask forbids every key for query row " +
                                    std::to_string(i));
      }
    }
    scores = masked_fill(scores, mask->negated(), -std::numeric_limits<double>::infinity());
  }
  Tensor weights = softmax(scores, -1);
  if (weights_out != nullptr) *weights_out = weights;
  return matmul(dropout(weights, dropout_rate, ctx), v);
}

AttentionLayer::AttentionLayer(const AttentionConfig& cfg, Rng& rng)
    : cfg_(cfg),
      q_proj_(cfg.query_dim, cfg.head_dim, rng),
      k_proj_(cfg.context_dim, cfg.head_dim, rng),
      v_proj_(cfg.context_dim, cfg.head_dim, rng),
      out_proj_(cfg.head_dim, cfg.query_dim, rng) {
  if (cfg.head_dim == 0) throw std::invalid_argument("attention head_dim must be positive");
}

Tensor AttentionLayer::forward(const Tensor& query_in, const Tensor& context,
                               const ForwardContext& ctx, Tensor* weights_out) const {
  std::optional<BoolMask> mask;
  if (cfg_.causal) mask = causal_mask(query_in.dim(1), context.dim(1));
  Tensor attended = scaled_dot_attention(q_proj_.forward(query_in), k_proj_.forward(context),
                                         v_proj_.forward(context), mask ? &*mask : nullptr,
                                         cfg_.dropout_rate, ctx, weights_out);
  return add(query_in, out_proj_.forward(attended));
}

void AttentionLayer::collect(const std::string& prefix, ParameterList& out) const {
  q_proj_.collect(prefix + "q.", out);
  k_proj_.collect(prefix + "k.", out);
  v_proj_.collect(prefix + "v.", out);
  out_proj_.collect(prefix + "out.", out);
}

PerceiverBlock::PerceiverBlock(std::size_t latent_count, std::size_t latent_dim,
                               std::size_t input_dim, std::size_t head_dim, double dropout_rate,
                               bool causal, Rng& rng)
    : causal_(causal) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> init(latent_count * latent_dim);
  for (double& v : init) v = dist(rng);
  latents_ = Tensor::from({latent_count, latent_dim}, std::move(init), true);
  cross_ = AttentionLayer({latent_dim, input_dim, head_dim, dropout_rate, causal}, rng);
  self_ = AttentionLayer({latent_dim, latent_dim, head_dim, dropout_rate, causal}, rng);
}

Tensor PerceiverBlock::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (x.rank() != 3 || x.dim(2) != cross_.config().context_dim) {
    throw ShapeError("perceiver: input " + shape_str(x.shape()) + " is not [b, t, " +
                     std::to_string(cross_.config().context_dim) + "]");
  }
  if (causal_ && x.dim(1) != latent_count()) {
    throw std::invalid_argument("perceiver: causal masking needs latent count (" +
                                std::to_string(latent_count()) + ") equal to sequence length (" +
                                std::to_string(x.dim(1)) + ")");
  }
  Tensor z = expand(latents_, {x.dim(0)});
  z = cross_.forward(z, x, ctx);
  return self_.forward(z, z, ctx);
}

void PerceiverBlock::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "latents", latents_});
  cross_.collect(prefix + "cross.", out);
  self_.collect(prefix + "self.", out);
}

}  // namespace coper
