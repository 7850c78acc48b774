#pragma once

#include <cstddef>

#include "coper/layers.hpp"
#include "coper/tensor.hpp"

namespace coper {

struct AttentionConfig {
  std::size_t query_dim = 64;
  std::size_t context_dim = 32;
  std::size_t head_dim = 128;
  double dropout_rate = 0.0;
  bool causal = true;
};

// Position (i, j) is allowed iff j <= i. Shape [lq, lk].
BoolMask causal_mask(std::size_t lq, std::size_t lk);

// softmax(q k^T / sqrt(dk) with disallowed positions at -inf) v, with dropout
// on the attention weights in training. `mask` is [lq, lk], true = allowed;
// a query row with no allowed key throws std::invalid_argument.
// When `weights_out` is non-null it receives the post-softmax, pre-dropout
// weights [b, lq, lk].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const BoolMask* mask, double dropout_rate, const ForwardContext& ctx,
                            Tensor* weights_out = nullptr);

// Single-head attention with query/key/value projections into head_dim, an
// output projection back to query_dim and a residual connection:
//   out = x_query + W_o attend(W_q x_query, W_k x_ctx, W_v x_ctx)
class AttentionLayer {
 public:
  AttentionLayer() = default;
  AttentionLayer(const AttentionConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& query_in, const Tensor& context, const ForwardContext& ctx,
                 Tensor* weights_out = nullptr) const;

  const AttentionConfig& config() const { return cfg_; }
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  AttentionConfig cfg_;
  Linear q_proj_, k_proj_, v_proj_, out_proj_;
};

// One cross-attention from a learned latent array onto the input, then one
// self-attention over the latents, both causally masked.
class PerceiverBlock {
 public:
  PerceiverBlock() = default;
  PerceiverBlock(std::size_t latent_count, std::size_t latent_dim, std::size_t input_dim,
                 std::size_t head_dim, double dropout_rate, bool causal, Rng& rng);

  // x [b, t', e] -> latents [b, t'', d]. With causal masking t'' must equal t'.
  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

  std::size_t latent_count() const { return latents_.dim(0); }
  std::size_t latent_dim() const { return latents_.dim(1); }
  const Tensor& initial_latents() const { return latents_; }
  Tensor& initial_latents() { return latents_; }
  const AttentionLayer& cross() const { return cross_; }
  const AttentionLayer& self() const { return self_; }

  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor latents_;  // [t'', d], shared across the batch
  AttentionLayer cross_;
  AttentionLayer self_;
  bool causal_ = true;
};

}  // namespace coper
