#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "coper/attention.hpp"
#include "coper/layers.hpp"
#include "coper/odeint.hpp"
#include "coper/series.hpp"

namespace coper {

// Common interface: a batch of irregular series in, one raw logit per sample
// out ([n, 1]). The sigmoid lives in the loss.
class SequenceClassifier {
 public:
  virtual ~SequenceClassifier() = default;
  virtual std::string name() const = 0;
  virtual Tensor forward(const IrregularSeriesBatch& batch, const ForwardContext& ctx) const = 0;
  virtual ParameterList parameters() const = 0;
};

// Per-step embeddings with normalized observation times. Rows whose step is
// absent exist in `values` but are never read.
struct EmbeddedSeries {
  Tensor values;                              // [n, t, e]
  std::vector<std::vector<double>> times;     // normalized to [0, 1]
  std::vector<std::uint8_t> present;          // [n * t]
};

struct RegularGridSeries {
  Tensor values;                // [n, grid, e]
  std::vector<double> times;    // normalized grid times k / grid
};

class CoperModel;

// Perceiver latents anchored on the grid, queryable at any normalized time by
// evolving the nearest preceding anchor under the output dynamics.
struct ContinuousLatent {
  Tensor anchors;                 // [n, grid, d]
  std::vector<double> grid_times;
  const CoperModel* model = nullptr;

  // [n, d] at `query_time` in [0, 1].
  Tensor at(double query_time, const ForwardContext& ctx) const;
  // Index of the anchor used for `query_time`.
  std::size_t anchor_index(double query_time) const;
};

struct CoperConfig {
  std::size_t features = 76;
  std::size_t embed_dim = 32;
  std::size_t ode_hidden = 128;
  std::size_t ode_hidden_layers = 3;
  std::size_t latent_dim = 64;
  std::size_t head_dim = 128;
  std::size_t grid_steps = 48;
  double dropout = 0.5;
  OdeMethod method = OdeMethod::rk4;
  // Normalized-time step; 0 selects 1 / (4 * grid_steps).
  double step_size = 0.0;

  double effective_step() const {
    return step_size > 0.0 ? step_size : 1.0 / (4.0 * static_cast<double>(grid_steps));
  }
};

class CoperModel final : public SequenceClassifier {
 public:
  CoperModel(const CoperConfig& cfg, Rng& rng);

  std::string name() const override { return "coper"; }

  // Logits at the end of the observation window.
  Tensor forward(const IrregularSeriesBatch& batch, const ForwardContext& ctx) const override;
  Tensor forward(const IrregularSeriesBatch& batch, double query_time,
                 const ForwardContext& ctx) const;

  EmbeddedSeries embed(const IrregularSeriesBatch& batch) const;
  // Grid readout of the input trajectory. The state starts at the first
  // present embedding, evolves under the input dynamics and is replaced by
  // each observation's embedding at its timestamp.
  RegularGridSeries continuize_input(const EmbeddedSeries& emb, const ForwardContext& ctx) const;
  ContinuousLatent encode(const RegularGridSeries& grid, const ForwardContext& ctx) const;

  ParameterList parameters() const override;

  const CoperConfig& config() const { return cfg_; }
  Linear& embedding() { return embed_; }
  OdeDynamics& input_dynamics() { return ode_in_; }
  OdeDynamics& output_dynamics() { return ode_out_; }
  const OdeDynamics& output_dynamics() const { return ode_out_; }
  PerceiverBlock& perceiver() { return perceiver_; }
  Linear& classifier() { return classifier_; }
  const Linear& classifier() const { return classifier_; }

 private:
  CoperConfig cfg_;
  Linear embed_;
  OdeDynamics ode_in_;
  PerceiverBlock perceiver_;
  OdeDynamics ode_out_;
  Linear classifier_;
};

struct LstmBaselineConfig {
  std::size_t features = 76;
  std::size_t hidden = 50;
  std::size_t layers = 2;
  double dropout = 0.5;
};

// Carry-forward completion, stacked LSTM, linear head on the final hidden state.
class LstmBaseline final : public SequenceClassifier {
 public:
  LstmBaseline(const LstmBaselineConfig& cfg, Rng& rng);
  std::string name() const override { return "lstm"; }
  Tensor forward(const IrregularSeriesBatch& batch, const ForwardContext& ctx) const override;
  // Same head on an already complete [n, t, features] input.
  Tensor forward_complete(const Tensor& x, const ForwardContext& ctx) const;
  ParameterList parameters() const override;

  LstmStack& lstm() { return lstm_; }
  Linear& classifier() { return classifier_; }

 private:
  LstmBaselineConfig cfg_;
  LstmStack lstm_;
  Linear classifier_;
};

struct PerceiverBaselineConfig {
  std::size_t features = 76;
  std::size_t embed_dim = 32;
  std::size_t latent_dim = 64;
  std::size_t head_dim = 128;
  std::size_t steps = 48;
  double dropout = 0.5;
};

// Carry-forward completion, per-step embedding, causal Perceiver block,
// linear head on the last latent. No ODEs.
class PerceiverBaseline final : public SequenceClassifier {
 public:
  PerceiverBaseline(const PerceiverBaselineConfig& cfg, Rng& rng);
  std::string name() const override { return "perceiver"; }
  Tensor forward(const IrregularSeriesBatch& batch, const ForwardContext& ctx) const override;
  Tensor forward_complete(const Tensor& x, const ForwardContext& ctx) const;
  ParameterList parameters() const override;

  Linear& embedding() { return embed_; }
  PerceiverBlock& perceiver() { return perceiver_; }
  Linear& classifier() { return classifier_; }

 private:
  PerceiverBaselineConfig cfg_;
  Linear embed_;
  PerceiverBlock perceiver_;
  Linear classifier_;
};

enum class ModelKind { coper, lstm, perceiver };

ModelKind parse_model_kind(const std::string& name);
std::string model_kind_name(ModelKind kind);

struct ModelDims {
  std::size_t features = 76;
  std::size_t steps = 48;
  double dropout = 0.5;
};

// Default architecture for each model kind at the given data layout.
std::unique_ptr<SequenceClassifier> make_model(ModelKind kind, const ModelDims& dims, Rng& rng);

// Copies values for every parameter name present in both lists.
std::size_t copy_matching_parameters(const ParameterList& from, ParameterList& to);

}  // namespace coper
