#include "coper/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "coper/data.hpp"

namespace coper {
namespace {

// Slack for mapping a normalized query time onto a grid index.
constexpr double kGridSlack = 1e-9;

Tensor last_step(const Tensor& seq) {
  const std::size_t n = seq.dim(0);
  const std::size_t t = seq.dim(1);
  const std::size_t d = seq.dim(2);
  return reshape(slice(seq, 1, t - 1, t), {n, d});
}

}  // namespace

// ---- ContinuousLatent --------------------------------------------------------------

std::size_t ContinuousLatent::anchor_index(double query_time) const {
  const std::size_t grid = grid_times.size();
  const double scaled = query_time * static_cast<double>(grid);
  const auto k = static_cast<std::size_t>(std::floor(scaled + kGridSlack));
  return std::min(k, grid - 1);
}

Tensor ContinuousLatent::at(double query_time, const ForwardContext& ctx) const {
  if (!(query_time >= 0.0 && query_time <= 1.0)) {
    throw std::invalid_argument("query_time must lie in [0, 1], got " + std::to_string(query_time));
  }
  const std::size_t k = anchor_index(query_time);
  const std::size_t n = anchors.dim(0);
  const std::size_t d = anchors.dim(2);
  Tensor z = reshape(slice(anchors, 1, k, k + 1), {n, d});
  const double anchor_time = grid_times[k];
  if (query_time - anchor_time <= kGridSlack / static_cast<double>(grid_times.size())) return z;
  const CoperConfig& cfg = model->config();
  return integrate(model->output_dynamics(), z, anchor_time, query_time, cfg.method,
                   cfg.effective_step(), ctx);
}

// ---- COPER -----------------------------------------------------------------------------

CoperModel::CoperModel(const CoperConfig& cfg, Rng& rng)
    : cfg_(cfg),
      embed_(cfg.features, cfg.embed_dim, rng),
      ode_in_(cfg.embed_dim, cfg.ode_hidden, cfg.ode_hidden_layers, cfg.dropout, rng),
      perceiver_(cfg.grid_steps, cfg.latent_dim, cfg.embed_dim, cfg.head_dim, cfg.dropout, true, rng),
      ode_out_(cfg.latent_dim, cfg.ode_hidden, cfg.ode_hidden_layers, cfg.dropout, rng),
      classifier_(cfg.latent_dim, 1, rng) {}

EmbeddedSeries CoperModel::embed(const IrregularSeriesBatch& batch) const {
  if (batch.values.rank() != 3 || batch.features() != cfg_.features) {
    throw ShapeError("coper: batch " + shape_str(batch.values.shape()) + " does not have " +
                     std::to_string(cfg_.features) + " features");
  }
  for (std::size_t r = 0; r < batch.size(); ++r) {
    bool any = false;
    for (std::size_t k = 0; k < batch.steps() && !any; ++k) any = batch.is_present(r, k);
    if (!any) {
      throw std::invalid_argument("embed: sample " + std::to_string(r) + " has no present step");
    }
  }
  EmbeddedSeries out;
  out.values = embed_.forward(batch.values);
  out.present = batch.present;
  out.times.resize(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    out.times[r].resize(batch.steps());
    for (std::size_t k = 0; k < batch.steps(); ++k) {
      out.times[r][k] = batch.times[r][k] / batch.window_hours;
    }
  }
  return out;
}

RegularGridSeries CoperModel::continuize_input(const EmbeddedSeries& emb,
                                               const ForwardContext& ctx) const {
  const std::size_t n = emb.values.dim(0);
  const std::size_t t = emb.values.dim(1);
  const std::size_t e = emb.values.dim(2);
  const std::size_t grid = cfg_.grid_steps;
  const double h = cfg_.effective_step();

  RegularGridSeries out;
  out.times.resize(grid);
  for (std::size_t k = 0; k < grid; ++k) {
    out.times[k] = static_cast<double>(k) / static_cast<double>(grid);
  }

  // Present observations per sample in time order.
  std::vector<std::vector<std::size_t>> observed(n);
  std::vector<double> events(out.times.begin(), out.times.end());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < t; ++k) {
      if (!emb.present[r * t + k]) continue;
      observed[r].push_back(k);
      if (emb.times[r][k] <= out.times.back()) events.push_back(emb.times[r][k]);
    }
    if (observed[r].empty()) {
      throw std::invalid_argument("continuize_input: sample " + std::to_string(r) +
                                  " has no present step");
    }
  }
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());

  std::vector<std::size_t> first(n);
  for (std::size_t r = 0; r < n; ++r) first[r] = observed[r].front();
  Tensor state = take_steps(emb.values, first);

  std::vector<std::uint8_t> started(n, 0);
  std::vector<std::size_t> cursor(n, 0);
  std::vector<Tensor> readouts(grid);
  std::size_t next_grid = 0;
  double now = events.front();

  for (double event : events) {
    std::vector<std::uint8_t> reset(n, 0);
    std::vector<std::size_t> reset_step(n, 0);
    bool any_reset = false;
    for (std::size_t r = 0; r < n; ++r) {
      while (cursor[r] < observed[r].size() && emb.times[r][observed[r][cursor[r]]] == event) {
        reset[r] = 1;
        reset_step[r] = observed[r][cursor[r]];
        ++cursor[r];
      }
      any_reset = any_reset || reset[r];
    }
    if (event > now) {
      // Skip the solve when every evolving row is overwritten at `event`.
      bool needed = false;
      for (std::size_t r = 0; r < n && !needed; ++r) needed = started[r] && !reset[r];
      if (needed) {
        RowMaskedDynamics dynamics(ode_in_, started);
        state = integrate(dynamics, state, now, event, cfg_.method, h, ctx);
      }
      now = event;
    }
    if (any_reset) {
      state = select_rows(reset, take_steps(emb.values, reset_step), state);
      for (std::size_t r = 0; r < n; ++r) started[r] = started[r] || reset[r];
    }
    if (next_grid < grid && event == out.times[next_grid]) {
      readouts[next_grid] = reshape(state, {n, 1, e});
      ++next_grid;
    }
    if (next_grid == grid) break;
  }
  out.values = concat(readouts, 1);
  return out;
}

ContinuousLatent CoperModel::encode(const RegularGridSeries& grid, const ForwardContext& ctx) const {
  ContinuousLatent latent;
  latent.anchors = perceiver_.forward(grid.values, ctx);
  latent.grid_times = grid.times;
  latent.model = this;
  return latent;
}

Tensor CoperModel::forward(const IrregularSeriesBatch& batch, double query_time,
                           const ForwardContext& ctx) const {
  if (!(query_time >= 0.0 && query_time <= 1.0)) {
    throw std::invalid_argument("query_time must lie in [0, 1], got " + std::to_string(query_time));
  }
  const ContinuousLatent latent = encode(continuize_input(embed(batch), ctx), ctx);
  return classifier_.forward(latent.at(query_time, ctx));
}

Tensor CoperModel::forward(const IrregularSeriesBatch& batch, const ForwardContext& ctx) const {
  return forward(batch, 1.0, ctx);
}

ParameterList CoperModel::parameters() const {
  ParameterList out;
  embed_.collect("embed.", out);
  ode_in_.collect("ode_in.", out);
  perceiver_.collect("perceiver.", out);
  ode_out_.collect("ode_out.", out);
  classifier_.collect("classifier.", out);
  return out;
}

// ---- LSTM baseline -------------------------------------------------------------------

LstmBaseline::LstmBaseline(const LstmBaselineConfig& cfg, Rng& rng)
    : cfg_(cfg),
      lstm_(cfg.features, cfg.hidden, cfg.layers, cfg.dropout, rng),
      classifier_(cfg.hidden, 1, rng) {}

Tensor LstmBaseline::forward_complete(const Tensor& x, const ForwardContext& ctx) const {
  return classifier_.forward(last_step(lstm_.forward(x, ctx)));
}

Tensor LstmBaseline::forward(const IrregularSeriesBatch& batch, const ForwardContext& ctx) const {
  return forward_complete(carry_forward(batch), ctx);
}

ParameterList LstmBaseline::parameters() const {
  ParameterList out;
  lstm_.collect("lstm.", out);
  classifier_.collect("classifier.", out);
  return out;
}

// ---- Perceiver baseline --------------------------------------------------------------

PerceiverBaseline::PerceiverBaseline(const PerceiverBaselineConfig& cfg, Rng& rng)
    : cfg_(cfg),
      embed_(cfg.features, cfg.embed_dim, rng),
      perceiver_(cfg.steps, cfg.latent_dim, cfg.embed_dim, cfg.head_dim, cfg.dropout, true, rng),
      classifier_(cfg.latent_dim, 1, rng) {}

Tensor PerceiverBaseline::forward_complete(const Tensor& x, const ForwardContext& ctx) const {
  return classifier_.forward(last_step(perceiver_.forward(embed_.forward(x), ctx)));
}

Tensor PerceiverBaseline::forward(const IrregularSeriesBatch& batch,
                                  const ForwardContext& ctx) const {
  return forward_complete(carry_forward(batch), ctx);
}

ParameterList PerceiverBaseline::parameters() const {
  ParameterList out;
  embed_.collect("embed.", out);
  perceiver_.collect("perceiver.", out);
  classifier_.collect("classifier.", out);
  return out;
}

// ---- factory -------------------------------------------------------------------------

ModelKind parse_model_kind(const std::string& name) {
  if (name == "coper") return ModelKind::coper;
  if (name == "lstm") return ModelKind::lstm;
  if (name == "perceiver") return ModelKind::perceiver;
  throw std::invalid_argument("unknown model '" + name + "' (expected coper, lstm or perceiver)");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::coper: return "coper";
    case ModelKind::lstm: return "lstm";
    case ModelKind::perceiver: return "perceiver";
  }
  return "unknown";
}

std::unique_ptr<SequenceClassifier> make_model(ModelKind kind, const ModelDims& dims, Rng& rng) {
  switch (kind) {
    case ModelKind::coper: {
      CoperConfig cfg;
      cfg.features = dims.features;
      cfg.grid_steps = dims.steps;
      cfg.dropout = dims.dropout;
      return std::make_unique<CoperModel>(cfg, rng);
    }
    case ModelKind::lstm: {
      LstmBaselineConfig cfg;
      cfg.features = dims.features;
      cfg.dropout = dims.dropout;
      return std::make_unique<LstmBaseline>(cfg, rng);
    }
    case ModelKind::perceiver: {
      PerceiverBaselineConfig cfg;
      cfg.features = dims.features;
      cfg.steps = dims.steps;
      cfg.dropout = dims.dropout;
      return std::make_unique<PerceiverBaseline>(cfg, rng);
    }
  }
  throw std::invalid_argument("unknown model kind");
}

std::size_t copy_matching_parameters(const ParameterList& from, ParameterList& to) {
  std::map<std::string, const Tensor*> source;
  for (const auto& p : from) source[p.name] = &p.tensor;
  std::size_t copied = 0;
  for (auto& p : to) {
    auto it = source.find(p.name);
    if (it == source.end()) continue;
    if (it->second->shape() != p.tensor.shape()) {
      throw ShapeError("parameter " + p.name + ": " + shape_str(it->second->shape()) + " vs " +
                       shape_str(p.tensor.shape()));
    }
    const auto src = it->second->data();
    std::copy(src.begin(), src.end(), p.tensor.mutable_data().begin());
    ++copied;
  }
  return copied;
}

}  // namespace coper
