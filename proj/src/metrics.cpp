#include "coper/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace coper {
namespace {

void check_labels(std::span<const int> labels) {
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != 0 && labels[k] != 1) {
      throw std::invalid_argument("label at index " + std::to_string(k) + " is " +
                                  std::to_string(labels[k]) + ", expected 0 or 1");
    }
  }
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor bce_with_logits(const Tensor& logits, std::span<const int> labels) {
  const bool column = logits.rank() == 2 && logits.dim(1) == 1;
  if (!(column || logits.rank() == 1) || logits.dim(0) != labels.size()) {
    throw ShapeError("bce_with_logits: logits " + shape_str(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw std::invalid_argument("bce_with_logits: empty batch");
  check_labels(labels);
  const auto x = logits.data();
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double sign = labels[k] == 1 ? 1.0 : -1.0;
    total += softplus(-sign * x[k]);
  }
  std::vector<int> y(labels.begin(), labels.end());
  return make_result({}, {total / n}, {logits}, [y = std::move(y), n](BackwardContext& bc) {
    if (!bc.needs_grad(0)) return;
    const double g = bc.grad_output()[0];
    const auto x = bc.parent_data(0);
    auto gx = bc.parent_grad(0);
    for (std::size_t k = 0; k < y.size(); ++k) {
      gx[k] += g * (stable_sigmoid(x[k]) - static_cast<double>(y[k])) / n;
    }
  });
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auroc: " + std::to_string(scores.size()) + " scores for " +
                                std::to_string(labels.size()) + " labels");
  }
  check_labels(labels);
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("auroc: NaN score");
  }
  // Rank-sum form of the pair count: sort once, give tied groups their mean rank.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j, doubled to stay in integers.
    const double twice_mean_rank = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positives += 1.0;
        rank_sum += twice_mean_rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw std::invalid_argument("auroc: needs both classes (positives " +
                                std::to_string(static_cast<long>(positives)) + ", negatives " +
                                std::to_string(static_cast<long>(negatives)) + ")");
  }
  // U = R_pos - P(P+1)/2, all quantities doubled; exact in double for n < 2^26.
  const double twice_u = rank_sum - positives * (positives + 1.0);
  return twice_u / (2.0 * positives * negatives);
}

}  // namespace coper
