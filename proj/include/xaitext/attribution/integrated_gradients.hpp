#pragma once

#include <vector>

#include <json.hpp>

#include "xaitext/attribution/attribution_vector.hpp"
#include "xaitext/model/classifier.hpp"

namespace xaitext {

struct IgConfig {
  std::size_t steps = 50;

  void validate() const {
    if (steps < 1) throw ConfigError("ig: steps must be >= 1");
  }

  NLOHMANN_DEFINE_TYPE_INTRUSIVE(IgConfig, steps)
};

// Midpoint-rule path points (i - 1/2) / m, i = 1..m.
inline std::vector<double> ig_alphas(std::size_t steps) {
  std::vector<double> a(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    a[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(steps);
  }
  return a;
}

// Integrated Gradients of P(1) from the all-PAD embedding to embed(seq).
// Every point on the path is evaluated under the mask of seq.
template <EmbeddingDifferentiable M>
AttributionVector integrated_gradients(const M& model, const TokenSequence& seq,
                                       const IgConfig& cfg = {}) {
  cfg.validate();
  detail::Stopwatch clock;
  const Matrix x = model.embed(seq);
  const Matrix b = model.embed(TokenSequence::all_pad(seq.size()));
  const ActiveMask mask = active_mask(seq);
  const auto alphas = ig_alphas(cfg.steps);

  Matrix mean_grad;
  try {
    if constexpr (HasPathGradient<M>) {
      mean_grad = model.mean_path_gradient(b, x, alphas, mask);
    } else {
      mean_grad = Matrix::Zero(x.rows(), x.cols());
      const Matrix delta = x - b;
      for (const double a : alphas) mean_grad += model.gradient_wrt_embeddings(b + a * delta, mask);
      mean_grad /= static_cast<double>(alphas.size());
    }
  } catch (const NumericError& e) {
    throw ExplanationError(std::string("ig: ") + e.what());
  }
  if (!mean_grad.allFinite()) throw ExplanationError("ig: non-finite gradient");

  const Matrix contrib = mean_grad.cwiseProduct(x - b);
  std::vector<double> scores(seq.size());
  for (std::size_t j = 0; j < seq.size(); ++j) {
    scores[j] = contrib.row(static_cast<Eigen::Index>(j)).sum();
  }
  return detail::finish(std::move(scores), seq, "ig", clock);
}

}  // namespace xaitext
