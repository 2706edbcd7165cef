#pragma once

#include <array>
#include <concepts>
#include <span>
#include <vector>

#include "xaitext/model/parameters.hpp"
#include "xaitext/text_pipeline.hpp"

namespace xaitext {

// Anything that maps token sequences to P(class 1). Model-agnostic
// explainers (sampled SHAP, LIME) and the faithfulness metrics need only this.
template <class M>
concept BlackBoxClassifier = requires(const M& m, std::span<const TokenSequence> seqs) {
  { m.predict_positive(seqs) } -> std::convertible_to<std::vector<double>>;
};

// Classifiers that expose the split at the embedding layer and exact
// gradients of P(1) with respect to the embedded input.
template <class M>
concept EmbeddingDifferentiable =
    requires(const M& m, const TokenSequence& seq, const Matrix& emb, const ActiveMask& mask) {
      { m.embed(seq) } -> std::convertible_to<Matrix>;
      { m.forward_from_embeddings(emb, mask) } -> std::convertible_to<double>;
      { m.gradient_wrt_embeddings(emb, mask) } -> std::convertible_to<Matrix>;
    };

// Optional fast path: mean gradient over points on a straight line.
template <class M>
concept HasPathGradient = requires(const M& m, const Matrix& a, std::span<const double> alphas,
                                   const ActiveMask& mask) {
  { m.mean_path_gradient(a, a, alphas, mask) } -> std::convertible_to<Matrix>;
};

using ClassProbabilities = std::array<double, 2>;  // [P(0), P(1)]

template <BlackBoxClassifier M>
std::vector<ClassProbabilities> predict_proba(const M& model, std::span<const TokenSequence> seqs) {
  const std::vector<double> p1 = model.predict_positive(seqs);
  std::vector<ClassProbabilities> out;
  out.reserve(p1.size());
  for (const double p : p1) out.push_back({1.0 - p, p});
  return out;
}

// P(1) for a single sequence through the batch interface.
template <BlackBoxClassifier M>
double positive_probability(const M& model, const TokenSequence& seq) {
  return model.predict_positive(std::span<const TokenSequence>(&seq, 1)).front();
}

}  // namespace xaitext
