#pragma once

// Small hand-built classifiers with known closed-form behaviour.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "xaitext/model/parameters.hpp"
#include "xaitext/text_pipeline.hpp"

namespace xaitext::testing_models {

// Black box defined by a function of the sequence.
struct FunctionModel {
  std::function<double(const TokenSequence&)> f;

  double predict_positive(const TokenSequence& s) const { return f(s); }
  std::vector<double> predict_positive(std::span<const TokenSequence> seqs) const {
    std::vector<double> out;
    for (const auto& s : seqs) out.push_back(f(s));
    return out;
  }
};

inline FunctionModel constant_model(double p) {
  return {[p](const TokenSequence&) { return p; }};
}

// Output equals sum(w .* emb) directly, no squashing. Its gradient is w
// everywhere, so Integrated Gradients is exact for any step count.
struct LinearHead {
  Matrix table;  // vocab x D, row 0 zero
  Matrix w;      // L x D

  Matrix embed(const TokenSequence& s) const { return embed_rows(table, s); }
  double forward_from_embeddings(const Matrix& e, const ActiveMask&) const {
    return w.cwiseProduct(e).sum();
  }
  Matrix gradient_wrt_embeddings(const Matrix&, const ActiveMask&) const { return w; }
  double predict_positive(const TokenSequence& s) const {
    return forward_from_embeddings(embed(s), active_mask(s));
  }
  std::vector<double> predict_positive(std::span<const TokenSequence> seqs) const {
    std::vector<double> out;
    for (const auto& s : seqs) out.push_back(predict_positive(s));
    return out;
  }
};

}  // namespace xaitext::testing_models
