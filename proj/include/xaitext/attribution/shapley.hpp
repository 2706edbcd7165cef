#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "xaitext/attribution/attribution_vector.hpp"
#include "xaitext/model/classifier.hpp"
#include "xaitext/rng.hpp"

namespace xaitext {

inline constexpr std::size_t kExactShapleyMaxTokens = 14;
inline constexpr std::size_t kExhaustiveShapMaxTokens = 20;

namespace detail {

inline double factorial(std::size_t n) {
  double f = 1.0;
  for (std::size_t i = 2; i <= n; ++i) f *= static_cast<double>(i);
  return f;
}

// P(1) for every coalition encoded as a bit pattern over the active positions.
template <BlackBoxClassifier M>
std::vector<double> coalition_values(const M& model, const TokenSequence& seq,
                                     std::span<const std::size_t> active,
                                     const std::vector<std::vector<char>>& coalitions) {
  std::vector<TokenSequence> batch;
  batch.reserve(coalitions.size());
  for (const auto& c : coalitions) batch.push_back(keep_positions(seq, active, c));
  return model.predict_positive(std::span<const TokenSequence>(batch));
}

inline std::vector<char> bits_of(std::uint64_t code, std::size_t n) {
  std::vector<char> z(n);
  for (std::size_t k = 0; k < n; ++k) z[k] = static_cast<char>((code >> k) & 1u);
  return z;
}

}  // namespace detail

// Brute-force Shapley values over all 2^n coalitions of the n non-PAD tokens,
// with absent tokens replaced by PAD.
template <BlackBoxClassifier M>
AttributionVector exact_shapley(const M& model, const TokenSequence& seq) {
  detail::Stopwatch clock;
  const auto active = seq.active_positions();
  const std::size_t n = active.size();
  if (n > kExactShapleyMaxTokens) {
    throw ExplanationError("exact_shapley: " + std::to_string(n) + " tokens, at most " +
                           std::to_string(kExactShapleyMaxTokens) + " supported");
  }
  std::vector<double> scores(seq.size(), 0.0);
  if (n == 0) return detail::finish(std::move(scores), seq, "exact_shapley", clock);

  const std::uint64_t total = std::uint64_t{1} << n;
  std::vector<std::vector<char>> coalitions;
  coalitions.reserve(total);
  for (std::uint64_t c = 0; c < total; ++c) coalitions.push_back(detail::bits_of(c, n));
  const auto v = detail::coalition_values(model, seq, active, coalitions);

  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s) {
    weight[s] = detail::factorial(s) * detail::factorial(n - s - 1) / detail::factorial(n);
  }
  for (std::size_t j = 0; j < n; ++j) {
    const std::uint64_t bit = std::uint64_t{1} << j;
    double phi = 0.0;
    for (std::uint64_t c = 0; c < total; ++c) {
      if (c & bit) continue;
      phi += weight[static_cast<std::size_t>(std::popcount(c))] * (v[c | bit] - v[c]);
    }
    scores[active[j]] = phi;
  }
  return detail::finish(std::move(scores), seq, "exact_shapley", clock);
}

struct ShapConfig {
  std::size_t n_coalitions = 100;
  std::uint64_t seed = 42;
  // Enumerate all coalitions instead of sampling. Also used automatically
  // when the budget covers every coalition.
  bool exhaustive = false;

  void validate() const {
    if (n_coalitions < 2) throw ConfigError("shap: n_coalitions must be >= 2");
  }

  NLOHMANN_DEFINE_TYPE_INTRUSIVE(ShapConfig, n_coalitions, seed, exhaustive)
};

namespace detail {

// Shapley kernel weight of one coalition of size s out of n.
inline double shapley_kernel(std::size_t n, std::size_t s) {
  double binom = 1.0;
  for (std::size_t i = 1; i <= s; ++i) {
    binom *= static_cast<double>(n - s + i) / static_cast<double>(i);
  }
  return static_cast<double>(n - 1) /
         (binom * static_cast<double>(s) * static_cast<double>(n - s));
}

// Coalition sizes 1..n-1 drawn with probability proportional to
// (n-1) / (s (n-s)), i.e. the total kernel mass of each size.
inline std::size_t draw_size(Rng& rng, const std::vector<double>& cumulative) {
  const double u = rng.uniform01() * cumulative.back();
  std::size_t s = 0;
  while (s + 1 < cumulative.size() && cumulative[s] <= u) ++s;
  return s + 1;
}

inline std::vector<char> random_subset(Rng& rng, std::size_t n, std::size_t size) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx.begin(), idx.end());
  std::vector<char> z(n, 0);
  for (std::size_t k = 0; k < size; ++k) z[idx[k]] = 1;
  return z;
}

}  // namespace detail

// Kernel SHAP: weighted least squares over sampled coalitions with the
// efficiency constraint sum(phi) = v(all) - v(none) imposed exactly.
template <BlackBoxClassifier M>
AttributionVector sampled_shap(const M& model, const TokenSequence& seq, const ShapConfig& cfg = {}) {
  cfg.validate();
  detail::Stopwatch clock;
  const auto active = seq.active_positions();
  const std::size_t n = active.size();
  std::vector<double> scores(seq.size(), 0.0);
  std::vector<std::string> notes;
  if (n == 0) return detail::finish(std::move(scores), seq, "shap", clock);

  const bool budget_covers_all = n < 63 && (std::uint64_t{1} << n) <= cfg.n_coalitions;
  const bool exhaustive = cfg.exhaustive || budget_covers_all;
  if (exhaustive && n > kExhaustiveShapMaxTokens) {
    throw ExplanationError("shap: exhaustive enumeration over " + std::to_string(n) +
                           " tokens is not supported");
  }

  std::vector<std::vector<char>> coalitions;
  std::vector<double> weights;
  coalitions.push_back(std::vector<char>(n, 0));
  coalitions.push_back(std::vector<char>(n, 1));
  weights.push_back(0.0);
  weights.push_back(0.0);
  if (exhaustive) {
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t c = 1; c + 1 < total; ++c) {
      coalitions.push_back(detail::bits_of(c, n));
      weights.push_back(detail::shapley_kernel(n, static_cast<std::size_t>(std::popcount(c))));
    }
  } else if (n > 1) {
    std::vector<double> cumulative(n - 1);
    double acc = 0.0;
    for (std::size_t s = 1; s < n; ++s) {
      acc += static_cast<double>(n - 1) / (static_cast<double>(s) * static_cast<double>(n - s));
      cumulative[s - 1] = acc;
    }
    Rng rng(cfg.seed);
    std::size_t remaining = cfg.n_coalitions - 2;
    while (remaining > 0) {
      auto z = detail::random_subset(rng, n, detail::draw_size(rng, cumulative));
      std::vector<char> complement(n);
      for (std::size_t k = 0; k < n; ++k) complement[k] = static_cast<char>(1 - z[k]);
      coalitions.push_back(std::move(z));
      weights.push_back(1.0);
      --remaining;
      if (remaining > 0) {
        coalitions.push_back(std::move(complement));
        weights.push_back(1.0);
        --remaining;
      }
    }
  }

  const auto v = detail::coalition_values(model, seq, active, coalitions);
  const double v_empty = v[0];
  const double total_gain = v[1] - v[0];
  if (n == 1) {
    scores[active[0]] = total_gain;
    return detail::finish(std::move(scores), seq, "shap", clock);
  }

  // Substitute phi_n = total_gain - sum(phi_1..phi_{n-1}) and solve the
  // reduced unconstrained problem by its normal equations.
  const auto p = static_cast<Eigen::Index>(n - 1);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd row(p);
  for (std::size_t r = 2; r < coalitions.size(); ++r) {
    const auto& z = coalitions[r];
    const double zn = z[n - 1];
    for (Eigen::Index k = 0; k < p; ++k) row[k] = z[static_cast<std::size_t>(k)] - zn;
    const double y = v[r] - v_empty - zn * total_gain;
    A.noalias() += weights[r] * row * row.transpose();
    rhs.noalias() += weights[r] * y * row;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const auto d = ldlt.vectorD();
  const double scale = std::max(A.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-12 * scale) {
    const double ridge = 1e-8 * scale;
    A.diagonal().array() += ridge;
    ldlt.compute(A);
    notes.push_back("singular coalition system; ridge " + std::to_string(ridge) + " added");
  }
  const Eigen::VectorXd phi = ldlt.solve(rhs);
  double sum = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) {
    scores[active[static_cast<std::size_t>(k)]] = phi[k];
    sum += phi[k];
  }
  scores[active[n - 1]] = total_gain - sum;
  return detail::finish(std::move(scores), seq, "shap", clock, std::move(notes));
}

}  // namespace xaitext
