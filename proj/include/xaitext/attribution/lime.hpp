#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "xaitext/attribution/attribution_vector.hpp"
#include "xaitext/model/classifier.hpp"
#include "xaitext/rng.hpp"

namespace xaitext {

struct LimeConfig {
  std::size_t n_samples = 1000;
  std::size_t top_k = 20;
  // Defaults to 0.75 * sqrt(number of non-PAD tokens).
  std::optional<double> kernel_width;
  double ridge = 1e-3;
  std::uint64_t seed = 42;

  void validate() const {
    if (n_samples < 10) throw ConfigError("lime: n_samples must be >= 10");
    if (top_k < 1) throw ConfigError("lime: top_k must be >= 1");
    if (kernel_width && !(*kernel_width > 0.0)) throw ConfigError("lime: kernel_width must be > 0");
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ConfigError("lime: ridge must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const LimeConfig& c) {
  j = {{"n_samples", c.n_samples},
       {"top_k", c.top_k},
       {"kernel_width", c.kernel_width ? nlohmann::json(*c.kernel_width) : nullptr},
       {"ridge", c.ridge},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, LimeConfig& c) {
  c.n_samples = j.at("n_samples").get<std::size_t>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.kernel_width = j.at("kernel_width").is_null()
                       ? std::nullopt
                       : std::optional<double>(j.at("kernel_width").get<double>());
  c.ridge = j.at("ridge").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

// Cosine distance between a presence mask with `kept` ones out of n and the
// all-ones mask. The empty mask is taken to be at distance 1.
inline double lime_distance(std::size_t kept, std::size_t n) {
  if (kept == 0) return 1.0;
  return 1.0 - std::sqrt(static_cast<double>(kept) / static_cast<double>(n));
}

namespace detail {

// Indices of the top_k largest |c|, ties to the lower index.
inline std::vector<std::size_t> largest_magnitudes(const std::vector<double>& c, std::size_t top_k) {
  std::vector<std::size_t> idx(c.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(c[a]) > std::abs(c[b]); });
  idx.resize(std::min(top_k, idx.size()));
  return idx;
}

}  // namespace detail

// Local linear surrogate over token presence masks. Absent tokens are
// replaced by PAD; the intercept is not penalized.
template <BlackBoxClassifier M>
AttributionVector lime_explain(const M& model, const TokenSequence& seq, const LimeConfig& cfg = {}) {
  cfg.validate();
  detail::Stopwatch clock;
  const auto active = seq.active_positions();
  const std::size_t n = active.size();
  std::vector<double> scores(seq.size(), 0.0);
  if (n == 0) return detail::finish(std::move(scores), seq, "lime", clock);

  Rng rng(cfg.seed);
  std::vector<std::vector<char>> masks;
  masks.reserve(cfg.n_samples);
  masks.push_back(std::vector<char>(n, 1));
  while (masks.size() < cfg.n_samples) {
    std::vector<char> z(n);
    for (auto& b : z) b = rng.bernoulli(0.5) ? 1 : 0;
    masks.push_back(std::move(z));
  }
  std::vector<TokenSequence> batch;
  batch.reserve(masks.size());
  for (const auto& z : masks) batch.push_back(detail::keep_positions(seq, active, z));
  const std::vector<double> y = model.predict_positive(std::span<const TokenSequence>(batch));

  const double width = cfg.kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(n)));
  const auto N = static_cast<Eigen::Index>(masks.size());
  const auto P = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd X(N, P);
  Eigen::VectorXd Y(N);
  Eigen::VectorXd W(N);
  for (Eigen::Index r = 0; r < N; ++r) {
    const auto& z = masks[static_cast<std::size_t>(r)];
    std::size_t kept = 0;
    for (Eigen::Index k = 0; k < P; ++k) {
      X(r, k) = z[static_cast<std::size_t>(k)];
      kept += static_cast<std::size_t>(z[static_cast<std::size_t>(k)]);
    }
    Y[r] = y[static_cast<std::size_t>(r)];
    const double d = lime_distance(kept, n);
    W[r] = std::exp(-d * d / (width * width));
  }
  const double wsum = W.sum();
  if (!(wsum > 0.0)) {
    throw ExplanationError("lime: degenerate design, all " + std::to_string(masks.size()) +
                           " sample weights are zero");
  }
  const Eigen::RowVectorXd x_mean = (W.transpose() * X) / wsum;
  const double y_mean = W.dot(Y) / wsum;
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::VectorXd Yc = Y.array() - y_mean;
  Eigen::MatrixXd A = Xc.transpose() * W.asDiagonal() * Xc;
  A.diagonal().array() += cfg.ridge;
  const Eigen::VectorXd rhs = Xc.transpose() * W.asDiagonal() * Yc;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const double scale = std::max(A.diagonal().maxCoeff(), 1e-300);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-13 * scale) {
    throw ExplanationError("lime: degenerate design matrix with " + std::to_string(masks.size()) +
                           " samples over " + std::to_string(n) + " tokens");
  }
  const Eigen::VectorXd beta = ldlt.solve(rhs);

  std::vector<double> coef(beta.data(), beta.data() + beta.size());
  std::vector<double> kept_coef(n, 0.0);
  for (const auto k : detail::largest_magnitudes(coef, cfg.top_k)) kept_coef[k] = coef[k];
  return detail::finish(align_to_sequence(kept_coef, seq), seq, "lime", clock);
}

}  // namespace xaitext
