#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xaitext/error.hpp"
#include "xaitext/rng.hpp"
#include "xaitext/text_pipeline.hpp"

namespace xaitext {

// Row-major so that a run of consecutive embedding rows is contiguous memory.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

struct NamedTensor {
  std::string name;
  Matrix value;
};

using ParameterSet = std::vector<NamedTensor>;

// Positions holding a real token. Models use it to tell real content from PAD
// independently of the embedding values (e.g. along an IG path).
using ActiveMask = std::vector<bool>;

inline ActiveMask active_mask(const TokenSequence& seq) {
  ActiveMask mask(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) mask[i] = seq.is_active(i);
  return mask;
}

inline ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out;
  out.reserve(params.size());
  for (const auto& t : params) {
    out.push_back({t.name, Matrix::Zero(t.value.rows(), t.value.cols())});
  }
  return out;
}

inline bool all_finite(const ParameterSet& params) {
  for (const auto& t : params) {
    if (!t.value.allFinite()) return false;
  }
  return true;
}

inline std::size_t parameter_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& t : params) n += static_cast<std::size_t>(t.value.size());
  return n;
}

// Parameters are held in double for exact gradients but kept on the float32
// grid after initialization and every optimizer step, so checkpoints that
// store float32 reproduce predictions bit for bit.
inline void round_to_float(Matrix& m) {
  m = m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

inline void round_to_float(ParameterSet& params) {
  for (auto& t : params) round_to_float(t.value);
}

inline Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double limit, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
  }
  return m;
}

inline double glorot_limit(double fan_in, double fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Row lookup shared by both architectures. PAD rows come out as the
// (frozen, zero) PAD embedding row.
inline Matrix embed_rows(const Matrix& table, const TokenSequence& seq) {
  check_ids(seq, static_cast<std::size_t>(table.rows()));
  Matrix out(static_cast<Eigen::Index>(seq.size()), table.cols());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = table.row(seq[i]);
  }
  return out;
}

// Adds per-position embedding gradients into the embedding table gradient.
// The PAD row stays frozen.
inline void scatter_embedding_gradient(const TokenSequence& seq, const Matrix& d_emb,
                                       Matrix& d_table) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] == kPadId) continue;
    d_table.row(seq[i]) += d_emb.row(static_cast<Eigen::Index>(i));
  }
}

}  // namespace xaitext
