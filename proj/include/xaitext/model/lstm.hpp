#pragma once

// Embedding -> single LSTM layer -> final hidden state -> dense sigmoid,
// with backpropagation through time.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xaitext/model/parameters.hpp"

namespace xaitext {

struct LstmConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 16;
  std::size_t hidden_units = 16;
  double dropout = 0.2;
  double recurrent_dropout = 0.2;

  static LstmConfig full_scale(std::size_t vocab_size) {
    LstmConfig c;
    c.vocab_size = vocab_size;
    c.embedding_dim = 128;
    c.hidden_units = 128;
    return c;
  }

  NLOHMANN_DEFINE_TYPE_INTRUSIVE(LstmConfig, vocab_size, embedding_dim, hidden_units, dropout,
                                 recurrent_dropout)
};

// Gate blocks are laid out [input | forget | cell candidate | output] along
// the 4H columns of the kernels and bias.
class LstmClassifier {
 public:
  static constexpr std::string_view kArchitecture = "lstm";
  enum Index : std::size_t {
    kEmbedding,
    kInputKernel,
    kRecurrentKernel,
    kGateBias,
    kDenseWeights,
    kDenseBias
  };

  using Config = LstmConfig;

  // Per-sequence (variational) masks: one for the input features, one for
  // the hidden state fed back into the gates. Empty means no dropout.
  struct DropoutDraw {
    RowVector input_scale;
    RowVector recurrent_scale;
  };

  LstmClassifier(const LstmConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    validate(cfg_);
    Rng rng(seed);
    const auto V = static_cast<Eigen::Index>(cfg.vocab_size);
    const auto D = static_cast<Eigen::Index>(cfg.embedding_dim);
    const auto H = static_cast<Eigen::Index>(cfg.hidden_units);
    Matrix embedding = uniform_matrix(V, D, 0.05, rng);
    embedding.row(kPadId).setZero();
    Matrix bias = Matrix::Zero(1, 4 * H);
    bias.block(0, H, 1, H).setOnes();  // forget gate
    params_ = {
        {"embedding", std::move(embedding)},
        {"input_kernel",
         uniform_matrix(D, 4 * H,
                        glorot_limit(static_cast<double>(D), static_cast<double>(4 * H)), rng)},
        {"recurrent_kernel",
         uniform_matrix(H, 4 * H, 1.0 / std::sqrt(static_cast<double>(H)), rng)},
        {"gate_bias", std::move(bias)},
        {"dense_weights",
         uniform_matrix(1, H, glorot_limit(static_cast<double>(H), 1.0), rng)},
        {"dense_bias", Matrix::Zero(1, 1)},
    };
    round_to_float(params_);
  }

  LstmClassifier(const LstmConfig& cfg, ParameterSet params)
      : cfg_(cfg), params_(std::move(params)) {
    validate(cfg_);
    const auto D = static_cast<Eigen::Index>(cfg.embedding_dim);
    const auto H = static_cast<Eigen::Index>(cfg.hidden_units);
    const Eigen::Index shapes[6][2] = {{static_cast<Eigen::Index>(cfg.vocab_size), D},
                                       {D, 4 * H},
                                       {H, 4 * H},
                                       {1, 4 * H},
                                       {1, H},
                                       {1, 1}};
    if (params_.size() != 6) throw DimensionError("lstm: expected 6 parameter tensors");
    for (std::size_t i = 0; i < 6; ++i) {
      if (params_[i].value.rows() != shapes[i][0] || params_[i].value.cols() != shapes[i][1]) {
        throw DimensionError("lstm: parameter '" + params_[i].name + "' has the wrong shape");
      }
    }
  }

  const LstmConfig& config() const noexcept { return cfg_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  ParameterSet& parameters() noexcept { return params_; }
  std::size_t vocab_size() const noexcept { return cfg_.vocab_size; }

  Matrix embed(const TokenSequence& seq) const { return embed_rows(params_[kEmbedding].value, seq); }

  // The recurrence runs over every position, PAD included; the mask is
  // accepted for interface parity with the CNN and only checked for length.
  double forward_from_embeddings(const Matrix& emb, const ActiveMask& mask) const {
    return forward(emb, mask, nullptr, nullptr);
  }

  double forward_from_embeddings(const Matrix& emb, const ActiveMask& mask,
                                 const DropoutDraw& dropout) const {
    return forward(emb, mask, &dropout, nullptr);
  }

  double predict_positive(const TokenSequence& seq) const {
    return forward(embed(seq), active_mask(seq), nullptr, nullptr);
  }

  std::vector<double> predict_positive(std::span<const TokenSequence> seqs) const {
    std::vector<double> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(predict_positive(s));
    return out;
  }

  Matrix gradient_wrt_embeddings(const Matrix& emb, const ActiveMask& mask) const {
    Cache cache;
    const double p = forward(emb, mask, nullptr, &cache);
    Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
    backward(cache, p * (1.0 - p), nullptr, &d_emb);
    if (!d_emb.allFinite()) throw NumericError("lstm: non-finite embedding gradient");
    return d_emb;
  }

  ParameterSet probability_gradients(const TokenSequence& seq) const {
    const Matrix emb = embed(seq);
    Cache cache;
    const double p = forward(emb, active_mask(seq), nullptr, &cache);
    ParameterSet grads = zeros_like(params_);
    Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
    backward(cache, p * (1.0 - p), &grads, &d_emb);
    scatter_embedding_gradient(seq, d_emb, grads[kEmbedding].value);
    return grads;
  }

  DropoutDraw draw_dropout(Rng& rng) const {
    DropoutDraw d;
    auto draw = [&rng](std::size_t n, double rate) {
      RowVector scale(static_cast<Eigen::Index>(n));
      const double keep = 1.0 - rate;
      for (Eigen::Index i = 0; i < scale.size(); ++i) {
        scale(i) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
      }
      return scale;
    };
    if (cfg_.dropout > 0.0) d.input_scale = draw(cfg_.embedding_dim, cfg_.dropout);
    if (cfg_.recurrent_dropout > 0.0) {
      d.recurrent_scale = draw(cfg_.hidden_units, cfg_.recurrent_dropout);
    }
    return d;
  }

  template <class DLogit>
  double accumulate_gradients(const TokenSequence& seq, const DropoutDraw* dropout,
                              DLogit&& d_logit_of_p, ParameterSet& grads) const {
    const Matrix emb = embed(seq);
    Cache cache;
    const double p = forward(emb, active_mask(seq), dropout, &cache);
    Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
    backward(cache, d_logit_of_p(p), &grads, &d_emb);
    scatter_embedding_gradient(seq, d_emb, grads[kEmbedding].value);
    return p;
  }

 private:
  struct Cache {
    Matrix inputs;       // L x D, after input dropout
    Matrix prev_hidden;  // L x H, h_{t-1} after recurrent dropout
    Matrix gates;        // L x 4H, activated gates
    Matrix cells;        // (L+1) x H, row 0 is c_0
    RowVector last_hidden;
    RowVector input_scale;
    RowVector recurrent_scale;
  };

  static void validate(const LstmConfig& c) {
    if (c.vocab_size < 2) throw DimensionError("lstm: vocabulary must hold PAD and OOV");
    if (c.embedding_dim < 1 || c.hidden_units < 1) {
      throw DimensionError("lstm: dimensions must be >= 1");
    }
    if (!(c.dropout >= 0.0 && c.dropout < 1.0) ||
        !(c.recurrent_dropout >= 0.0 && c.recurrent_dropout < 1.0)) {
      throw DimensionError("lstm: dropout rates in [0, 1)");
    }
  }

  double forward(const Matrix& emb, const ActiveMask& mask, const DropoutDraw* dropout,
                 Cache* cache) const {
    if (emb.cols() != static_cast<Eigen::Index>(cfg_.embedding_dim)) {
      throw DimensionError("lstm: embedding width " + std::to_string(emb.cols()) + " != " +
                           std::to_string(cfg_.embedding_dim));
    }
    if (mask.size() != static_cast<std::size_t>(emb.rows())) {
      throw DimensionError("lstm: mask length differs from sequence length");
    }
    if (!emb.allFinite()) throw NumericError("lstm: non-finite embedding input");
    const auto L = emb.rows();
    const auto H = static_cast<Eigen::Index>(cfg_.hidden_units);
    const Matrix& Wx = params_[kInputKernel].value;
    const Matrix& Wh = params_[kRecurrentKernel].value;
    const RowVector b = params_[kGateBias].value.row(0);

    const bool in_drop = dropout != nullptr && dropout->input_scale.size() > 0;
    const bool rec_drop = dropout != nullptr && dropout->recurrent_scale.size() > 0;
    Matrix inputs = emb;
    if (in_drop) inputs.array().rowwise() *= dropout->input_scale.array();
    // The input projection does not depend on the recurrence.
    const Matrix input_proj = inputs * Wx;

    Matrix prev_hidden(L, H);
    Matrix gates(L, 4 * H);
    Matrix cells(L + 1, H);
    cells.row(0).setZero();
    RowVector h = RowVector::Zero(H);
    for (Eigen::Index t = 0; t < L; ++t) {
      RowVector h_in = rec_drop ? RowVector(h.cwiseProduct(dropout->recurrent_scale)) : h;
      RowVector z = input_proj.row(t) + h_in * Wh + b;
      for (Eigen::Index k = 0; k < H; ++k) {
        z(k) = sigmoid(z(k));                  // input
        z(H + k) = sigmoid(z(H + k));          // forget
        z(2 * H + k) = std::tanh(z(2 * H + k));  // candidate
        z(3 * H + k) = sigmoid(z(3 * H + k));  // output
      }
      const RowVector c = z.segment(H, H).cwiseProduct(cells.row(t)) +
                          z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
      cells.row(t + 1) = c;
      h = z.segment(3 * H, H).cwiseProduct(c.array().tanh().matrix());
      prev_hidden.row(t) = h_in;
      gates.row(t) = z;
    }
    const double logit = h.dot(params_[kDenseWeights].value.row(0)) + params_[kDenseBias].value(0, 0);
    if (!std::isfinite(logit)) throw NumericError("lstm: non-finite logit");
    if (cache != nullptr) {
      cache->inputs = std::move(inputs);
      cache->prev_hidden = std::move(prev_hidden);
      cache->gates = std::move(gates);
      cache->cells = std::move(cells);
      cache->last_hidden = h;
      cache->input_scale = in_drop ? dropout->input_scale : RowVector();
      cache->recurrent_scale = rec_drop ? dropout->recurrent_scale : RowVector();
    }
    return sigmoid(logit);
  }

  void backward(const Cache& c, double d_logit, ParameterSet* grads, Matrix* d_emb) const {
    const auto L = c.gates.rows();
    const auto H = static_cast<Eigen::Index>(cfg_.hidden_units);
    const Matrix& Wx = params_[kInputKernel].value;
    const Matrix& Wh = params_[kRecurrentKernel].value;

    RowVector dh = d_logit * params_[kDenseWeights].value.row(0);
    RowVector dc = RowVector::Zero(H);
    Matrix d_gates(L, 4 * H);
    for (Eigen::Index t = L - 1; t >= 0; --t) {
      const auto g = c.gates.row(t);
      const RowVector i = g.segment(0, H);
      const RowVector f = g.segment(H, H);
      const RowVector cand = g.segment(2 * H, H);
      const RowVector o = g.segment(3 * H, H);
      const RowVector tanh_c = c.cells.row(t + 1).array().tanh().matrix();
      dc += dh.cwiseProduct(o).cwiseProduct((1.0 - tanh_c.array().square()).matrix());
      RowVector dz(4 * H);
      dz.segment(0, H) = dc.cwiseProduct(cand).cwiseProduct(i.cwiseProduct((1.0 - i.array()).matrix()));
      dz.segment(H, H) =
          dc.cwiseProduct(c.cells.row(t)).cwiseProduct(f.cwiseProduct((1.0 - f.array()).matrix()));
      dz.segment(2 * H, H) = dc.cwiseProduct(i).cwiseProduct((1.0 - cand.array().square()).matrix());
      dz.segment(3 * H, H) =
          dh.cwiseProduct(tanh_c).cwiseProduct(o.cwiseProduct((1.0 - o.array()).matrix()));
      d_gates.row(t) = dz;
      dc = dc.cwiseProduct(f);
      dh = dz * Wh.transpose();
      if (c.recurrent_scale.size() > 0) dh = dh.cwiseProduct(c.recurrent_scale);
    }
    if (grads != nullptr) {
      auto& gr = *grads;
      gr[kDenseWeights].value.row(0) += d_logit * c.last_hidden;
      gr[kDenseBias].value(0, 0) += d_logit;
      gr[kGateBias].value.row(0) += d_gates.colwise().sum();
      gr[kInputKernel].value += c.inputs.transpose() * d_gates;
      gr[kRecurrentKernel].value += c.prev_hidden.transpose() * d_gates;
    }
    if (d_emb != nullptr) {
      Matrix d_in = d_gates * Wx.transpose();
      if (c.input_scale.size() > 0) d_in.array().rowwise() *= c.input_scale.array();
      *d_emb += d_in;
    }
  }

  LstmConfig cfg_;
  ParameterSet params_;
};

}  // namespace xaitext
