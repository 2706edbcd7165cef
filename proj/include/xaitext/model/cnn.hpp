#pragma once

// Embedding -> 1-D convolution -> global average pooling -> dropout -> dense
// sigmoid classifier with analytic reverse-mode gradients.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xaitext/model/parameters.hpp"

namespace xaitext {

enum class ConvActivation { relu, tanh, identity };

// masked_average pools only over windows that contain at least one real
// token (all windows when there is none); average is the plain mean over all
// L - W + 1 windows.
enum class Pooling { masked_average, average };

NLOHMANN_JSON_SERIALIZE_ENUM(ConvActivation, {{ConvActivation::relu, "relu"},
                                              {ConvActivation::tanh, "tanh"},
                                              {ConvActivation::identity, "identity"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Pooling, {{Pooling::masked_average, "masked_average"},
                                       {Pooling::average, "average"}})

struct CnnConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 16;
  std::size_t filters = 16;
  std::size_t kernel_width = 5;
  double dropout = 0.5;
  ConvActivation activation = ConvActivation::relu;
  Pooling pooling = Pooling::masked_average;

  static CnnConfig full_scale(std::size_t vocab_size) {
    CnnConfig c;
    c.vocab_size = vocab_size;
    c.embedding_dim = 128;
    c.filters = 128;
    c.kernel_width = 5;
    return c;
  }

  NLOHMANN_DEFINE_TYPE_INTRUSIVE(CnnConfig, vocab_size, embedding_dim, filters, kernel_width,
                                 dropout, activation, pooling)
};

class CnnClassifier {
 public:
  static constexpr std::string_view kArchitecture = "cnn";
  enum Index : std::size_t { kEmbedding, kConvKernel, kConvBias, kDenseWeights, kDenseBias };

  using Config = CnnConfig;

  // Inverted-dropout scale per pooled feature; empty means no dropout.
  struct DropoutDraw {
    RowVector feature_scale;
  };

  CnnClassifier(const CnnConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    validate(cfg_);
    Rng rng(seed);
    const auto V = static_cast<Eigen::Index>(cfg.vocab_size);
    const auto D = static_cast<Eigen::Index>(cfg.embedding_dim);
    const auto F = static_cast<Eigen::Index>(cfg.filters);
    const auto W = static_cast<Eigen::Index>(cfg.kernel_width);
    Matrix embedding = uniform_matrix(V, D, 0.05, rng);
    embedding.row(kPadId).setZero();
    const double conv_limit =
        glorot_limit(static_cast<double>(W * D), static_cast<double>(W * F));
    params_ = {
        {"embedding", std::move(embedding)},
        {"conv_kernel", uniform_matrix(F, W * D, conv_limit, rng)},
        {"conv_bias", Matrix::Zero(1, F)},
        {"dense_weights", uniform_matrix(1, F, glorot_limit(static_cast<double>(F), 1.0), rng)},
        {"dense_bias", Matrix::Zero(1, 1)},
    };
    round_to_float(params_);
  }

  // Adopts an existing parameter set (checkpoint loading, tests).
  CnnClassifier(const CnnConfig& cfg, ParameterSet params) : cfg_(cfg), params_(std::move(params)) {
    validate(cfg_);
    const auto D = static_cast<Eigen::Index>(cfg.embedding_dim);
    const auto F = static_cast<Eigen::Index>(cfg.filters);
    const auto W = static_cast<Eigen::Index>(cfg.kernel_width);
    const Eigen::Index shapes[5][2] = {
        {static_cast<Eigen::Index>(cfg.vocab_size), D}, {F, W * D}, {1, F}, {1, F}, {1, 1}};
    if (params_.size() != 5) throw DimensionError("cnn: expected 5 parameter tensors");
    for (std::size_t i = 0; i < 5; ++i) {
      if (params_[i].value.rows() != shapes[i][0] || params_[i].value.cols() != shapes[i][1]) {
        throw DimensionError("cnn: parameter '" + params_[i].name + "' has the wrong shape");
      }
    }
  }

  const CnnConfig& config() const noexcept { return cfg_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  ParameterSet& parameters() noexcept { return params_; }
  std::size_t vocab_size() const noexcept { return cfg_.vocab_size; }

  Matrix embed(const TokenSequence& seq) const { return embed_rows(params_[kEmbedding].value, seq); }

  // Number of conv output positions for a length-L input.
  std::size_t conv_length(std::size_t sequence_length) const {
    return sequence_length - cfg_.kernel_width + 1;
  }

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

  // d P(1) / d emb, inference mode.
  Matrix gradient_wrt_embeddings(const Matrix& emb, const ActiveMask& mask) const {
    Cache cache;
    const double p = forward(emb, mask, nullptr, &cache);
    Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
    backward(emb, cache, p * (1.0 - p), nullptr, &d_emb);
    if (!d_emb.allFinite()) throw NumericError("cnn: non-finite embedding gradient");
    return d_emb;
  }

  // Mean of gradient_wrt_embeddings over the points from + a (to - from).
  // The convolution is linear, so the pre-activations along the line are
  // interpolated directly and only one transposed convolution is needed.
  Matrix mean_path_gradient(const Matrix& from, const Matrix& to, std::span<const double> alphas,
                            const ActiveMask& mask) const {
    check_input(from, mask);
    check_input(to, mask);
    const Matrix pre_from = preactivation(from);
    const Matrix delta = preactivation(to) - pre_from;
    const auto [used, count] = window_usage(mask);
    const RowVector& w = params_[kDenseWeights].value;
    const double b = params_[kDenseBias].value(0, 0);
    Matrix d_pre_sum = Matrix::Zero(pre_from.rows(), pre_from.cols());
    for (const double a : alphas) {
      const Matrix pre = pre_from + a * delta;
      const Matrix act = activate(pre);
      RowVector pooled = RowVector::Zero(pre.cols());
      for (Eigen::Index t = 0; t < pre.rows(); ++t) {
        if (used[static_cast<std::size_t>(t)]) pooled += act.row(t);
      }
      pooled /= count;
      const double p = sigmoid(pooled.dot(w) + b);
      const RowVector d_act_row = (p * (1.0 - p) / count) * w;
      const Matrix d_act_pre = activation_derivative(pre, act);
      for (Eigen::Index t = 0; t < pre.rows(); ++t) {
        if (used[static_cast<std::size_t>(t)]) {
          d_pre_sum.row(t) += d_act_row.cwiseProduct(d_act_pre.row(t));
        }
      }
    }
    d_pre_sum /= static_cast<double>(alphas.size());
    Matrix d_emb = Matrix::Zero(from.rows(), from.cols());
    conv_transpose(d_pre_sum, d_emb);
    if (!d_emb.allFinite()) throw NumericError("cnn: non-finite path gradient");
    return d_emb;
  }

  // d P(1) / d parameters, inference mode.
  ParameterSet probability_gradients(const TokenSequence& seq) const {
    const Matrix emb = embed(seq);
    Cache cache;
    const double p = forward(emb, active_mask(seq), nullptr, &cache);
    ParameterSet grads = zeros_like(params_);
    Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
    backward(emb, cache, p * (1.0 - p), &grads, &d_emb);
    scatter_embedding_gradient(seq, d_emb, grads[kEmbedding].value);
    return grads;
  }

  DropoutDraw draw_dropout(Rng& rng) const {
    DropoutDraw d;
    if (cfg_.dropout <= 0.0) return d;
    const double keep = 1.0 - cfg_.dropout;
    d.feature_scale.resize(static_cast<Eigen::Index>(cfg_.filters));
    for (Eigen::Index f = 0; f < d.feature_scale.size(); ++f) {
      d.feature_scale(f) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    }
    return d;
  }

  // Forward + backward for one example. `d_logit_of_p` maps the predicted
  // probability to d loss / d logit; gradients are added into `grads`.
  template <class DLogit>
  double accumulate_gradients(const TokenSequence& seq, const DropoutDraw* dropout,
                              DLogit&& d_logit_of_p, ParameterSet& grads) const {
    const Matrix emb = embed(seq);
    Cache cache;
    const double p = forward(emb, active_mask(seq), dropout, &cache);
    Matrix d_emb = Matrix::Zero(emb.rows(), emb.cols());
    backward(emb, cache, d_logit_of_p(p), &grads, &d_emb);
    scatter_embedding_gradient(seq, d_emb, grads[kEmbedding].value);
    return p;
  }

  // Sign pattern of every conv pre-activation; used by gradient checks to
  // skip finite-difference probes that straddle a ReLU kink.
  std::vector<bool> activation_pattern(const Matrix& emb) const {
    const Matrix pre = preactivation(emb);
    std::vector<bool> out;
    out.reserve(static_cast<std::size_t>(pre.size()));
    for (Eigen::Index t = 0; t < pre.rows(); ++t) {
      for (Eigen::Index f = 0; f < pre.cols(); ++f) out.push_back(pre(t, f) > 0.0);
    }
    return out;
  }

 private:
  struct Cache {
    Matrix pre;
    Matrix act;
    std::vector<bool> used;
    double count = 1.0;
    RowVector pooled;
    RowVector features;  // pooled after dropout
    const DropoutDraw* dropout = nullptr;
  };

  static void validate(const CnnConfig& c) {
    if (c.vocab_size < 2) throw DimensionError("cnn: vocabulary must hold PAD and OOV");
    if (c.embedding_dim < 1 || c.filters < 1 || c.kernel_width < 1) {
      throw DimensionError("cnn: dimensions must be >= 1");
    }
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw DimensionError("cnn: dropout in [0, 1)");
  }

  void check_input(const Matrix& emb, const ActiveMask& mask) const {
    if (emb.cols() != static_cast<Eigen::Index>(cfg_.embedding_dim)) {
      throw DimensionError("cnn: embedding width " + std::to_string(emb.cols()) + " != " +
                           std::to_string(cfg_.embedding_dim));
    }
    if (emb.rows() < static_cast<Eigen::Index>(cfg_.kernel_width)) {
      throw DimensionError("cnn: sequence shorter than the kernel width");
    }
    if (mask.size() != static_cast<std::size_t>(emb.rows())) {
      throw DimensionError("cnn: mask length differs from sequence length");
    }
    if (!emb.allFinite()) throw NumericError("cnn: non-finite embedding input");
  }

  // Windows t..t+W-1 of a row-major L x D matrix are contiguous runs of W*D
  // values with stride D, so im2col is a strided view.
  auto windows(const Matrix& emb) const {
    const auto W = static_cast<Eigen::Index>(cfg_.kernel_width);
    const Eigen::Index T = emb.rows() - W + 1;
    using View = Eigen::Map<const Matrix, Eigen::Unaligned, Eigen::OuterStride<>>;
    return View(emb.data(), T, W * emb.cols(), Eigen::OuterStride<>(emb.cols()));
  }

  Matrix preactivation(const Matrix& emb) const {
    Matrix pre = windows(emb) * params_[kConvKernel].value.transpose();
    pre.rowwise() += params_[kConvBias].value.row(0);
    return pre;
  }

  Matrix activate(const Matrix& pre) const {
    switch (cfg_.activation) {
      case ConvActivation::relu: return pre.cwiseMax(0.0);
      case ConvActivation::tanh: return pre.array().tanh().matrix();
      case ConvActivation::identity: return pre;
    }
    return pre;
  }

  Matrix activation_derivative(const Matrix& pre, const Matrix& act) const {
    switch (cfg_.activation) {
      case ConvActivation::relu:
        return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
      case ConvActivation::tanh: return (1.0 - act.array().square()).matrix();
      case ConvActivation::identity: return Matrix::Ones(pre.rows(), pre.cols());
    }
    return Matrix::Ones(pre.rows(), pre.cols());
  }

  std::pair<std::vector<bool>, double> window_usage(const ActiveMask& mask) const {
    const std::size_t W = cfg_.kernel_width;
    const std::size_t T = mask.size() - W + 1;
    std::vector<bool> used(T, true);
    if (cfg_.pooling == Pooling::average) return {used, static_cast<double>(T)};
    std::size_t count = 0;
    for (std::size_t t = 0; t < T; ++t) {
      bool any = false;
      for (std::size_t k = 0; k < W && !any; ++k) any = mask[t + k];
      used[t] = any;
      count += any ? 1 : 0;
    }
    if (count == 0) return {std::vector<bool>(T, true), static_cast<double>(T)};
    return {used, static_cast<double>(count)};
  }

  double forward(const Matrix& emb, const ActiveMask& mask, const DropoutDraw* dropout,
                 Cache* cache) const {
    check_input(emb, mask);
    Matrix pre = preactivation(emb);
    Matrix act = activate(pre);
    auto [used, count] = window_usage(mask);
    RowVector pooled = RowVector::Zero(act.cols());
    for (Eigen::Index t = 0; t < act.rows(); ++t) {
      if (used[static_cast<std::size_t>(t)]) pooled += act.row(t);
    }
    pooled /= count;
    const bool drop = dropout != nullptr && dropout->feature_scale.size() > 0;
    RowVector features = drop ? RowVector(pooled.cwiseProduct(dropout->feature_scale)) : pooled;
    const double logit = features.dot(params_[kDenseWeights].value.row(0)) +
                         params_[kDenseBias].value(0, 0);
    if (!std::isfinite(logit)) throw NumericError("cnn: non-finite logit");
    if (cache != nullptr) {
      cache->pre = std::move(pre);
      cache->act = std::move(act);
      cache->used = std::move(used);
      cache->count = count;
      cache->pooled = std::move(pooled);
      cache->features = std::move(features);
      cache->dropout = drop ? dropout : nullptr;
    }
    return sigmoid(logit);
  }

  void conv_transpose(const Matrix& d_pre, Matrix& d_emb) const {
    const Matrix d_windows = d_pre * params_[kConvKernel].value;
    const auto D = d_emb.cols();
    const auto span = d_windows.cols();
    for (Eigen::Index t = 0; t < d_windows.rows(); ++t) {
      Eigen::Map<RowVector> segment(d_emb.data() + t * D, span);
      segment += d_windows.row(t);
    }
  }

  void backward(const Matrix& emb, const Cache& c, double d_logit, ParameterSet* grads,
                Matrix* d_emb) const {
    const RowVector& w = params_[kDenseWeights].value;
    RowVector d_pooled = d_logit * w;
    if (c.dropout != nullptr) d_pooled = d_pooled.cwiseProduct(c.dropout->feature_scale);
    const Matrix d_act_pre = activation_derivative(c.pre, c.act);
    Matrix d_pre = Matrix::Zero(c.pre.rows(), c.pre.cols());
    const RowVector d_act_row = d_pooled / c.count;
    for (Eigen::Index t = 0; t < d_pre.rows(); ++t) {
      if (c.used[static_cast<std::size_t>(t)]) {
        d_pre.row(t) = d_act_row.cwiseProduct(d_act_pre.row(t));
      }
    }
    if (grads != nullptr) {
      auto& g = *grads;
      g[kDenseWeights].value.row(0) += d_logit * c.features;
      g[kDenseBias].value(0, 0) += d_logit;
      g[kConvBias].value.row(0) += d_pre.colwise().sum();
      g[kConvKernel].value += d_pre.transpose() * windows(emb);
    }
    if (d_emb != nullptr) conv_transpose(d_pre, *d_emb);
  }

  CnnConfig cfg_;
  ParameterSet params_;
};

}  // namespace xaitext
