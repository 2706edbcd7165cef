#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xaitext/model/parameters.hpp"
#include "xaitext/text_pipeline.hpp"

namespace xaitext {

// A classifier that can be trained by `train`: CnnClassifier and
// LstmClassifier both model this.
template <class M>
concept TrainableClassifier = requires(const M& cm, M& m, const TokenSequence& seq, Rng& rng,
                                       ParameterSet& grads) {
  { cm.predict_positive(seq) } -> std::convertible_to<double>;
  { m.parameters() } -> std::same_as<ParameterSet&>;
  { cm.draw_dropout(rng) } -> std::same_as<typename M::DropoutDraw>;
  {
    cm.accumulate_gradients(seq, static_cast<const typename M::DropoutDraw*>(nullptr),
                            [](double) { return 0.0; }, grads)
  } -> std::convertible_to<double>;
};

inline constexpr double kBceEpsilon = 1e-7;

inline double clamp_probability(double p) {
  return std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
}

inline double bce_loss(double p, int y) {
  const double pc = clamp_probability(p);
  return -(y * std::log(pc) + (1 - y) * std::log(1.0 - pc));
}

// d loss / d p, zero where the clamp is active.
inline double bce_gradient(double p, int y) {
  if (p < kBceEpsilon || p > 1.0 - kBceEpsilon) return 0.0;
  return (p - y) / (p * (1.0 - p));
}

// d loss / d logit for p = sigmoid(logit); equals p - y inside the clamp.
inline double bce_logit_gradient(double p, int y) {
  if (p < kBceEpsilon || p > 1.0 - kBceEpsilon) return 0.0;
  return p - y;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be finite and >= 0");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0)) {
      throw ConfigError("adam hyperparameters out of range");
    }
  }

  NLOHMANN_DEFINE_TYPE_INTRUSIVE(TrainConfig, learning_rate, batch_size, epochs, seed, beta1,
                                 beta2, epsilon)
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> validation_loss;
  std::optional<double> validation_accuracy;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : epochs) {
      nlohmann::json j = {{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy}};
      j["validation_loss"] = e.validation_loss ? nlohmann::json(*e.validation_loss) : nullptr;
      j["validation_accuracy"] =
          e.validation_accuracy ? nlohmann::json(*e.validation_accuracy) : nullptr;
      arr.push_back(std::move(j));
    }
    return {{"epochs", std::move(arr)}};
  }
};

// Adam with bias correction. State is keyed to the parameter set it was
// built from.
class Adam {
 public:
  Adam(const ParameterSet& params, const TrainConfig& cfg)
      : cfg_(cfg), m_(zeros_like(params)), v_(zeros_like(params)) {}

  void step(ParameterSet& params, const ParameterSet& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& m = m_[i].value;
      auto& v = v_[i].value;
      const auto& g = grads[i].value;
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      params[i].value.array() -=
          cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  TrainConfig cfg_;
  ParameterSet m_;
  ParameterSet v_;
  std::size_t t_ = 0;
};

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

inline int predicted_label(double p_positive) { return p_positive >= 0.5 ? 1 : 0; }

template <class M>
Evaluation evaluate(const M& model, std::span<const EncodedExample> examples) {
  if (examples.empty()) throw DataError("evaluate: empty example set");
  std::size_t correct = 0;
  double loss = 0.0;
  for (const auto& ex : examples) {
    const double p = model.predict_positive(ex.sequence);
    correct += predicted_label(p) == ex.label ? 1 : 0;
    loss += bce_loss(p, ex.label);
  }
  const auto n = static_cast<double>(examples.size());
  return {static_cast<double>(correct) / n, loss / n};
}

// Mini-batch Adam on mean BCE. Deterministic for a fixed seed: the per-epoch
// shuffle and every dropout mask come from one seeded stream. The PAD
// embedding row stays zero. Embedding is always parameter 0.
template <TrainableClassifier M>
TrainingHistory train(M& model, const DatasetSplit<EncodedExample>& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw DataError("train: empty training partition");
  auto& params = model.parameters();
  Adam adam(params, cfg);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainingHistory history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double weight = 1.0 / static_cast<double>(stop - start);
      ParameterSet grads = zeros_like(params);
      double batch_loss = 0.0;
      try {
        for (std::size_t k = start; k < stop; ++k) {
          const auto& ex = split.train[order[k]];
          const auto dropout = model.draw_dropout(rng);
          const double p = model.accumulate_gradients(
              ex.sequence, &dropout,
              [&](double prob) { return weight * bce_logit_gradient(prob, ex.label); }, grads);
          batch_loss += bce_loss(p, ex.label);
          correct += predicted_label(p) == ex.label ? 1 : 0;
        }
      } catch (const NumericError& e) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1) +
                                ", batch " + std::to_string(batch_index + 1) + ": " + e.what(),
                            epoch + 1, batch_index + 1);
      }
      if (!std::isfinite(batch_loss) || !all_finite(grads)) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1) +
                                ", batch " + std::to_string(batch_index + 1),
                            epoch + 1, batch_index + 1);
      }
      loss_sum += batch_loss;
      grads[0].value.row(kPadId).setZero();
      adam.step(params, grads);
      params[0].value.row(kPadId).setZero();
      round_to_float(params);
      if (!all_finite(params)) {
        throw TrainingError("non-finite parameters at epoch " + std::to_string(epoch + 1) +
                                ", batch " + std::to_string(batch_index + 1),
                            epoch + 1, batch_index + 1);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!split.validation.empty()) {
      const auto val = evaluate(model, std::span<const EncodedExample>(split.validation));
      rec.validation_loss = val.mean_loss;
      rec.validation_accuracy = val.accuracy;
    }
    history.epochs.push_back(rec);
  }
  return history;
}

}  // namespace xaitext
