#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xaitext/attribution/attribution_vector.hpp"
#include "xaitext/model/classifier.hpp"
#include "xaitext/rng.hpp"

namespace xaitext {

// Which probability the metrics track: the model's own predicted class for
// the unperturbed input, or always P(1).
enum class ClassMode { predicted, positive };

NLOHMANN_JSON_SERIALIZE_ENUM(ClassMode, {{ClassMode::predicted, "predicted"},
                                         {ClassMode::positive, "positive"}})

struct TopKSet {
  std::vector<std::size_t> indices;
  std::size_t k = 0;
};

// The k non-PAD positions with the largest |a|, in that order; ties go to the
// lower position.
inline TopKSet top_k(std::span<const double> attr, const TokenSequence& seq, std::size_t k) {
  if (attr.size() != seq.size()) {
    throw DimensionError("top_k: attribution length " + std::to_string(attr.size()) +
                         " != sequence length " + std::to_string(seq.size()));
  }
  auto idx = seq.active_positions();
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(attr[a]) > std::abs(attr[b]);
  });
  idx.resize(std::min(k, idx.size()));
  return {std::move(idx), k};
}

inline TopKSet top_k(const AttributionVector& attr, const TokenSequence& seq, std::size_t k) {
  return top_k(std::span<const double>(attr.scores), seq, k);
}

namespace detail {

inline std::vector<char> position_set(const TokenSequence& seq, std::span<const std::size_t> s) {
  std::vector<char> in(seq.size(), 0);
  for (const auto i : s) {
    if (i >= seq.size()) {
      throw PerturbationError("position " + std::to_string(i) + " outside sequence of length " +
                              std::to_string(seq.size()));
    }
    if (!seq.is_active(i)) throw PerturbationError("position " + std::to_string(i) + " is already PAD");
    in[i] = 1;
  }
  return in;
}

}  // namespace detail

// x \ S: positions in S replaced by PAD.
inline TokenSequence mask_remove(const TokenSequence& seq, std::span<const std::size_t> s) {
  const auto in = detail::position_set(seq, s);
  std::vector<TokenId> ids(seq.ids().begin(), seq.ids().end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (in[i]) ids[i] = kPadId;
  }
  return TokenSequence(std::move(ids));
}

// x | S: every position outside S replaced by PAD.
inline TokenSequence mask_keep(const TokenSequence& seq, std::span<const std::size_t> s) {
  const auto in = detail::position_set(seq, s);
  std::vector<TokenId> ids(seq.ids().begin(), seq.ids().end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!in[i]) ids[i] = kPadId;
  }
  return TokenSequence(std::move(ids));
}

namespace detail {

// f as selected by the class mode, pinned to the class predicted for x.
class TrackedProbability {
 public:
  TrackedProbability(double p_original, ClassMode mode)
      : flip_(mode == ClassMode::predicted && predicted_label(p_original) == 0) {}
  double operator()(double p_positive) const { return flip_ ? 1.0 - p_positive : p_positive; }

 private:
  static int predicted_label(double p) { return p >= 0.5 ? 1 : 0; }
  bool flip_;
};

template <BlackBoxClassifier M>
double p_positive(const M& model, const TokenSequence& seq) {
  return positive_probability(model, seq);
}

// x(0) .. x(r): successive PAD substitution of the ranked positions.
inline std::vector<TokenSequence> removal_path(const TokenSequence& seq,
                                               std::span<const std::size_t> ranked) {
  std::vector<TokenSequence> path{seq};
  path.reserve(ranked.size() + 1);
  for (const auto i : ranked) path.push_back(path.back().with(i, kPadId));
  return path;
}

}  // namespace detail

template <BlackBoxClassifier M>
double comprehensiveness(const M& model, const TokenSequence& seq, std::span<const double> attr,
                         std::size_t k, ClassMode mode = ClassMode::predicted) {
  const auto s = top_k(attr, seq, k);
  const double p0 = detail::p_positive(model, seq);
  const detail::TrackedProbability f(p0, mode);
  return f(p0) - f(detail::p_positive(model, mask_remove(seq, s.indices)));
}

template <BlackBoxClassifier M>
double sufficiency(const M& model, const TokenSequence& seq, std::span<const double> attr,
                   std::size_t k, ClassMode mode = ClassMode::predicted) {
  const auto s = top_k(attr, seq, k);
  const double p0 = detail::p_positive(model, seq);
  const detail::TrackedProbability f(p0, mode);
  return f(p0) - f(detail::p_positive(model, mask_keep(seq, s.indices)));
}

// Mean confidence drop along the removal path. When fewer than m tokens are
// active the path is shorter and the mean is over its realized length.
template <BlackBoxClassifier M>
double aopc(const M& model, const TokenSequence& seq, std::span<const double> attr, std::size_t m,
            ClassMode mode = ClassMode::predicted) {
  if (m < 1) throw ConfigError("aopc: m must be >= 1");
  const auto ranked = top_k(attr, seq, m);
  if (ranked.indices.empty()) return 0.0;
  const auto path = detail::removal_path(seq, ranked.indices);
  const auto p = model.predict_positive(std::span<const TokenSequence>(path));
  const detail::TrackedProbability f(p[0], mode);
  double total = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) total += f(p[0]) - f(p[i]);
  return total / static_cast<double>(ranked.indices.size());
}

// Smallest i <= k whose removal path point changes the predicted label
// (P(1) >= 0.5), or nullopt if none does.
template <BlackBoxClassifier M>
std::optional<std::size_t> flip_at_k(const M& model, const TokenSequence& seq,
                                     std::span<const double> attr, std::size_t k) {
  const auto ranked = top_k(attr, seq, k);
  const auto path = detail::removal_path(seq, ranked.indices);
  const auto p = model.predict_positive(std::span<const TokenSequence>(path));
  const bool original = p[0] >= 0.5;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if ((p[i] >= 0.5) != original) return i;
  }
  return std::nullopt;
}

// Value used in numeric means: the flip position, or k + 1 without a flip.
inline double flip_value(const std::optional<std::size_t>& flip, std::size_t k) {
  return static_cast<double>(flip ? *flip : k + 1);
}

struct EvalConfig {
  std::size_t k = 20;
  std::optional<std::size_t> m;  // removal-path length, defaults to k
  std::size_t n_instances = 60;
  std::uint64_t seed = 42;
  ClassMode mode = ClassMode::predicted;

  std::size_t path_length() const { return m.value_or(k); }

  void validate() const {
    if (k < 1) throw ConfigError("eval: k must be >= 1");
    if (m && *m < 1) throw ConfigError("eval: m must be >= 1");
    if (n_instances < 1) throw ConfigError("eval: n_instances must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"k", c.k}, {"m", c.path_length()}, {"n_instances", c.n_instances}, {"seed", c.seed},
       {"mode", c.mode}};
}

struct MetricsRecord {
  std::size_t instance_id = 0;
  std::string method;
  double comp = 0.0;
  double suff = 0.0;
  double aopc = 0.0;
  std::optional<std::size_t> flip_at_k;
  double flip_value = 0.0;
  double explain_time_s = 0.0;
};

// All four metrics for one explanation. Model queries are shared between
// AOPC and Flip@k where their removal paths overlap.
template <BlackBoxClassifier M>
MetricsRecord compute_metrics(const M& model, const TokenSequence& seq, const AttributionVector& attr,
                              const EvalConfig& cfg) {
  cfg.validate();
  const std::span<const double> a(attr.scores);
  const std::size_t m = cfg.path_length();
  const auto ranked = top_k(a, seq, std::max(cfg.k, m));
  const auto path = detail::removal_path(seq, ranked.indices);
  const auto sk = top_k(a, seq, cfg.k);
  std::vector<TokenSequence> batch = path;
  batch.push_back(mask_keep(seq, sk.indices));
  const auto p = model.predict_positive(std::span<const TokenSequence>(batch));
  const double p_keep = p.back();
  const detail::TrackedProbability f(p[0], cfg.mode);

  MetricsRecord r;
  r.method = attr.method;
  r.explain_time_s = attr.wall_time_s;
  r.comp = f(p[0]) - f(p[sk.indices.size()]);
  r.suff = f(p[0]) - f(p_keep);
  const std::size_t realized = std::min(m, ranked.indices.size());
  if (realized > 0) {
    double total = 0.0;
    for (std::size_t i = 1; i <= realized; ++i) total += f(p[0]) - f(p[i]);
    r.aopc = total / static_cast<double>(realized);
  }
  const bool original = p[0] >= 0.5;
  for (std::size_t i = 1; i <= sk.indices.size(); ++i) {
    if ((p[i] >= 0.5) != original) {
      r.flip_at_k = i;
      break;
    }
  }
  r.flip_value = flip_value(r.flip_at_k, cfg.k);
  return r;
}

struct AggregateRow {
  std::string method;
  double comp = 0.0;
  double suff = 0.0;
  double aopc = 0.0;
  double flip_at_k = 0.0;
  double time_s = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
  std::size_t no_flip = 0;
};

struct InstanceFailure {
  std::size_t instance_id = 0;
  std::string message;
};

struct ExplainerEvaluation {
  std::vector<MetricsRecord> records;
  std::vector<InstanceFailure> failures;
  AggregateRow aggregate;
};

inline AggregateRow aggregate(const std::string& method, std::span<const MetricsRecord> records,
                              std::size_t excluded) {
  AggregateRow row;
  row.method = method;
  row.evaluated = records.size();
  row.excluded = excluded;
  for (const auto& r : records) {
    row.comp += r.comp;
    row.suff += r.suff;
    row.aopc += r.aopc;
    row.flip_at_k += r.flip_value;
    row.time_s += r.explain_time_s;
    row.no_flip += r.flip_at_k ? 0 : 1;
  }
  if (!records.empty()) {
    const auto n = static_cast<double>(records.size());
    row.comp /= n;
    row.suff /= n;
    row.aopc /= n;
    row.flip_at_k /= n;
    row.time_s /= n;
  }
  return row;
}

// Seeded choice of n instances, returned in their original order.
template <class T>
std::vector<T> sample_instances(std::span<const T> pool, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n < pool.size()) {
    Rng rng(seed);
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<T> out;
  out.reserve(idx.size());
  for (const auto i : idx) out.push_back(pool[i]);
  return out;
}

// Explains and scores every instance. Instances whose explanation or
// scoring fails are recorded and left out of the aggregate.
template <BlackBoxClassifier M>
ExplainerEvaluation evaluate_explainer(
    const M& model, std::span<const EncodedExample> instances,
    const std::function<AttributionVector(const TokenSequence&)>& explainer,
    const std::string& method, const EvalConfig& cfg) {
  cfg.validate();
  ExplainerEvaluation out;
  for (const auto& ex : instances) {
    try {
      auto rec = compute_metrics(model, ex.sequence, explainer(ex.sequence), cfg);
      rec.instance_id = ex.id;
      rec.method = method;
      out.records.push_back(std::move(rec));
    } catch (const Error& e) {
      out.failures.push_back({ex.id, e.what()});
    }
  }
  out.aggregate = aggregate(method, out.records, out.failures.size());
  return out;
}

// One JSON-lines entry. flip_at_k is null when no flip occurred.
inline nlohmann::json metrics_record_json(const MetricsRecord& r, bool include_time = true) {
  return {{"instance_id", r.instance_id},
          {"method", r.method},
          {"delta_comp", r.comp},
          {"delta_suff", r.suff},
          {"aopc", r.aopc},
          {"flip_at_k", r.flip_at_k ? nlohmann::json(*r.flip_at_k) : nlohmann::json(nullptr)},
          {"flip_at_k_value", r.flip_value},
          {"time_s", include_time ? r.explain_time_s : 0.0}};
}

}  // namespace xaitext
