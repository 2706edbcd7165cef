#pragma once

#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xaitext/error.hpp"
#include "xaitext/text_pipeline.hpp"

namespace xaitext {

// Per-position scores for one prediction. scores has the same length as the
// explained sequence and is exactly zero at PAD positions.
struct AttributionVector {
  std::vector<double> scores;
  int explained_class = 1;
  std::string method;
  double wall_time_s = 0.0;
  std::vector<std::string> notes;

  std::size_t size() const noexcept { return scores.size(); }
  double operator[](std::size_t i) const { return scores[i]; }
};

// Scores for the non-PAD positions of seq, in order, spread onto the full
// sequence length.
inline std::vector<double> align_to_sequence(std::span<const double> word_scores,
                                             const TokenSequence& seq) {
  const auto active = seq.active_positions();
  if (word_scores.size() != active.size()) {
    throw DimensionError("align_to_sequence: " + std::to_string(word_scores.size()) +
                         " scores for " + std::to_string(active.size()) + " tokens");
  }
  std::vector<double> out(seq.size(), 0.0);
  for (std::size_t k = 0; k < active.size(); ++k) out[active[k]] = word_scores[k];
  return out;
}

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start_;
    return d.count() > 0.0 ? d.count() : 1e-9;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline AttributionVector finish(std::vector<double> scores, const TokenSequence& seq,
                                std::string method, const Stopwatch& clock,
                                std::vector<std::string> notes = {}) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!seq.is_active(i)) scores[i] = 0.0;
    if (!std::isfinite(scores[i])) {
      throw ExplanationError(method + ": non-finite attribution at position " + std::to_string(i));
    }
  }
  AttributionVector out;
  out.scores = std::move(scores);
  out.method = std::move(method);
  out.notes = std::move(notes);
  out.wall_time_s = clock.seconds();
  return out;
}

inline TokenSequence keep_positions(const TokenSequence& seq, std::span<const std::size_t> active,
                                    const std::vector<char>& keep) {
  std::vector<TokenId> ids(seq.ids().begin(), seq.ids().end());
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (!keep[k]) ids[active[k]] = kPadId;
  }
  return TokenSequence(std::move(ids));
}

}  // namespace detail

// JSON record of one explanation. tokens lists the non-PAD words in order.
// With include_time false the wall time is written as 0 so that reruns
// produce identical bytes.
inline nlohmann::json attribution_record(const AttributionVector& attr, const TokenSequence& seq,
                                         const Vocabulary& vocab, const std::string& model_id,
                                         std::uint64_t seed, const nlohmann::json& config,
                                         bool include_time = true) {
  return {{"method", attr.method},
          {"model_id", model_id},
          {"sequence", std::vector<TokenId>(seq.ids().begin(), seq.ids().end())},
          {"tokens", decode(seq, vocab)},
          {"scores", attr.scores},
          {"explained_class", attr.explained_class},
          {"seed", seed},
          {"wall_time_s", include_time ? attr.wall_time_s : 0.0},
          {"notes", attr.notes},
          {"config", config}};
}

}  // namespace xaitext
