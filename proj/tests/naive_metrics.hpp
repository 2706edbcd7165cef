#pragma once

// Deliberately naive, from-scratch versions of the four faithfulness
// metrics. Used as an oracle: they share no code with the library beyond
// the model's single-sequence predict_positive.

#include <cmath>
#include <optional>
#include <vector>

#include "xaitext/text_pipeline.hpp"

namespace xaitext::naive {

// Selection sort on (|a| descending, position ascending).
inline std::vector<std::size_t> ranking(const std::vector<double>& a, const TokenSequence& x) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != 0) pool.push_back(i);
  }
  std::vector<std::size_t> out;
  while (!pool.empty()) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < pool.size(); ++j) {
      const double mj = std::fabs(a[pool[j]]);
      const double mb = std::fabs(a[pool[best]]);
      if (mj > mb || (mj == mb && pool[j] < pool[best])) best = j;
    }
    out.push_back(pool[best]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return out;
}

inline std::vector<std::size_t> first(const std::vector<std::size_t>& r, std::size_t k) {
  return {r.begin(), r.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.size()))};
}

inline TokenSequence without(const TokenSequence& x, const std::vector<std::size_t>& s) {
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < x.size(); ++i) {
    bool hit = false;
    for (auto j : s) hit = hit || j == i;
    ids.push_back(hit ? 0 : x[i]);
  }
  return TokenSequence(ids);
}

inline TokenSequence only(const TokenSequence& x, const std::vector<std::size_t>& s) {
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < x.size(); ++i) {
    bool hit = false;
    for (auto j : s) hit = hit || j == i;
    ids.push_back(hit ? x[i] : 0);
  }
  return TokenSequence(ids);
}

// Probability of the class predicted for x (or P(1) when positive_mode).
template <class M>
double f(const M& model, const TokenSequence& x, const TokenSequence& z, bool positive_mode) {
  const double pz = model.predict_positive(z);
  if (positive_mode) return pz;
  return model.predict_positive(x) >= 0.5 ? pz : 1.0 - pz;
}

template <class M>
double comp(const M& model, const TokenSequence& x, const std::vector<double>& a, std::size_t k,
            bool positive_mode) {
  const auto s = first(ranking(a, x), k);
  return f(model, x, x, positive_mode) - f(model, x, without(x, s), positive_mode);
}

template <class M>
double suff(const M& model, const TokenSequence& x, const std::vector<double>& a, std::size_t k,
            bool positive_mode) {
  const auto s = first(ranking(a, x), k);
  return f(model, x, x, positive_mode) - f(model, x, only(x, s), positive_mode);
}

template <class M>
double aopc(const M& model, const TokenSequence& x, const std::vector<double>& a, std::size_t m,
            bool positive_mode) {
  const auto r = ranking(a, x);
  const std::size_t len = std::min(m, r.size());
  if (len == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 1; i <= len; ++i) {
    total += f(model, x, x, positive_mode) - f(model, x, without(x, first(r, i)), positive_mode);
  }
  return total / static_cast<double>(len);
}

template <class M>
std::optional<std::size_t> flip(const M& model, const TokenSequence& x, const std::vector<double>& a,
                                std::size_t k) {
  const auto r = ranking(a, x);
  const bool label = model.predict_positive(x) >= 0.5;
  for (std::size_t i = 1; i <= std::min(k, r.size()); ++i) {
    if ((model.predict_positive(without(x, first(r, i))) >= 0.5) != label) return i;
  }
  return std::nullopt;
}

}  // namespace xaitext::naive
