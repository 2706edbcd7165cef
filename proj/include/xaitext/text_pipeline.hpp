#pragma once

// Text ingestion, tokenization, capped vocabulary and fixed-length encoding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xaitext/error.hpp"
#include "xaitext/rng.hpp"

namespace xaitext {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kOovId = 1;
inline constexpr std::string_view kOovToken = "<OOV>";
inline constexpr std::size_t kDefaultSequenceLength = 750;
inline constexpr std::size_t kDefaultVocabularyCapacity = 20000;

struct LabeledExample {
  std::string text;
  int label = 0;  // 0 = fake, 1 = true
};

// ---------------------------------------------------------------------------
// Tokenizer

namespace detail {

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) ||
         (u >= 123 && u <= 126);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_ascii_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ascii_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace detail

// Lowercases ASCII letters, splits on ASCII whitespace and strips punctuation
// from both ends of every token. Inner punctuation ("don't", "u.s") is kept.
// Tokens that are pure punctuation disappear. Non-ASCII bytes pass through.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_ascii_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !detail::is_ascii_space(text[j])) ++j;
    std::string_view word = text.substr(i, j - i);
    while (!word.empty() && detail::is_ascii_punct(word.front())) word.remove_prefix(1);
    while (!word.empty() && detail::is_ascii_punct(word.back())) word.remove_suffix(1);
    if (!word.empty()) {
      std::string lowered(word);
      for (char& c : lowered) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
      tokens.push_back(std::move(lowered));
    }
    i = j;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary

// Frequency-ranked word -> id map. Id 0 is PAD, id 1 is OOV, real words take
// ids 2..capacity+1 in decreasing frequency (ties: ascending word).
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}, 0) {}

  // Words listed in id order; words[0] receives id 2.
  Vocabulary(std::vector<std::string> ranked_words, std::size_t capacity)
      : capacity_(std::max(capacity, ranked_words.size())) {
    id_to_token_.reserve(ranked_words.size() + 2);
    id_to_token_.emplace_back();  // PAD has no word
    id_to_token_.emplace_back(kOovToken);
    for (auto& w : ranked_words) {
      if (w.empty()) throw DataError("vocabulary: empty word");
      const auto id = static_cast<TokenId>(id_to_token_.size());
      if (!token_to_id_.emplace(w, id).second) {
        throw DataError("vocabulary: duplicate word '" + w + "'");
      }
      id_to_token_.push_back(std::move(w));
    }
  }

  static Vocabulary build(std::span<const LabeledExample> corpus, std::size_t capacity) {
    if (corpus.empty()) throw DataError("build_vocabulary: empty corpus");
    if (capacity < 1) throw DataError("build_vocabulary: capacity must be >= 1");
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& ex : corpus) {
      for (auto& tok : tokenize(ex.text)) ++counts[std::move(tok)];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (ranked.size() > capacity) ranked.resize(capacity);
    std::vector<std::string> words;
    words.reserve(ranked.size());
    for (auto& [w, c] : ranked) words.push_back(std::move(w));
    return Vocabulary(std::move(words), capacity);
  }

  // Total id count, reserved ids included.
  std::size_t size() const noexcept { return id_to_token_.size(); }
  std::size_t word_count() const noexcept { return id_to_token_.size() - 2; }
  std::size_t capacity() const noexcept { return capacity_; }

  TokenId id_of(std::string_view word) const {
    const auto it = token_to_id_.find(std::string(word));
    return it == token_to_id_.end() ? kOovId : it->second;
  }

  bool contains(std::string_view word) const {
    return token_to_id_.find(std::string(word)) != token_to_id_.end();
  }

  // Word for a real id, kOovToken for OOV. PAD and out-of-range ids throw.
  const std::string& token_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(size()));
    }
    if (id == kPadId) throw DataError("PAD id has no token");
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  nlohmann::json to_json() const {
    nlohmann::json words = nlohmann::json::object();
    for (std::size_t id = 2; id < id_to_token_.size(); ++id) {
      words[id_to_token_[id]] = id;
    }
    return {{"format", "xaitext.vocabulary"},
            {"version", 1},
            {"capacity", capacity_},
            {"pad_id", kPadId},
            {"oov_id", kOovId},
            {"oov_token", kOovToken},
            {"token_to_id", std::move(words)}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    try {
      if (j.at("format") != "xaitext.vocabulary") throw DataError("not a vocabulary document");
      if (j.at("version") != 1) throw DataError("unsupported vocabulary version");
      if (j.at("pad_id") != kPadId || j.at("oov_id") != kOovId) {
        throw DataError("vocabulary reserved ids do not match PAD=0, OOV=1");
      }
      const auto& map = j.at("token_to_id");
      std::vector<std::string> words(map.size());
      std::vector<bool> seen(map.size(), false);
      for (auto it = map.begin(); it != map.end(); ++it) {
        const auto id = it.value().get<std::int64_t>();
        const auto slot = id - 2;
        if (slot < 0 || static_cast<std::size_t>(slot) >= words.size() ||
            seen[static_cast<std::size_t>(slot)]) {
          throw DataError("vocabulary ids must be unique and contiguous from 2");
        }
        seen[static_cast<std::size_t>(slot)] = true;
        words[static_cast<std::size_t>(slot)] = it.key();
      }
      return Vocabulary(std::move(words), j.at("capacity").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed vocabulary JSON: ") + e.what());
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary to " + path.string());
    out << to_json().dump(1) << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed vocabulary JSON in " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  std::size_t capacity_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// ---------------------------------------------------------------------------
// Token sequences

// Fixed-length id vector. encode() produces post-padded sequences; PAD
// substitution (mask_remove / coalitions) may leave interior PADs, so the
// suffix property is checked with is_post_padded() rather than enforced.
class TokenSequence {
 public:
  TokenSequence() = default;
  explicit TokenSequence(std::vector<TokenId> ids) : ids_(std::move(ids)) {
    for (const auto id : ids_) {
      if (id < 0) throw DataError("negative token id");
    }
  }

  static TokenSequence all_pad(std::size_t length) {
    return TokenSequence(std::vector<TokenId>(length, kPadId));
  }

  std::size_t size() const noexcept { return ids_.size(); }
  TokenId operator[](std::size_t i) const { return ids_[i]; }
  std::span<const TokenId> ids() const noexcept { return ids_; }
  auto begin() const noexcept { return ids_.begin(); }
  auto end() const noexcept { return ids_.end(); }

  bool is_active(std::size_t i) const { return ids_[i] != kPadId; }

  std::size_t active_count() const {
    return static_cast<std::size_t>(
        std::count_if(ids_.begin(), ids_.end(), [](TokenId id) { return id != kPadId; }));
  }

  std::vector<std::size_t> active_positions() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (ids_[i] != kPadId) out.push_back(i);
    }
    return out;
  }

  bool is_post_padded() const {
    const auto first_pad = std::find(ids_.begin(), ids_.end(), kPadId);
    return std::all_of(first_pad, ids_.end(), [](TokenId id) { return id == kPadId; });
  }

  // Copy with position i replaced by `id`.
  TokenSequence with(std::size_t i, TokenId id) const {
    TokenSequence out = *this;
    out.ids_.at(i) = id;
    return out;
  }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;

 private:
  std::vector<TokenId> ids_;
};

// Throws if any id is outside [0, vocab_size).
inline void check_ids(const TokenSequence& seq, std::size_t vocab_size) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (static_cast<std::size_t>(seq[i]) >= vocab_size) {
      throw DataError("token id " + std::to_string(seq[i]) + " at position " + std::to_string(i) +
                      " outside vocabulary of size " + std::to_string(vocab_size));
    }
  }
}

inline TokenSequence encode_tokens(std::span<const std::string> tokens, const Vocabulary& vocab,
                                   std::size_t length) {
  if (length < 1) throw DataError("encode: sequence length must be >= 1");
  std::vector<TokenId> ids(length, kPadId);
  const std::size_t n = std::min(length, tokens.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id_of(tokens[i]);
  return TokenSequence(std::move(ids));
}

// Unknown words map to OOV, long texts keep their first `length` tokens and
// short texts are post-padded with PAD.
inline TokenSequence encode(std::string_view text, const Vocabulary& vocab, std::size_t length) {
  const auto tokens = tokenize(text);
  return encode_tokens(tokens, vocab, length);
}

inline std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
  check_ids(seq, vocab.size());
  std::vector<std::string> out;
  for (const auto id : seq) {
    if (id != kPadId) out.push_back(vocab.token_of(id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion (RFC 4180)

namespace detail {

// Splits CSV text into records of fields. Quoted fields may contain commas,
// doubled quotes and line breaks. Each record carries its 1-based start line.
struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

inline std::vector<CsvRecord> parse_csv(std::string_view data) {
  std::vector<CsvRecord> records;
  if (data.size() >= 3 && data.substr(0, 3) == "\xEF\xBB\xBF") data.remove_prefix(3);
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  current.line = 1;
  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = current.fields.size() == 1 && current.fields[0].empty();
    if (!blank) records.push_back(std::move(current));
    current = CsvRecord{};
    current.line = line;
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') {
      // handled by the '\n' branch on the next iteration
    } else if (c == '\n') {
      ++line;
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw DataError("CSV: unterminated quoted field starting near line " +
                                 std::to_string(current.line));
  if (field_started || !field.empty() || !current.fields.empty()) end_record();
  return records;
}

inline std::string csv_quote(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

}  // namespace detail

// Reads a CSV with a header naming `text` and `label` columns (other columns
// are ignored). Every bad row is collected and reported in one DataError.
inline std::vector<LabeledExample> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string data = buffer.str();
  const auto records = detail::parse_csv(data);
  if (records.empty()) throw DataError("dataset " + path.string() + " has no header row");

  const auto& header = records.front().fields;
  std::size_t text_col = header.size();
  std::size_t label_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = detail::trim(header[c]);
    if (name == "text") text_col = c;
    if (name == "label") label_col = c;
  }
  if (text_col == header.size()) throw DataError("dataset is missing the 'text' column");
  if (label_col == header.size()) throw DataError("dataset is missing the 'label' column");

  std::vector<LabeledExample> out;
  out.reserve(records.size() - 1);
  std::vector<std::size_t> bad_rows;
  std::string reasons;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& fields = records[r].fields;
    const std::size_t row = r;  // 1-based data row number
    auto reject = [&](const std::string& why) {
      bad_rows.push_back(row);
      if (bad_rows.size() <= 20) {
        reasons += "\n  row " + std::to_string(row) + " (line " +
                   std::to_string(records[r].line) + "): " + why;
      }
    };
    if (fields.size() != header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields, got " +
             std::to_string(fields.size()));
      continue;
    }
    const auto label = detail::trim(fields[label_col]);
    if (label != "0" && label != "1") {
      reject("label '" + std::string(label) + "' is not 0 or 1");
      continue;
    }
    if (detail::trim(fields[text_col]).empty()) {
      reject("empty text");
      continue;
    }
    out.push_back({fields[text_col], label == "1" ? 1 : 0});
  }
  if (!bad_rows.empty()) {
    std::string msg = "dataset " + path.string() + ": " + std::to_string(bad_rows.size()) +
                      " invalid row(s)" + reasons;
    if (bad_rows.size() > 20) msg += "\n  ...";
    throw DataError(msg, std::move(bad_rows));
  }
  return out;
}

inline void write_csv(const std::filesystem::path& path, std::span<const LabeledExample> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "text,label\n";
  for (const auto& ex : rows) out << detail::csv_quote(ex.text) << ',' << ex.label << '\n';
}

// ---------------------------------------------------------------------------
// Encoded corpus and dataset split

struct EncodedExample {
  std::size_t id = 0;  // row index in the source corpus
  TokenSequence sequence;
  int label = 0;
};

inline std::vector<EncodedExample> encode_corpus(std::span<const LabeledExample> corpus,
                                                 const Vocabulary& vocab, std::size_t length) {
  std::vector<EncodedExample> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.push_back({i, encode(corpus[i].text, vocab, length), corpus[i].label});
  }
  return out;
}

struct SplitRatios {
  double train = 0.63;
  double validation = 0.07;
  double test = 0.30;
};

template <class T>
struct DatasetSplit {
  std::vector<T> train;
  std::vector<T> validation;
  std::vector<T> test;
  std::uint64_t seed = 0;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

// Floor for train and validation, remainder to test.
inline SplitSizes split_sizes(std::size_t n, const SplitRatios& r) {
  if (!(r.train > 0 && r.validation > 0 && r.test > 0)) {
    throw DataError("split ratios must be positive");
  }
  if (std::abs(r.train + r.validation + r.test - 1.0) > 1e-9) {
    throw DataError("split ratios must sum to 1");
  }
  // The 1e-9 slack keeps exact products such as 0.07 * 100 from flooring down.
  const auto nd = static_cast<double>(n);
  SplitSizes s;
  s.train = static_cast<std::size_t>(std::floor(r.train * nd + 1e-9));
  s.validation = static_cast<std::size_t>(std::floor(r.validation * nd + 1e-9));
  s.train = std::min(s.train, n);
  s.validation = std::min(s.validation, n - s.train);
  s.test = n - s.train - s.validation;
  return s;
}

// Seeded Fisher-Yates shuffle followed by a contiguous partition.
template <class T>
DatasetSplit<T> split_dataset(std::vector<T> corpus, const SplitRatios& ratios,
                              std::uint64_t seed) {
  const auto sizes = split_sizes(corpus.size(), ratios);
  Rng rng(seed);
  rng.shuffle(corpus.begin(), corpus.end());
  DatasetSplit<T> out;
  out.seed = seed;
  auto first = std::make_move_iterator(corpus.begin());
  out.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes.train));
  first += static_cast<std::ptrdiff_t>(sizes.train);
  out.validation.assign(first, first + static_cast<std::ptrdiff_t>(sizes.validation));
  first += static_cast<std::ptrdiff_t>(sizes.validation);
  out.test.assign(first, std::make_move_iterator(corpus.end()));
  return out;
}

}  // namespace xaitext
