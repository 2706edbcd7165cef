#pragma once

// Single-file model checkpoint:
//
//   magic      8 bytes  "XAITCKPT"
//   version    u32      kCheckpointVersion
//   arch       u32      1 = CNN, 2 = LSTM
//   hyper      u32 length + UTF-8 JSON of the architecture config
//   tensors    u32 count, then per tensor:
//                u32 name length + name, u32 rows, u32 cols,
//                rows*cols float32 in row-major order
//   crc        u32      CRC-32 (IEEE) of every preceding byte
//
// All integers and floats are little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/crc.hpp>
#include <json.hpp>

#include "xaitext/error.hpp"
#include "xaitext/model/cnn.hpp"
#include "xaitext/model/lstm.hpp"

namespace xaitext {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "XAITCKPT";

enum class ArchitectureTag : std::uint32_t { cnn = 1, lstm = 2 };

template <class M>
constexpr ArchitectureTag architecture_tag();
template <>
constexpr ArchitectureTag architecture_tag<CnnClassifier>() { return ArchitectureTag::cnn; }
template <>
constexpr ArchitectureTag architecture_tag<LstmClassifier>() { return ArchitectureTag::lstm; }

using AnyClassifier = std::variant<CnnClassifier, LstmClassifier>;

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  const std::vector<char>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::format, "checkpoint: unexpected end of data");
    }
  }
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32(const char* data, std::size_t size) {
  boost::crc_32_type crc;
  crc.process_bytes(data, size);
  return crc.checksum();
}

struct DecodedCheckpoint {
  ArchitectureTag tag;
  nlohmann::json hyperparameters;
  ParameterSet params;
};

inline DecodedCheckpoint decode_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint " + path.string());
  const std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < kCheckpointMagic.size() ||
      std::string_view(data.data(), kCheckpointMagic.size()) != kCheckpointMagic) {
    throw CheckpointError(CheckpointError::Kind::bad_magic, path.string() + " is not a checkpoint");
  }
  if (data.size() < kCheckpointMagic.size() + 4) {
    throw CheckpointError(CheckpointError::Kind::checksum, "checkpoint truncated: " + path.string());
  }
  const std::size_t body = data.size() - 4;
  ByteReader tail(data.data() + body, 4);
  if (tail.u32() != crc32(data.data(), body)) {
    throw CheckpointError(CheckpointError::Kind::checksum,
                          "checkpoint checksum mismatch (truncated or corrupt): " + path.string());
  }
  ByteReader r(data.data() + kCheckpointMagic.size(), body - kCheckpointMagic.size());
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::version,
                          "checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }
  DecodedCheckpoint out;
  const auto tag = r.u32();
  if (tag != 1 && tag != 2) {
    throw CheckpointError(CheckpointError::Kind::architecture,
                          "unknown architecture tag " + std::to_string(tag));
  }
  out.tag = static_cast<ArchitectureTag>(tag);
  try {
    out.hyperparameters = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::format,
                          std::string("checkpoint hyperparameters: ") + e.what());
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const auto rows = r.u32();
    const auto cols = r.u32();
    t.value.resize(rows, cols);
    for (std::uint32_t a = 0; a < rows; ++a) {
      for (std::uint32_t b = 0; b < cols; ++b) t.value(a, b) = static_cast<double>(r.f32());
    }
    out.params.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError(CheckpointError::Kind::format, "checkpoint: trailing bytes");
  return out;
}

template <class M>
M rebuild(DecodedCheckpoint&& ck) {
  try {
    return M(ck.hyperparameters.get<typename M::Config>(), std::move(ck.params));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::format,
                          std::string("checkpoint hyperparameters: ") + e.what());
  } catch (const DimensionError& e) {
    throw CheckpointError(CheckpointError::Kind::format, e.what());
  }
}

inline const char* tag_name(ArchitectureTag t) { return t == ArchitectureTag::cnn ? "CNN" : "LSTM"; }

}  // namespace detail

template <class M>
void save_model(const std::filesystem::path& path, const M& model) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(architecture_tag<M>()));
  w.str(nlohmann::json(model.config()).dump());
  const auto& params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& t : params) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.value.rows()));
    w.u32(static_cast<std::uint32_t>(t.value.cols()));
    for (Eigen::Index a = 0; a < t.value.rows(); ++a) {
      for (Eigen::Index b = 0; b < t.value.cols(); ++b) w.f32(static_cast<float>(t.value(a, b)));
    }
  }
  const auto crc = detail::crc32(w.bytes().data(), w.bytes().size());
  w.u32(crc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed: " + path.string());
}

inline void save_model(const std::filesystem::path& path, const AnyClassifier& model) {
  std::visit([&](const auto& m) { save_model(path, m); }, model);
}

// Loads a checkpoint that must hold architecture M.
template <class M>
M load_model(const std::filesystem::path& path) {
  auto ck = detail::decode_checkpoint(path);
  if (ck.tag != architecture_tag<M>()) {
    throw CheckpointError(CheckpointError::Kind::architecture,
                          std::string("checkpoint holds a ") + detail::tag_name(ck.tag) +
                              " model, requested " + detail::tag_name(architecture_tag<M>()));
  }
  return detail::rebuild<M>(std::move(ck));
}

inline AnyClassifier load_any_model(const std::filesystem::path& path) {
  auto ck = detail::decode_checkpoint(path);
  if (ck.tag == ArchitectureTag::cnn) return detail::rebuild<CnnClassifier>(std::move(ck));
  return detail::rebuild<LstmClassifier>(std::move(ck));
}

}  // namespace xaitext
