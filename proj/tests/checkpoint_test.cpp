#include "xaitext/model/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gradient_check.hpp"

namespace xaitext {
namespace {

namespace fs = std::filesystem;

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("xaitext_ckpt_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  void write_bytes(const fs::path& p, const std::vector<char>& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  }

  fs::path dir_;
};

CnnConfig small_cnn() {
  CnnConfig c;
  c.vocab_size = 40;
  c.embedding_dim = 6;
  c.filters = 5;
  c.kernel_width = 3;
  return c;
}

LstmConfig small_lstm() {
  LstmConfig c;
  c.vocab_size = 40;
  c.embedding_dim = 5;
  c.hidden_units = 4;
  return c;
}

template <class M>
void expect_same_predictions(const M& a, const M& b, std::uint64_t seed) {
  Rng rng(seed);
  for (int i = 0; i < 100; ++i) {
    const auto seq = gradcheck::random_sequence(rng, 12, a.config().vocab_size);
    ASSERT_EQ(a.predict_positive(seq), b.predict_positive(seq)) << "input " << i;
  }
}

TEST_F(CheckpointTest, CnnRoundTripPredictsIdentically) {
  CnnClassifier model(small_cnn(), 3);
  Rng noise(9);
  gradcheck::perturb(model.parameters(), noise, 0.3);
  round_to_float(model.parameters());
  save_model(dir_ / "m.ckpt", model);
  const auto loaded = load_model<CnnClassifier>(dir_ / "m.ckpt");
  EXPECT_EQ(nlohmann::json(loaded.config()), nlohmann::json(model.config()));
  expect_same_predictions(model, loaded, 11);
}

TEST_F(CheckpointTest, LstmRoundTripPredictsIdentically) {
  LstmClassifier model(small_lstm(), 4);
  save_model(dir_ / "m.ckpt", model);
  const auto loaded = load_model<LstmClassifier>(dir_ / "m.ckpt");
  expect_same_predictions(model, loaded, 12);
}

TEST_F(CheckpointTest, SavingTwiceGivesIdenticalBytes) {
  CnnClassifier model(small_cnn(), 3);
  save_model(dir_ / "a.ckpt", model);
  save_model(dir_ / "b.ckpt", load_model<CnnClassifier>(dir_ / "a.ckpt"));
  EXPECT_EQ(read_bytes(dir_ / "a.ckpt"), read_bytes(dir_ / "b.ckpt"));
}

TEST_F(CheckpointTest, LoadAnyDispatchesOnTag) {
  save_model(dir_ / "c.ckpt", CnnClassifier(small_cnn(), 1));
  save_model(dir_ / "l.ckpt", LstmClassifier(small_lstm(), 1));
  EXPECT_TRUE(std::holds_alternative<CnnClassifier>(load_any_model(dir_ / "c.ckpt")));
  EXPECT_TRUE(std::holds_alternative<LstmClassifier>(load_any_model(dir_ / "l.ckpt")));
}

CheckpointError::Kind load_error(const fs::path& p) {
  try {
    load_model<CnnClassifier>(p);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected CheckpointError";
  return CheckpointError::Kind::io;
}

TEST_F(CheckpointTest, TruncationIsAChecksumError) {
  save_model(dir_ / "m.ckpt", CnnClassifier(small_cnn(), 3));
  auto bytes = read_bytes(dir_ / "m.ckpt");
  for (std::size_t keep : {bytes.size() - 1, bytes.size() / 2, std::size_t{12}}) {
    write_bytes(dir_ / "t.ckpt", std::vector<char>(bytes.begin(), bytes.begin() + keep));
    EXPECT_EQ(load_error(dir_ / "t.ckpt"), CheckpointError::Kind::checksum) << keep;
  }
}

TEST_F(CheckpointTest, FlippedByteIsAChecksumError) {
  save_model(dir_ / "m.ckpt", CnnClassifier(small_cnn(), 3));
  auto bytes = read_bytes(dir_ / "m.ckpt");
  bytes[bytes.size() / 2] ^= 0x10;
  write_bytes(dir_ / "m.ckpt", bytes);
  EXPECT_EQ(load_error(dir_ / "m.ckpt"), CheckpointError::Kind::checksum);
}

TEST_F(CheckpointTest, WrongArchitectureRejected) {
  save_model(dir_ / "l.ckpt", LstmClassifier(small_lstm(), 1));
  EXPECT_EQ(load_error(dir_ / "l.ckpt"), CheckpointError::Kind::architecture);
}

TEST_F(CheckpointTest, VersionMismatchDetected) {
  save_model(dir_ / "m.ckpt", CnnClassifier(small_cnn(), 3));
  auto bytes = read_bytes(dir_ / "m.ckpt");
  bytes[8] = 7;
  bytes.resize(bytes.size() - 4);
  const auto crc = detail::crc32(bytes.data(), bytes.size());
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((crc >> (8 * i)) & 0xFF));
  write_bytes(dir_ / "m.ckpt", bytes);
  EXPECT_EQ(load_error(dir_ / "m.ckpt"), CheckpointError::Kind::version);
}

TEST_F(CheckpointTest, MissingAndForeignFiles) {
  EXPECT_EQ(load_error(dir_ / "absent.ckpt"), CheckpointError::Kind::io);
  write_bytes(dir_ / "x.ckpt", {'h', 'e', 'l', 'l', 'o'});
  EXPECT_EQ(load_error(dir_ / "x.ckpt"), CheckpointError::Kind::bad_magic);
}

TEST_F(CheckpointTest, HeaderLayout) {
  save_model(dir_ / "m.ckpt", LstmClassifier(small_lstm(), 1));
  const auto bytes = read_bytes(dir_ / "m.ckpt");
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.data(), 8), "XAITCKPT");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[12], 2);
}

}  // namespace
}  // namespace xaitext
