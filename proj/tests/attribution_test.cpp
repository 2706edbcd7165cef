#include "xaitext/attribution/explain.hpp"

#include <gtest/gtest.h>

#include "gradient_check.hpp"
#include "test_models.hpp"
#include "xaitext/model/cnn.hpp"
#include "xaitext/model/lstm.hpp"

namespace xaitext {
namespace {

using testing_models::FunctionModel;
using testing_models::LinearHead;

CnnClassifier noisy_cnn(std::uint64_t seed, std::size_t width = 3,
                        ConvActivation act = ConvActivation::relu) {
  CnnConfig c;
  c.activation = act;
  c.vocab_size = 30;
  c.embedding_dim = 4;
  c.filters = 6;
  c.kernel_width = width;
  CnnClassifier m(c, seed);
  Rng rng(seed + 100);
  gradcheck::perturb(m.parameters(), rng, 0.5);
  return m;
}

LstmClassifier noisy_lstm(std::uint64_t seed) {
  LstmConfig c;
  c.vocab_size = 30;
  c.embedding_dim = 4;
  c.hidden_units = 5;
  LstmClassifier m(c, seed);
  Rng rng(seed + 100);
  gradcheck::perturb(m.parameters(), rng, 0.5);
  return m;
}

double sum(const AttributionVector& a) {
  double s = 0.0;
  for (double v : a.scores) s += v;
  return s;
}

void expect_aligned(const AttributionVector& a, const TokenSequence& seq) {
  ASSERT_EQ(a.size(), seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    ASSERT_TRUE(std::isfinite(a[i]));
    if (!seq.is_active(i)) {
      ASSERT_EQ(a[i], 0.0) << "PAD position " << i;
    }
  }
  EXPECT_GT(a.wall_time_s, 0.0);
  EXPECT_EQ(a.explained_class, 1);
}

// ---- alignment

TEST(AlignTest, PositionalMapping) {
  const TokenSequence seq({7, 9, 0, 0});
  const std::vector<double> s = {0.5, -0.2};
  EXPECT_EQ(align_to_sequence(s, seq), (std::vector<double>{0.5, -0.2, 0, 0}));
  const std::vector<double> z = {0.0, 0.0};
  EXPECT_EQ(align_to_sequence(z, seq), (std::vector<double>(4, 0.0)));
  const std::vector<double> bad = {1.0};
  EXPECT_THROW(align_to_sequence(bad, seq), DimensionError);
}

TEST(AlignTest, DuplicateWordsKeepDistinctScores) {
  // Only the first position matters to this model.
  FunctionModel m{[](const TokenSequence& s) { return s[0] == 7 ? 0.9 : 0.2; }};
  const TokenSequence seq({7, 7, 0, 0});
  const auto a = exact_shapley(m, seq);
  EXPECT_NEAR(a[0], 0.7, 1e-15);
  EXPECT_EQ(a[1], 0.0);
}

// ---- integrated gradients

TEST(IgTest, ExactOnLinearHead) {
  Rng rng(1);
  LinearHead m{Matrix(10, 3), Matrix(6, 3)};
  for (Eigen::Index i = 0; i < m.table.size(); ++i) m.table.data()[i] = rng.uniform(-1, 1);
  m.table.row(0).setZero();
  for (Eigen::Index i = 0; i < m.w.size(); ++i) m.w.data()[i] = rng.uniform(-1, 1);
  const TokenSequence seq({3, 8, 1, 5, 0, 0});
  const Matrix x = m.embed(seq);
  for (std::size_t steps : {1u, 7u, 50u}) {
    const auto a = integrated_gradients(m, seq, {steps});
    for (Eigen::Index j = 0; j < 6; ++j) {
      EXPECT_NEAR(a[static_cast<std::size_t>(j)], m.w.row(j).dot(x.row(j)), 1e-14);
    }
  }
}

TEST(IgTest, AllPadGivesZero) {
  const auto cnn = noisy_cnn(2);
  const auto lstm = noisy_lstm(2);
  const auto pad = TokenSequence::all_pad(9);
  for (double v : integrated_gradients(cnn, pad).scores) EXPECT_EQ(v, 0.0);
  for (double v : integrated_gradients(lstm, pad).scores) EXPECT_EQ(v, 0.0);
}

enum class Tolerance { relative, absolute_floor };

template <class M>
void check_completeness(const M& model, std::uint64_t seed, Tolerance tol) {
  Rng rng(seed);
  for (int i = 0; i < 10; ++i) {
    const auto seq = gradcheck::random_sequence(rng, 12, 30);
    const auto a = integrated_gradients(model, seq, {200});
    const double gap = model.predict_positive(seq) -
                       model.predict_positive(TokenSequence::all_pad(seq.size()));
    const double bound = tol == Tolerance::relative ? 1e-3 * std::max(1e-6, std::abs(gap))
                                                    : std::max(1e-3, 1e-3 * std::abs(gap));
    EXPECT_LE(std::abs(sum(a) - gap), bound) << "instance " << i;
    expect_aligned(a, seq);
  }
}

TEST(IgTest, CompletenessSmoothCnn) {
  check_completeness(noisy_cnn(3, 3, ConvActivation::tanh), 30, Tolerance::relative);
}
TEST(IgTest, CompletenessLstm) { check_completeness(noisy_lstm(3), 31, Tolerance::relative); }

// ReLU kinks on the path leave an O(1/m) midpoint-rule error, so the bound
// has an absolute floor.
TEST(IgTest, CompletenessReluCnn) {
  check_completeness(noisy_cnn(3), 32, Tolerance::absolute_floor);
}

TEST(IgTest, CompletenessErrorShrinksWithSteps) {
  const auto m = noisy_lstm(4);
  const TokenSequence seq({4, 9, 17, 2, 22, 0, 0, 0});
  const double gap = m.predict_positive(seq) - m.predict_positive(TokenSequence::all_pad(8));
  const double coarse = std::abs(sum(integrated_gradients(m, seq, {2})) - gap);
  const double fine = std::abs(sum(integrated_gradients(m, seq, {200})) - gap);
  EXPECT_LT(fine, coarse);
}

TEST(IgTest, RejectsZeroSteps) {
  EXPECT_THROW(integrated_gradients(noisy_cnn(1), TokenSequence({2, 0}), {0}), ConfigError);
}

// ---- exact Shapley

TEST(ShapleyTest, AdditiveValueFunction) {
  FunctionModel v{[](const TokenSequence& s) {
    return 0.1 + 0.3 * (s[0] != kPadId) + 0.2 * (s[1] != kPadId);
  }};
  const auto a = exact_shapley(v, TokenSequence({5, 6, 0}));
  EXPECT_NEAR(a[0], 0.3, 1e-15);
  EXPECT_NEAR(a[1], 0.2, 1e-15);
  EXPECT_EQ(a[2], 0.0);
}

TEST(ShapleyTest, SymmetricTokensOnPositionSymmetricModel) {
  // Width-1 convolution with masked average pooling is a bag of tokens.
  const auto m = noisy_cnn(5, 1);
  const TokenSequence seq({4, 11, 4, 20, 0});
  const auto a = exact_shapley(m, seq);
  EXPECT_NEAR(a[0], a[2], 1e-12);
  EXPECT_GT(std::abs(a[0]), 0.0);
}

TEST(ShapleyTest, EfficiencyOnCnnAndLstm) {
  const auto cnn = noisy_cnn(6);
  const auto lstm = noisy_lstm(6);
  Rng rng(60);
  for (int i = 0; i < 8; ++i) {
    const auto seq = gradcheck::random_sequence(rng, 10, 30);
    const auto pad = TokenSequence::all_pad(seq.size());
    const auto a = exact_shapley(cnn, seq);
    EXPECT_NEAR(sum(a), cnn.predict_positive(seq) - cnn.predict_positive(pad), 1e-10);
    const auto b = exact_shapley(lstm, seq);
    EXPECT_NEAR(sum(b), lstm.predict_positive(seq) - lstm.predict_positive(pad), 1e-10);
    expect_aligned(a, seq);
  }
}

TEST(ShapleyTest, TooManyTokens) {
  std::vector<TokenId> ids(15, 3);
  EXPECT_THROW(exact_shapley(testing_models::constant_model(0.5), TokenSequence(ids)), ExplanationError);
}

// ---- sampled SHAP

TEST(SampledShapTest, ExhaustiveMatchesExact) {
  const auto cnn = noisy_cnn(7);
  const auto lstm = noisy_lstm(7);
  Rng rng(70);
  ShapConfig cfg;
  cfg.exhaustive = true;
  for (int i = 0; i < 8; ++i) {
    const auto seq = gradcheck::random_sequence(rng, 10, 30);
    const auto e1 = exact_shapley(cnn, seq);
    const auto s1 = sampled_shap(cnn, seq, cfg);
    const auto e2 = exact_shapley(lstm, seq);
    const auto s2 = sampled_shap(lstm, seq, cfg);
    for (std::size_t j = 0; j < seq.size(); ++j) {
      EXPECT_NEAR(s1[j], e1[j], 1e-6);
      EXPECT_NEAR(s2[j], e2[j], 1e-6);
    }
  }
}

TEST(SampledShapTest, BudgetCoveringAllCoalitionsIsExact) {
  const auto m = noisy_cnn(8);
  const TokenSequence seq({3, 7, 12, 5, 19, 2, 0, 0});  // 64 coalitions <= 100
  const auto e = exact_shapley(m, seq);
  const auto s = sampled_shap(m, seq);
  for (std::size_t j = 0; j < seq.size(); ++j) EXPECT_NEAR(s[j], e[j], 1e-6);
}

TEST(SampledShapTest, SampledSatisfiesEfficiencyAndIsSeeded) {
  const auto m = noisy_lstm(9);
  Rng rng(90);
  std::vector<TokenId> ids(40, 0);
  for (std::size_t i = 0; i < 30; ++i) ids[i] = static_cast<TokenId>(1 + rng.uniform_index(29));
  const TokenSequence seq(ids);
  const auto a = sampled_shap(m, seq);
  const auto b = sampled_shap(m, seq);
  EXPECT_EQ(a.scores, b.scores);
  ShapConfig other;
  other.seed = 7;
  EXPECT_NE(sampled_shap(m, seq, other).scores, a.scores);
  const double gap = m.predict_positive(seq) - m.predict_positive(TokenSequence::all_pad(40));
  EXPECT_NEAR(sum(a), gap, 1e-12);
  expect_aligned(a, seq);
}

TEST(SampledShapTest, ConstantModelAndAllPad) {
  const auto c = testing_models::constant_model(0.37);
  const TokenSequence seq({4, 5, 6, 7, 8, 9, 10, 11, 12, 0});
  for (double v : sampled_shap(c, seq).scores) EXPECT_NEAR(v, 0.0, 1e-9);
  for (double v : sampled_shap(noisy_cnn(1), TokenSequence::all_pad(6)).scores) EXPECT_EQ(v, 0.0);
}

TEST(SampledShapTest, SingleTokenGetsWholeGap) {
  const auto m = noisy_cnn(10);
  const TokenSequence seq({9, 0, 0, 0});
  const auto a = sampled_shap(m, seq);
  EXPECT_NEAR(a[0], m.predict_positive(seq) - m.predict_positive(TokenSequence::all_pad(4)), 1e-15);
}

TEST(SampledShapTest, RejectsTinyBudget) {
  ShapConfig cfg;
  cfg.n_coalitions = 1;
  EXPECT_THROW(sampled_shap(noisy_cnn(1), TokenSequence({2}), cfg), ConfigError);
}

// ---- LIME

FunctionModel linear_in_mask() {
  return {[](const TokenSequence& s) {
    return 0.2 + 0.1 * (s[0] != kPadId) + 0.05 * (s[1] != kPadId);
  }};
}

// Independent weighted least squares with an explicit intercept column,
// solved by QR on the row-scaled design.
std::vector<double> wls_oracle(const TokenSequence& seq, const LimeConfig& cfg,
                               const FunctionModel& f) {
  const auto active = seq.active_positions();
  const std::size_t n = active.size();
  Rng rng(cfg.seed);
  std::vector<std::vector<char>> masks{std::vector<char>(n, 1)};
  while (masks.size() < cfg.n_samples) {
    std::vector<char> z(n);
    for (auto& b : z) b = rng.bernoulli(0.5);
    masks.push_back(z);
  }
  const double width = cfg.kernel_width.value_or(0.75 * std::sqrt(double(n)));
  Eigen::MatrixXd A(masks.size(), n + 1);
  Eigen::VectorXd y(masks.size());
  for (std::size_t r = 0; r < masks.size(); ++r) {
    std::size_t kept = 0;
    std::vector<TokenId> ids(seq.ids().begin(), seq.ids().end());
    for (std::size_t k = 0; k < n; ++k) {
      kept += masks[r][k];
      if (!masks[r][k]) ids[active[k]] = kPadId;
    }
    const double cosine = kept ? std::sqrt(double(kept) / double(n)) : 0.0;
    const double sw = std::sqrt(std::exp(-std::pow(1.0 - cosine, 2) / (width * width)));
    A(r, 0) = sw;
    for (std::size_t k = 0; k < n; ++k) A(r, k + 1) = sw * masks[r][k];
    y[r] = sw * f.predict_positive(TokenSequence(ids));
  }
  const Eigen::VectorXd beta = A.colPivHouseholderQr().solve(y);
  return {beta.data() + 1, beta.data() + beta.size()};
}

TEST(LimeTest, RecoversLinearCoefficients) {
  const auto f = linear_in_mask();
  const TokenSequence seq({5, 6, 0, 0});
  LimeConfig cfg;
  cfg.ridge = 1e-6;
  cfg.n_samples = 2000;
  const auto a = lime_explain(f, seq, cfg);
  EXPECT_NEAR(a[0], 0.1, 1e-3);
  EXPECT_NEAR(a[1], 0.05, 1e-3);
  const auto oracle = wls_oracle(seq, cfg, f);
  EXPECT_NEAR(a[0], oracle[0], 1e-6);
  EXPECT_NEAR(a[1], oracle[1], 1e-6);
  expect_aligned(a, seq);
}

TEST(LimeTest, RidgeFitMatchesOracleOnCnn) {
  const auto m = noisy_cnn(11);
  const TokenSequence seq({3, 7, 12, 5, 19, 2, 0, 0});
  LimeConfig cfg;
  cfg.ridge = 0.0;
  FunctionModel f{[&](const TokenSequence& s) { return m.predict_positive(s); }};
  const auto a = lime_explain(m, seq, cfg);
  const auto oracle = wls_oracle(seq, cfg, f);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(a[j], oracle[j], 1e-9);
}

TEST(LimeTest, ConstantModelGivesZero) {
  const TokenSequence seq({5, 6, 7, 8, 0});
  for (double v : lime_explain(testing_models::constant_model(0.8), seq).scores) {
    EXPECT_NEAR(v, 0.0, 1e-6);
  }
}

TEST(LimeTest, TopKKeepsLargest) {
  LimeConfig cfg;
  cfg.top_k = 1;
  cfg.ridge = 1e-6;
  const auto a = lime_explain(linear_in_mask(), TokenSequence({5, 6, 0, 0}), cfg);
  EXPECT_NE(a[0], 0.0);
  EXPECT_EQ(a[1], 0.0);
}

TEST(LimeTest, SeededDeterminism) {
  const auto m = noisy_lstm(12);
  const TokenSequence seq({3, 7, 12, 5, 19, 2, 8, 0});
  EXPECT_EQ(lime_explain(m, seq).scores, lime_explain(m, seq).scores);
  LimeConfig other;
  other.seed = 9;
  EXPECT_NE(lime_explain(m, seq, other).scores, lime_explain(m, seq).scores);
}

TEST(LimeTest, DegenerateDesignReported) {
  LimeConfig cfg;
  cfg.kernel_width = 1e-4;  // only the unperturbed sample keeps any weight
  cfg.ridge = 0.0;
  try {
    lime_explain(linear_in_mask(), TokenSequence({5, 6, 0}), cfg);
    FAIL() << "expected ExplanationError";
  } catch (const ExplanationError& e) {
    EXPECT_NE(std::string(e.what()).find("1000 samples"), std::string::npos) << e.what();
  }
}

TEST(LimeTest, ConfigValidation) {
  LimeConfig cfg;
  cfg.n_samples = 9;
  EXPECT_THROW(lime_explain(linear_in_mask(), TokenSequence({5}), cfg), ConfigError);
  cfg = {};
  cfg.top_k = 0;
  EXPECT_THROW(lime_explain(linear_in_mask(), TokenSequence({5}), cfg), ConfigError);
}

TEST(LimeTest, DistanceKernel) {
  EXPECT_EQ(lime_distance(4, 4), 0.0);
  EXPECT_EQ(lime_distance(0, 4), 1.0);
  EXPECT_NEAR(lime_distance(1, 4), 0.5, 1e-15);
}

// ---- all methods

TEST(ExplainTest, EveryMethodAlignedOnRandomInputs) {
  const auto cnn = noisy_cnn(13);
  const auto lstm = noisy_lstm(13);
  Rng rng(130);
  ExplainerConfigs cfg;
  for (int i = 0; i < 10; ++i) {
    const auto seq = gradcheck::random_sequence(rng, 24, 30);
    for (auto method : {ExplainMethod::ig, ExplainMethod::shap, ExplainMethod::lime}) {
      const auto a = explain(cnn, seq, method, cfg);
      EXPECT_EQ(a.method, method_name(method));
      expect_aligned(a, seq);
      expect_aligned(explain(lstm, seq, method, cfg), seq);
    }
  }
}

TEST(ExplainTest, MethodNames) {
  EXPECT_EQ(parse_method("lime"), ExplainMethod::lime);
  EXPECT_THROW(parse_method("anchors"), ConfigError);
}

TEST(ExplainTest, RecordFields) {
  Vocabulary vocab({"alpha", "beta"}, 10);
  const TokenSequence seq({2, 3, 0});
  AttributionVector a;
  a.scores = {0.25, -0.5, 0.0};
  a.method = "ig";
  a.wall_time_s = 0.125;
  const auto j = attribution_record(a, seq, vocab, "cnn", 42, IgConfig{});
  EXPECT_EQ(j["method"], "ig");
  EXPECT_EQ(j["tokens"], (nlohmann::json{"alpha", "beta"}));
  EXPECT_EQ(j["sequence"], (nlohmann::json{2, 3, 0}));
  EXPECT_EQ(j["explained_class"], 1);
  EXPECT_EQ(j["wall_time_s"], 0.125);
  EXPECT_EQ(j["config"]["steps"], 50);
  EXPECT_EQ(attribution_record(a, seq, vocab, "cnn", 42, {}, false)["wall_time_s"], 0.0);
}

}  // namespace
}  // namespace xaitext
