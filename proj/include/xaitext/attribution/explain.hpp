#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "xaitext/attribution/integrated_gradients.hpp"
#include "xaitext/attribution/lime.hpp"
#include "xaitext/attribution/shapley.hpp"

namespace xaitext {

enum class ExplainMethod { ig, shap, lime };

inline std::string_view method_name(ExplainMethod m) {
  switch (m) {
    case ExplainMethod::ig: return "ig";
    case ExplainMethod::shap: return "shap";
    case ExplainMethod::lime: return "lime";
  }
  return "?";
}

inline ExplainMethod parse_method(std::string_view s) {
  if (s == "ig") return ExplainMethod::ig;
  if (s == "shap") return ExplainMethod::shap;
  if (s == "lime") return ExplainMethod::lime;
  throw ConfigError("unknown explanation method '" + std::string(s) + "' (expected ig, shap or lime)");
}

struct ExplainerConfigs {
  IgConfig ig;
  ShapConfig shap;
  LimeConfig lime;

  nlohmann::json for_method(ExplainMethod m) const {
    switch (m) {
      case ExplainMethod::ig: return ig;
      case ExplainMethod::shap: return shap;
      case ExplainMethod::lime: return lime;
    }
    return nullptr;
  }
};

template <class M>
  requires EmbeddingDifferentiable<M> && BlackBoxClassifier<M>
AttributionVector explain(const M& model, const TokenSequence& seq, ExplainMethod method,
                          const ExplainerConfigs& cfg) {
  switch (method) {
    case ExplainMethod::ig: return integrated_gradients(model, seq, cfg.ig);
    case ExplainMethod::shap: return sampled_shap(model, seq, cfg.shap);
    case ExplainMethod::lime: return lime_explain(model, seq, cfg.lime);
  }
  throw ConfigError("unknown explanation method");
}

}  // namespace xaitext
