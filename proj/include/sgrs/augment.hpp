#pragma once

// Mix augmentation: D_M = lambda * D_U + (1 - lambda) * D_L with
// lambda = max(b, 1 - b), b ~ Beta(alpha, alpha). The mixed image keeps the
// pseudo label of its unlabeled member. Flips are the alternative
// perturbations used by the augmentation ablation.

#include <algorithm>
#include <string>
#include <variant>
#include <vector>

#include "sgrs/error.hpp"
#include "sgrs/ops.hpp"
#include "sgrs/rng.hpp"
#include "sgrs/tensor.hpp"

namespace sgrs {

// How alpha is chosen each time a coefficient is drawn.
struct AlphaPolicy {
  enum class Kind { uniform, fixed };
  Kind kind = Kind::uniform;
  double alpha = 1.0;  // used when kind == fixed

  static AlphaPolicy uniform() { return {}; }
  static AlphaPolicy fixed(double a) { return {Kind::fixed, a}; }

  void validate() const {
    if (kind == Kind::fixed && !(alpha > 0.0 && std::isfinite(alpha))) {
      throw ConfigError("fixed alpha must be finite and > 0");
    }
  }

  // "uniform" or a positive number.
  static AlphaPolicy parse(const std::string& text) {
    if (text == "uniform") return uniform();
    try {
      std::size_t pos = 0;
      const double a = std::stod(text, &pos);
      if (pos != text.size()) throw ConfigError("invalid alpha policy: " + text);
      auto p = fixed(a);
      p.validate();
      return p;
    } catch (const std::logic_error&) {
      throw ConfigError("invalid alpha policy: " + text);
    }
  }

  std::string to_string() const { return kind == Kind::uniform ? "uniform" : std::to_string(alpha); }
};

struct MixCoefficient {
  double lambda_mix = 1.0;  // in [0.5, 1]
  double alpha = 1.0;
};

inline double fold_beta_draw(double b) { return std::max(b, 1.0 - b); }

// One Beta(alpha, alpha) draw folded onto [0.5, 1]. Under the uniform policy
// alpha itself is drawn from (0, 1] first.
inline MixCoefficient draw_mix_coefficient(const AlphaPolicy& policy, Xoshiro256& rng) {
  policy.validate();
  const double alpha = policy.kind == AlphaPolicy::Kind::fixed ? policy.alpha : 1.0 - rng.uniform();
  return {fold_beta_draw(rng.beta(alpha, alpha)), alpha};
}

// unlabeled[i] is blended with labeled[i mod nl], with one coefficient per
// unlabeled item (a single entry applies to the whole batch).
template <class T>
Tensor<T> mix_augment(const Tensor<T>& unlabeled, const Tensor<T>& labeled, const std::vector<double>& lambdas) {
  require_rank(unlabeled.dims(), 4, "mix_augment unlabeled");
  require_rank(labeled.dims(), 4, "mix_augment labeled");
  const Dims& du = unlabeled.dims();
  const Dims& dl = labeled.dims();
  if (du[1] != dl[1] || du[2] != dl[2] || du[3] != dl[3]) {
    throw ShapeError("mix_augment: image dims differ " + to_string(du) + " vs " + to_string(dl));
  }
  if (lambdas.size() != 1 && lambdas.size() != du[0]) throw ContractError("mix_augment: need 1 or nu coefficients");
  const std::size_t per = du[1] * du[2] * du[3];
  Tensor<T> out(du);
  for (std::size_t i = 0; i < du[0]; ++i) {
    const T lam = static_cast<T>(lambdas.size() == 1 ? lambdas[0] : lambdas[i]);
    const std::size_t j = i % dl[0];
    for (std::size_t p = 0; p < per; ++p) {
      out[i * per + p] = lam * unlabeled[i * per + p] + (T{1} - lam) * labeled[j * per + p];
    }
  }
  return out;
}

template <class T>
Tensor<T> mix_augment(const Tensor<T>& unlabeled, const Tensor<T>& labeled, double lambda_mix) {
  return mix_augment(unlabeled, labeled, std::vector<double>{lambda_mix});
}

template <class T>
Tensor<T> flip_h(const Tensor<T>& x) {
  return flip(x, true);
}

template <class T>
Tensor<T> flip_v(const Tensor<T>& x) {
  return flip(x, false);
}

}  // namespace sgrs
