#pragma once

// Central finite-difference oracle. Independent of the tape's backward
// callbacks: it only ever evaluates forwards on fresh no-grad tapes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sgrs/autograd.hpp"
#include "sgrs/rng.hpp"
#include "sgrs/tensor.hpp"

namespace sgrs::testing {

using Builder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double evaluate(const std::vector<Tensor<double>>& inputs, const Builder& build) {
  Tape<double> tape(false);
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.constant(t));
  return build(tape, leaves).item();
}

// |analytic - numeric| / max(1, |analytic|), maximised over every element of
// every input listed in `differentiable` (all inputs when empty).
inline GradCheck gradcheck(const std::vector<Tensor<double>>& inputs, const Builder& build, double h = 1e-6,
                           std::vector<std::size_t> differentiable = {}) {
  if (differentiable.empty()) {
    for (std::size_t i = 0; i < inputs.size(); ++i) differentiable.push_back(i);
  }
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const bool wants = std::find(differentiable.begin(), differentiable.end(), i) != differentiable.end();
    leaves.push_back(tape.leaf(inputs[i], wants));
  }
  auto loss = build(tape, leaves);
  tape.backward(loss);

  GradCheck out;
  auto perturbed = inputs;
  for (auto i : differentiable) {
    const auto analytic = leaves[i].grad();
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = inputs[i][j];
      perturbed[i][j] = orig + h;
      const double up = evaluate(perturbed, build);
      perturbed[i][j] = orig - h;
      const double down = evaluate(perturbed, build);
      perturbed[i][j] = orig;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(analytic[j] - numeric) / std::max(1.0, std::abs(analytic[j]));
      out.max_rel_error = std::max(out.max_rel_error, err);
      ++out.checked;
    }
  }
  return out;
}

inline Tensor<double> random_tensor(Xoshiro256& rng, Dims dims, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(dims));
  for (auto& e : t.storage()) e = rng.uniform(lo, hi);
  return t;
}

// Reduces a non-scalar output to a scalar with fixed random weights so the
// check covers the full vector-Jacobian product.
inline Var<double> weighted_sum(const Var<double>& out, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  auto w = random_tensor(rng, out.dims());
  return sum(mul(out, out.tape().constant(w)));
}

}  // namespace sgrs::testing
