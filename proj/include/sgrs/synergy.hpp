#pragma once

// Synergy evaluation: per-pixel entropy of the student's predictions on the
// unlabeled batch and on its augmented copy, and the resulting partition of
// the pseudo-label domain into
//   delta: Ent(P_U) > tau or Ent(P_M) > tau        (disregarded)
//   omega: not delta and argmax agrees              (consistent)
//   theta: not delta and argmax disagrees           (inconsistent)

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "sgrs/error.hpp"
#include "sgrs/ops.hpp"
#include "sgrs/tensor.hpp"

namespace sgrs {

struct EntropyMap {
  Tensor<double> values;  // [N,H,W], nats
  std::size_t num_classes = 0;
};

struct RegionMasks {
  Mask delta;
  Mask omega;
  Mask theta;
  double tau = 0.0;
};

// Natural-log entropy per pixel, probabilities clamped to >= 1e-12.
template <class T>
EntropyMap entropy_map(const Tensor<T>& probs) {
  const Dims& d = probs.dims();
  require_rank(d, 4, "entropy_map");
  const std::size_t c = d[1], plane = d[2] * d[3];
  EntropyMap out{Tensor<double>(Dims{d[0], d[2], d[3]}), c};
  for (std::size_t n = 0; n < d[0]; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      double total = 0.0, ent = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double v = static_cast<double>(probs[(n * c + k) * plane + p]);
        if (!(v >= 0.0 && v <= 1.0 + 1e-5)) throw ContractError("entropy_map: probability outside [0, 1]");
        total += v;
        ent -= v * std::log(std::max(v, kLogClamp));
      }
      if (std::abs(total - 1.0) > 1e-5) throw ContractError("entropy_map: channel probabilities do not sum to 1");
      out.values[n * plane + p] = std::max(ent, 0.0);
    }
  }
  return out;
}

// tau may sit anywhere in [0, inf): tau = 0 discards every uncertain pixel,
// tau >= ln C keeps everything.
template <class T>
RegionMasks partition_regions(const Tensor<T>& probs_u, const Tensor<T>& probs_m, double tau) {
  require_rank(probs_u.dims(), 4, "partition_regions");
  require_dims(probs_m.dims(), probs_u.dims(), "partition_regions");
  if (!(tau >= 0.0) || std::isnan(tau)) throw ConfigError("tau must be >= 0");
  const auto ent_u = entropy_map(probs_u);
  const auto ent_m = entropy_map(probs_m);
  const auto a_u = argmax_channel(probs_u);
  const auto a_m = argmax_channel(probs_m);
  const Dims& md = ent_u.values.dims();
  RegionMasks r{Mask(md), Mask(md), Mask(md), tau};
  for (std::size_t i = 0; i < a_u.size(); ++i) {
    const bool disregard = ent_u.values[i] > tau || ent_m.values[i] > tau;
    r.delta[i] = disregard;
    r.omega[i] = !disregard && a_u[i] == a_m[i];
    r.theta[i] = !disregard && a_u[i] != a_m[i];
  }
  return r;
}

}  // namespace sgrs
