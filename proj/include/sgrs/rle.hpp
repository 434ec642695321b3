#pragma once

// Regional loss evaluation.
//
//   L_sup = CE + Dice on labeled predictions over every pixel
//   L_con = [CE + Dice](P_U, Y, omega) + [CE + Dice](P_M, Y, omega)
//   L_NR  = [smoothed CE + eta-Dice](P_U, Y, theta) + (same for P_M)
//   L     = L_sup + lambda(t) * (L_con + L_NR)
//
// CE terms are sums over the masked pixels by default. Dice terms are sums
// of products over pixels and classes, so they are scale-free already.
// Empty masks contribute exactly 0.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

#include "sgrs/autograd.hpp"
#include "sgrs/error.hpp"
#include "sgrs/ops.hpp"
#include "sgrs/tensor.hpp"

namespace sgrs {

// How the CE sums are scaled: not at all, by the masked pixel count, or by
// every pixel of the batch (a fixed divisor, so small regions are not
// up-weighted).
enum class Normalization { sum, mean, batch };

inline Normalization parse_normalization(const std::string& s) {
  if (s == "sum") return Normalization::sum;
  if (s == "mean") return Normalization::mean;
  if (s == "batch") return Normalization::batch;
  throw ConfigError("loss_normalization must be sum, mean or batch, got " + s);
}

inline std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::sum: return "sum";
    case Normalization::mean: return "mean";
    case Normalization::batch: return "batch";
  }
  return "?";
}

struct LossConfig {
  double epsilon = 0.2;  // label smoothing on theta
  double eta = 20.0;     // Dice denominator smoothing on theta
  std::size_t t_warm = 800;
  Normalization normalization = Normalization::sum;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must be in [0, 1)");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be >= 0");
    if (t_warm == 0) throw ConfigError("t_warm must be positive");
  }
};

namespace detail {

inline void check_loss_inputs(const Dims& pd, const LabelMap& target, const Mask& mask) {
  require_rank(pd, 4, "loss probs");
  const Dims md{pd[0], pd[2], pd[3]};
  require_dims(target.dims(), md, "loss target");
  require_dims(mask.dims(), md, "loss mask");
  for (auto v : target.data()) {
    if (v < 0 || static_cast<std::size_t>(v) >= pd[1]) {
      throw ContractError("loss target class " + std::to_string(v) + " outside [0, C)");
    }
  }
}

// w[n,j,h,w] = mask[n,h,w] * (hit if target[n,h,w] == j else miss)
template <class T>
Tensor<T> class_weights(const Dims& pd, const LabelMap& target, const Mask& mask, T hit, T miss) {
  Tensor<T> w(pd);
  const std::size_t c = pd[1], plane = pd[2] * pd[3];
  for (std::size_t n = 0; n < pd[0]; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      if (!mask[n * plane + p]) continue;
      const auto cls = static_cast<std::size_t>(target[n * plane + p]);
      for (std::size_t j = 0; j < c; ++j) w[(n * c + j) * plane + p] = j == cls ? hit : miss;
    }
  }
  return w;
}

template <class T>
Var<T> zero_loss(Tape<T>& tape) {
  return tape.constant(Tensor<T>::scalar(T{0}));
}

// -sum(w * log p), then scaled per `norm`.
template <class T>
Var<T> weighted_nll(const Var<T>& probs, const Tensor<T>& w, std::size_t pixels, Normalization norm) {
  auto loss = scale(sum(mul(log(probs), probs.tape().constant(w))), T{-1});
  const auto& d = probs.dims();
  if (norm == Normalization::mean) loss = scale(loss, T{1} / static_cast<T>(pixels));
  if (norm == Normalization::batch) loss = scale(loss, T{1} / static_cast<T>(d[0] * d[2] * d[3]));
  return loss;
}

}  // namespace detail

// -sum_{i in mask} sum_j y[i,j] log p[i,j]
template <class T>
Var<T> masked_ce(const Var<T>& probs, const LabelMap& target, const Mask& mask,
                 Normalization norm = Normalization::sum) {
  detail::check_loss_inputs(probs.dims(), target, mask);
  const std::size_t pixels = count(mask);
  if (pixels == 0) return detail::zero_loss(probs.tape());
  return detail::weighted_nll(probs, detail::class_weights<T>(probs.dims(), target, mask, T{1}, T{0}), pixels, norm);
}

// Cross-entropy against the epsilon-smoothed target (1 - eps) * y + eps / C.
template <class T>
Var<T> smoothed_ce(const Var<T>& probs, const LabelMap& target, const Mask& mask, double epsilon,
                   Normalization norm = Normalization::sum) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must be in [0, 1)");
  detail::check_loss_inputs(probs.dims(), target, mask);
  const std::size_t pixels = count(mask);
  if (pixels == 0) return detail::zero_loss(probs.tape());
  const T c = static_cast<T>(probs.dims()[1]);
  const T eps = static_cast<T>(epsilon);
  const T miss = eps / c;
  const T hit = (T{1} - eps) + miss;
  return detail::weighted_nll(probs, detail::class_weights<T>(probs.dims(), target, mask, hit, miss), pixels, norm);
}

// 1 - 2 sum(p y) / (sum(p^2) + sum(y^2) + eta), sums over masked pixels and
// all classes.
template <class T>
Var<T> smoothed_dice(const Var<T>& probs, const LabelMap& target, const Mask& mask, double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be >= 0");
  detail::check_loss_inputs(probs.dims(), target, mask);
  const std::size_t pixels = count(mask);
  auto& tape = probs.tape();
  if (pixels == 0) return detail::zero_loss(tape);
  const auto onehot = detail::class_weights<T>(probs.dims(), target, mask, T{1}, T{0});
  const auto region = detail::class_weights<T>(probs.dims(), target, mask, T{1}, T{1});
  auto overlap = sum(mul(probs, tape.constant(onehot)));
  // sum(y^2) over the region is one per masked pixel.
  auto denom = add_scalar(sum(mul(square(probs), tape.constant(region))), static_cast<T>(pixels) + static_cast<T>(eta));
  return add_scalar(scale(div(overlap, denom), T{-2}), T{1});
}

template <class T>
Var<T> masked_dice(const Var<T>& probs, const LabelMap& target, const Mask& mask) {
  return smoothed_dice(probs, target, mask, 0.0);
}

template <class T>
Var<T> ce_dice(const Var<T>& probs, const LabelMap& target, const Mask& mask, Normalization norm) {
  return add(masked_ce(probs, target, mask, norm), masked_dice(probs, target, mask));
}

template <class T>
Var<T> smoothed_ce_dice(const Var<T>& probs, const LabelMap& target, const Mask& mask, double epsilon, double eta,
                        Normalization norm) {
  return add(smoothed_ce(probs, target, mask, epsilon, norm), smoothed_dice(probs, target, mask, eta));
}

template <class T>
Var<T> sup_loss(const Var<T>& probs_l, const LabelMap& gt, Normalization norm = Normalization::sum) {
  const Dims& d = probs_l.dims();
  require_rank(d, 4, "sup_loss");
  return ce_dice(probs_l, gt, full_mask(Dims{d[0], d[2], d[3]}), norm);
}

template <class T>
Var<T> con_loss(const Var<T>& probs_u, const Var<T>& probs_m, const LabelMap& y, const Mask& omega,
                Normalization norm = Normalization::sum) {
  return add(ce_dice(probs_u, y, omega, norm), ce_dice(probs_m, y, omega, norm));
}

template <class T>
Var<T> nr_loss(const Var<T>& probs_u, const Var<T>& probs_m, const LabelMap& y, const Mask& theta, double epsilon,
               double eta, Normalization norm = Normalization::sum) {
  return add(smoothed_ce_dice(probs_u, y, theta, epsilon, eta, norm),
             smoothed_ce_dice(probs_m, y, theta, epsilon, eta, norm));
}

// Gaussian ramp exp(-5 (1 - t / t_warm)^2), saturating at 1 from t_warm on.
inline double consistency_weight(std::size_t t, std::size_t t_warm) {
  if (t_warm == 0) throw ConfigError("t_warm must be positive");
  if (t >= t_warm) return 1.0;
  const double r = 1.0 - static_cast<double>(t) / static_cast<double>(t_warm);
  return std::exp(-5.0 * r * r);
}

struct RegionCounts {
  std::size_t delta = 0;
  std::size_t omega = 0;
  std::size_t theta = 0;
};

template <class T>
struct LossBreakdown {
  Var<T> sup;
  Var<T> con;
  Var<T> nr;
  Var<T> total;
  double lambda_t = 0.0;
  RegionCounts counts;

  double sup_value() const { return static_cast<double>(sup.item()); }
  double con_value() const { return static_cast<double>(con.item()); }
  double nr_value() const { return static_cast<double>(nr.item()); }
  double total_value() const { return static_cast<double>(total.item()); }
};

// total = sup + lambda(t) * (con + nr). The weight enters as a constant
// factor, so no gradient reaches it.
template <class T>
LossBreakdown<T> total_loss(const Var<T>& sup, const Var<T>& con, const Var<T>& nr, std::size_t t,
                            std::size_t t_warm, RegionCounts counts = {}) {
  const double w = consistency_weight(t, t_warm);
  auto total = add(sup, scale(add(con, nr), static_cast<T>(w)));
  return {sup, con, nr, total, w, counts};
}

}  // namespace sgrs
