#pragma once

// Student/teacher parameter pair. Only the student is ever bound to a
// recording tape; the teacher tracks it by exponential moving average and
// produces pseudo labels Y = argmax(softmax(f_teacher(D_U))).

#include <cmath>
#include <cstddef>

#include "sgrs/error.hpp"
#include "sgrs/netzoo.hpp"
#include "sgrs/ops.hpp"
#include "sgrs/tensor.hpp"

namespace sgrs {

inline void validate_ema_decay(double decay) {
  if (!std::isfinite(decay) || decay < 0.0 || decay >= 1.0) {
    throw ConfigError("ema_decay must be in [0, 1), got " + std::to_string(decay));
  }
}

template <class T>
struct ModelState {
  NetworkParams<T> student;
  NetworkParams<T> teacher;
  double ema_decay = 0.99;
  std::size_t step = 0;
};

// The teacher starts as an exact copy of the student.
template <class T>
ModelState<T> make_model_state(NetworkParams<T> student, double ema_decay = 0.99) {
  validate_ema_decay(ema_decay);
  ModelState<T> s;
  s.teacher = student;
  s.student = std::move(student);
  s.ema_decay = ema_decay;
  return s;
}

// teacher <- decay * teacher + (1 - decay) * student; step += 1.
template <class T>
void ema_update(ModelState<T>& state) {
  validate_ema_decay(state.ema_decay);
  if (!state.student.same_topology(state.teacher)) throw ContractError("ema_update: topology mismatch");
  const T keep = static_cast<T>(state.ema_decay);
  const T take = static_cast<T>(1.0 - state.ema_decay);
  for (std::size_t i = 0; i < state.teacher.params.size(); ++i) {
    auto& t = state.teacher.params[i].value;
    const auto& s = state.student.params[i].value;
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = keep * t[j] + take * s[j];
  }
  ++state.step;
}

template <class T>
struct PseudoLabels {
  Tensor<T> teacher_probs;  // [N,C,H,W]
  LabelMap labels;          // [N,H,W]
};

// Teacher inference on raw unlabeled images, on a no-grad tape.
template <class T>
PseudoLabels<T> pseudo_labels_from(const NetworkParams<T>& net, const Tensor<T>& unlabeled) {
  auto probs = predict_probs(net, unlabeled);
  auto labels = argmax_channel(probs);
  return {std::move(probs), std::move(labels)};
}

template <class T>
PseudoLabels<T> generate_pseudo_labels(const ModelState<T>& state, const Tensor<T>& unlabeled) {
  return pseudo_labels_from(state.teacher, unlabeled);
}

}  // namespace sgrs
