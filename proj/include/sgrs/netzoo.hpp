#pragma once

// Two-stage 2D encoder-decoder (a miniature U-Net) and plain SGD with
// L2 weight decay folded into the gradient.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sgrs/autograd.hpp"
#include "sgrs/error.hpp"
#include "sgrs/ops.hpp"
#include "sgrs/rng.hpp"
#include "sgrs/tensor.hpp"
#include "sgrs/tsr.hpp"

namespace sgrs {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> value;
};

template <class T>
struct NetworkParams {
  std::size_t base_width = 0;
  std::size_t num_classes = 0;
  std::vector<NamedParam<T>> params;

  std::size_t size() const noexcept { return params.size(); }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }

  bool same_topology(const NetworkParams& other) const {
    if (base_width != other.base_width || num_classes != other.num_classes) return false;
    if (params.size() != other.params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name != other.params[i].name || params[i].value.dims() != other.params[i].value.dims()) {
        return false;
      }
    }
    return true;
  }

  template <class U>
  NetworkParams<U> cast() const {
    NetworkParams<U> out{base_width, num_classes, {}};
    for (const auto& p : params) out.params.push_back({p.name, p.value.template cast<U>()});
    return out;
  }

  friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
    if (!a.same_topology(b)) return false;
    for (std::size_t i = 0; i < a.params.size(); ++i) {
      if (!(a.params[i].value == b.params[i].value)) return false;
    }
    return true;
  }
};

struct LayerSpec {
  std::string name;
  std::size_t cin, cout, k;
};

// Convolution layers in parameter order; each contributes <name>.weight and
// <name>.bias.
inline std::vector<LayerSpec> unet_layers(std::size_t base, std::size_t classes) {
  const std::size_t b = base;
  return {
      {"enc1.conv1", 1, b, 3},          {"enc1.conv2", b, b, 3},
      {"enc2.conv1", b, 2 * b, 3},      {"enc2.conv2", 2 * b, 2 * b, 3},
      {"mid.conv1", 2 * b, 4 * b, 3},   {"mid.conv2", 4 * b, 4 * b, 3},
      {"dec2.conv1", 6 * b, 2 * b, 3},  {"dec2.conv2", 2 * b, 2 * b, 3},
      {"dec1.conv1", 3 * b, b, 3},      {"dec1.conv2", b, b, 3},
      {"head", b, classes, 1},
  };
}

inline std::size_t parameter_count(std::size_t base, std::size_t classes) {
  std::size_t n = 0;
  for (const auto& l : unet_layers(base, classes)) n += l.cout * l.cin * l.k * l.k + l.cout;
  return n;
}

// Kaiming-normal kernels (stddev sqrt(2 / fan_in)), zero biases.
template <class T>
NetworkParams<T> init_params(std::uint64_t seed, std::size_t base_width, std::size_t num_classes) {
  if (base_width < 2) throw ConfigError("base_width must be >= 2");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  auto rng = Xoshiro256::for_role(seed, StreamRole::init);
  NetworkParams<T> net{base_width, num_classes, {}};
  for (const auto& l : unet_layers(base_width, num_classes)) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(l.cin * l.k * l.k));
    Tensor<T> w(Dims{l.cout, l.cin, l.k, l.k});
    for (auto& e : w.storage()) e = static_cast<T>(rng.normal(0.0, stddev));
    net.params.push_back({l.name + ".weight", std::move(w)});
    net.params.push_back({l.name + ".bias", Tensor<T>(Dims{l.cout})});
  }
  return net;
}

template <class T>
NetworkParams<T> zero_params(std::size_t base_width, std::size_t num_classes) {
  NetworkParams<T> net{base_width, num_classes, {}};
  for (const auto& l : unet_layers(base_width, num_classes)) {
    net.params.push_back({l.name + ".weight", Tensor<T>(Dims{l.cout, l.cin, l.k, l.k})});
    net.params.push_back({l.name + ".bias", Tensor<T>(Dims{l.cout})});
  }
  return net;
}

// Parameters placed on a tape as leaves, in NetworkParams order.
template <class T>
std::vector<Var<T>> bind(Tape<T>& tape, const NetworkParams<T>& net, bool requires_grad) {
  std::vector<Var<T>> out;
  out.reserve(net.params.size());
  for (const auto& p : net.params) out.push_back(tape.leaf(p.value, requires_grad));
  return out;
}

// images [N,1,H,W] -> logits [N,C,H,W]; H and W must be multiples of 4.
template <class T>
Var<T> forward(const std::vector<Var<T>>& bound, const Var<T>& images) {
  const Dims& d = images.dims();
  require_rank(d, 4, "forward images");
  if (d[1] != 1) throw ShapeError("forward expects single-channel images, got " + to_string(d));
  if (d[2] % 4 || d[3] % 4) throw ShapeError("forward needs H and W divisible by 4, got " + to_string(d));
  if (bound.size() != 22) throw ContractError("forward expects 22 bound parameters");
  auto conv = [&](const Var<T>& x, std::size_t layer, bool activate) {
    const std::size_t pad = bound[2 * layer].dims()[2] / 2;
    auto y = conv2d(x, bound[2 * layer], bound[2 * layer + 1], pad);
    return activate ? relu(y) : y;
  };
  auto e1 = conv(conv(images, 0, true), 1, true);
  auto e2 = conv(conv(maxpool2(e1), 2, true), 3, true);
  auto mid = conv(conv(maxpool2(e2), 4, true), 5, true);
  auto d2 = conv(conv(concat_channels(upsample2(mid), e2), 6, true), 7, true);
  auto d1 = conv(conv(concat_channels(upsample2(d2), e1), 8, true), 9, true);
  return conv(d1, 10, false);
}

// Inference without gradient recording.
template <class T>
Tensor<T> predict_logits(const NetworkParams<T>& net, const Tensor<T>& images) {
  Tape<T> tape(false);
  auto bound = bind(tape, net, false);
  return forward(bound, tape.constant(images)).value();
}

template <class T>
Tensor<T> predict_probs(const NetworkParams<T>& net, const Tensor<T>& images) {
  Tape<T> tape(false);
  auto bound = bind(tape, net, false);
  return softmax_channel(forward(bound, tape.constant(images))).value();
}

struct OptimizerConfig {
  double learning_rate = 1e-2;
  double weight_decay = 1e-4;
  // Zero reproduces plain SGD.
  double momentum = 0.0;

  void validate() const {
    if (!std::isfinite(learning_rate) || !(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!std::isfinite(weight_decay) || weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!std::isfinite(momentum) || momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
  }
};

// p <- p - lr * (g + wd * p). With momentum > 0 the bracket is accumulated
// into `velocity` first (heavy-ball form).
template <class T>
void sgd_step(NetworkParams<T>& net, const std::vector<Tensor<T>>& grads, const OptimizerConfig& cfg,
              std::vector<Tensor<T>>* velocity = nullptr) {
  if (grads.size() != net.params.size()) throw ContractError("sgd_step: gradient list length mismatch");
  if (cfg.momentum > 0.0) {
    if (!velocity) throw ContractError("sgd_step: momentum needs a velocity buffer");
    if (velocity->empty()) {
      for (const auto& p : net.params) velocity->emplace_back(p.value.dims());
    }
    if (velocity->size() != net.params.size()) throw ContractError("sgd_step: velocity length mismatch");
  }
  const T lr = static_cast<T>(cfg.learning_rate);
  const T wd = static_cast<T>(cfg.weight_decay);
  const T mu = static_cast<T>(cfg.momentum);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = net.params[i].value;
    if (grads[i].dims() != p.dims()) throw ContractError("sgd_step: gradient dims mismatch for " + net.params[i].name);
    for (std::size_t j = 0; j < p.size(); ++j) {
      T step = grads[i][j] + wd * p[j];
      if (cfg.momentum > 0.0) {
        T& v = (*velocity)[i][j];
        v = mu * v + step;
        step = v;
      }
      p[j] -= lr * step;
    }
    if (!p.all_finite()) throw NumericError("sgd_step produced a non-finite parameter in " + net.params[i].name);
  }
}

// One TSR file per parameter under `dir`, named <prefix><name>.tsr.
// Returns name -> relative file for the caller's manifest.
template <class T>
std::map<std::string, std::string> save_params(const std::filesystem::path& dir, const std::string& prefix,
                                               const NetworkParams<T>& net) {
  std::map<std::string, std::string> files;
  for (const auto& p : net.params) {
    const std::string file = prefix + p.name + ".tsr";
    tsr::save(dir / file, p.value);
    files[p.name] = file;
  }
  return files;
}

template <class T>
NetworkParams<T> load_params(const std::filesystem::path& dir, const std::map<std::string, std::string>& files,
                             std::size_t base_width, std::size_t num_classes) {
  auto net = zero_params<T>(base_width, num_classes);
  for (auto& p : net.params) {
    auto it = files.find(p.name);
    if (it == files.end()) throw IoError("checkpoint is missing parameter " + p.name);
    auto loaded = tsr::load<T>(dir / it->second);
    if (loaded.dims() != p.value.dims()) throw IoError("checkpoint parameter " + p.name + " has wrong dims");
    p.value = std::move(loaded);
  }
  return net;
}

}  // namespace sgrs
