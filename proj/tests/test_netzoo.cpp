#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "sgrs/netzoo.hpp"
#include "sgrs/rle.hpp"
#include "support/gradcheck.hpp"

using namespace sgrs;
using namespace sgrs::testing;
using Catch::Approx;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sgrs_netzoo_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("topology and parameter count") {
  const auto net = init_params<float>(1, 8, 2);
  CHECK(net.size() == 22);
  CHECK(net.count() == parameter_count(8, 2));
  // Hand count for base 8, two classes.
  const std::size_t expected = (1 * 8 * 9 + 8) + (8 * 8 * 9 + 8) + (8 * 16 * 9 + 16) + (16 * 16 * 9 + 16) +
                               (16 * 32 * 9 + 32) + (32 * 32 * 9 + 32) + (48 * 16 * 9 + 16) + (16 * 16 * 9 + 16) +
                               (24 * 8 * 9 + 8) + (8 * 8 * 9 + 8) + (8 * 2 + 2);
  CHECK(parameter_count(8, 2) == expected);
  CHECK(net.params[0].name == "enc1.conv1.weight");
  CHECK(net.params[21].name == "head.bias");
  CHECK_THROWS_AS(init_params<float>(1, 1, 2), ConfigError);
  CHECK_THROWS_AS(init_params<float>(1, 8, 1), ConfigError);
}

TEST_CASE("initialisation is deterministic and seed-sensitive") {
  CHECK(init_params<float>(7, 8, 2) == init_params<float>(7, 8, 2));
  CHECK_FALSE(init_params<float>(7, 8, 2) == init_params<float>(8, 8, 2));
}

TEST_CASE("kernel scale follows sqrt(2 / fan_in) and biases start at zero") {
  const auto net = init_params<double>(3, 8, 2);
  const auto& k = net.params[2].value;  // enc1.conv2, fan_in 8 * 3 * 3
  double ss = 0.0, mean = 0.0;
  for (double v : k.data()) mean += v;
  mean /= static_cast<double>(k.size());
  for (double v : k.data()) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(k.size() - 1));
  CHECK(sd == Approx(std::sqrt(2.0 / 72.0)).epsilon(0.2));
  for (std::size_t i = 1; i < net.size(); i += 2)
    for (double v : net.params[i].value.data()) CHECK(v == 0.0);
}

TEST_CASE("forward shapes and the zero network") {
  const auto net = init_params<float>(1, 4, 3);
  CHECK(predict_logits(net, Tensor<float>({2, 1, 16, 8}, 0.5f)).dims() == Dims{2, 3, 16, 8});
  const auto zero = zero_params<float>(4, 2);
  const auto zero_out = predict_logits(zero, Tensor<float>({1, 1, 8, 8}, 0.7f));
  for (float v : zero_out.data()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(predict_logits(net, Tensor<float>({1, 1, 10, 8})), ShapeError);
  CHECK_THROWS_AS(predict_logits(net, Tensor<float>({1, 2, 8, 8})), ShapeError);
  const auto probs = predict_probs(net, Tensor<float>({1, 1, 8, 8}, 0.3f));
  for (std::size_t p = 0; p < 64; ++p) {
    float s = 0.0f;
    for (std::size_t c = 0; c < 3; ++c) s += probs[c * 64 + p];
    CHECK(s == Approx(1.0f).margin(1e-5));
  }
}

TEST_CASE("forward is deterministic") {
  const auto net = init_params<float>(5, 8, 2);
  Xoshiro256 rng(5);
  Tensor<float> x({2, 1, 32, 32});
  for (auto& v : x.storage()) v = static_cast<float>(rng.uniform());
  CHECK(predict_logits(net, x) == predict_logits(net, x));
}

TEST_CASE("every parameter gradient matches finite differences") {
  const auto net = init_params<double>(11, 4, 2);
  Xoshiro256 rng(12);
  const auto image = random_tensor(rng, {1, 1, 8, 8}, 0.0, 1.0);
  std::vector<Tensor<double>> inputs;
  for (const auto& p : net.params) inputs.push_back(p.value);
  // Nonzero biases keep the check away from degenerate all-zero channels.
  for (std::size_t i = 1; i < inputs.size(); i += 2)
    for (auto& v : inputs[i].storage()) v = rng.uniform(-0.1, 0.1);
  inputs.push_back(image);
  std::vector<std::size_t> params(22);
  for (std::size_t i = 0; i < 22; ++i) params[i] = i;
  auto build = [](Tape<double>&, const std::vector<Var<double>>& v) {
    std::vector<Var<double>> bound(v.begin(), v.begin() + 22);
    return mean(forward(bound, v[22]));
  };
  const auto r = gradcheck(inputs, build, 1e-6, params);
  CHECK(r.checked == parameter_count(4, 2));
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("sgd step worked values") {
  auto net = zero_params<double>(2, 2);
  net.params[0].value[0] = 1.0;
  std::vector<Tensor<double>> grads;
  for (const auto& p : net.params) grads.emplace_back(p.value.dims());
  grads[0][0] = 0.5;
  sgd_step(net, grads, OptimizerConfig{0.01, 1e-4, 0.0});
  CHECK(net.params[0].value[0] == Approx(0.994999).margin(1e-9));

  auto still = init_params<double>(1, 2, 2);
  const auto before = still;
  OptimizerConfig tiny{0.0, 0.0, 0.0};  // sgd_step itself does not validate
  sgd_step(still, grads, tiny);
  CHECK(still == before);

  grads.pop_back();
  CHECK_THROWS_AS(sgd_step(still, grads, tiny), ContractError);
  CHECK_THROWS_AS(OptimizerConfig({0.0, 0.0, 0.0}).validate(), ConfigError);
  CHECK_THROWS_AS(OptimizerConfig({0.1, -1.0, 0.0}).validate(), ConfigError);
}

TEST_CASE("momentum accumulates the decayed gradient") {
  auto net = zero_params<double>(2, 2);
  net.params[0].value[0] = 1.0;
  std::vector<Tensor<double>> grads;
  for (const auto& p : net.params) grads.emplace_back(p.value.dims());
  grads[0][0] = 1.0;
  std::vector<Tensor<double>> velocity;
  OptimizerConfig cfg{0.1, 0.0, 0.5};
  sgd_step(net, grads, cfg, &velocity);
  CHECK(net.params[0].value[0] == Approx(0.9));
  sgd_step(net, grads, cfg, &velocity);
  CHECK(net.params[0].value[0] == Approx(0.9 - 0.1 * 1.5));
  CHECK_THROWS_AS(sgd_step(net, grads, cfg), ContractError);
}

TEST_CASE("supervised loss decreases on a fixed batch") {
  auto net = init_params<float>(2, 8, 2);
  Tensor<float> x({2, 1, 16, 16});
  LabelMap gt({2, 16, 16});
  Xoshiro256 rng(3);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t w = 0; w < 16; ++w) {
        const bool fg = (y - 8.0) * (y - 8.0) + (w - 6.0 - 3.0 * n) * (w - 6.0 - 3.0 * n) < 16.0;
        gt.at(n, y, w) = fg;
        x.at(n, 0, y, w) = static_cast<float>((fg ? 0.8 : 0.2) + rng.normal(0.0, 0.05));
      }
  OptimizerConfig cfg{1e-3, 1e-4, 0.0};
  double prev = 1e300;
  for (int step = 0; step < 50; ++step) {
    Tape<float> tape;
    auto bound = bind(tape, net, true);
    auto loss = sup_loss(softmax_channel(forward(bound, tape.constant(x))), gt, Normalization::mean);
    tape.backward(loss);
    std::vector<Tensor<float>> grads;
    for (const auto& b : bound) grads.push_back(b.grad());
    const double v = loss.item();
    INFO("step " << step);
    CHECK(v < prev);
    prev = v;
    sgd_step(net, grads, cfg);
  }
}

TEST_CASE("parameters round-trip through TSR files") {
  const auto dir = scratch("roundtrip");
  const auto net = init_params<float>(9, 4, 3);
  const auto files = save_params(dir, "student.", net);
  CHECK(files.size() == 22);
  CHECK(load_params<float>(dir, files, 4, 3) == net);
  auto missing = files;
  missing.erase("head.bias");
  CHECK_THROWS_AS(load_params<float>(dir, missing, 4, 3), IoError);
  CHECK_THROWS_AS(load_params<float>(dir, files, 8, 3), IoError);
  std::filesystem::remove_all(dir);
}
