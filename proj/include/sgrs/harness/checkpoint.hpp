#pragma once

// Checkpoint directory: one TSR file per tensor plus manifest.json. The
// manifest carries everything a resumed run needs to continue bit-exactly:
// both networks, the momentum buffer, the augmentation stream state and the
// CSV text written so far.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgrs/harness/config.hpp"
#include "sgrs/harness/io.hpp"
#include "sgrs/meanteacher.hpp"
#include "sgrs/netzoo.hpp"
#include "sgrs/rng.hpp"
#include "sgrs/tsr.hpp"

namespace sgrs {

inline constexpr const char* kCheckpointFormat = "sgrs-checkpoint-1";

struct Checkpoint {
  ModelState<float> state;
  std::vector<Tensor<float>> velocity;  // empty without momentum
  Xoshiro256::State augment_rng{};
  std::size_t step = 0;
  std::uint64_t config_fingerprint = 0;
  std::string losses_csv;
  std::string eval_csv;
};

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  io::ensure_dir(dir);
  nlohmann::json m;
  m["format"] = kCheckpointFormat;
  m["step"] = ck.step;
  m["config_fingerprint"] = hex64(ck.config_fingerprint);
  m["base_width"] = ck.state.student.base_width;
  m["num_classes"] = ck.state.student.num_classes;
  m["ema_decay"] = ck.state.ema_decay;
  m["ema_step"] = ck.state.step;
  m["student"] = save_params(dir, "student.", ck.state.student);
  m["teacher"] = save_params(dir, "teacher.", ck.state.teacher);
  nlohmann::json vel = nlohmann::json::object();
  for (std::size_t i = 0; i < ck.velocity.size(); ++i) {
    const auto& name = ck.state.student.params.at(i).name;
    const std::string file = "velocity." + name + ".tsr";
    tsr::save(dir / file, ck.velocity[i]);
    vel[name] = file;
  }
  m["velocity"] = vel;
  m["augment_rng"] = std::vector<std::uint64_t>(ck.augment_rng.begin(), ck.augment_rng.end());
  io::write_text(dir / "losses.csv", ck.losses_csv);
  io::write_text(dir / "eval.csv", ck.eval_csv);
  m["losses_csv"] = "losses.csv";
  m["eval_csv"] = "eval.csv";
  io::write_text(dir / "manifest.json", m.dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) throw IoError("no checkpoint manifest in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
    if (m.at("format") != kCheckpointFormat) throw IoError("unsupported checkpoint format in " + dir.string());
    Checkpoint ck;
    const auto base = m.at("base_width").get<std::size_t>();
    const auto classes = m.at("num_classes").get<std::size_t>();
    auto student = load_params<float>(dir, m.at("student").get<std::map<std::string, std::string>>(), base, classes);
    auto teacher = load_params<float>(dir, m.at("teacher").get<std::map<std::string, std::string>>(), base, classes);
    ck.state = make_model_state(std::move(student), m.at("ema_decay").get<double>());
    ck.state.teacher = std::move(teacher);
    ck.state.step = m.at("ema_step").get<std::size_t>();
    const auto vel = m.at("velocity").get<std::map<std::string, std::string>>();
    if (!vel.empty()) {
      for (const auto& p : ck.state.student.params) {
        auto it = vel.find(p.name);
        if (it == vel.end()) throw IoError("checkpoint velocity is missing " + p.name);
        ck.velocity.push_back(tsr::load<float>(dir / it->second));
      }
    }
    const auto rng = m.at("augment_rng").get<std::vector<std::uint64_t>>();
    if (rng.size() != 4) throw IoError("checkpoint rng state must hold 4 words");
    std::copy(rng.begin(), rng.end(), ck.augment_rng.begin());
    ck.step = m.at("step").get<std::size_t>();
    ck.config_fingerprint = std::stoull(m.at("config_fingerprint").get<std::string>(), nullptr, 16);
    ck.losses_csv = io::read_text(dir / m.at("losses_csv").get<std::string>());
    ck.eval_csv = io::read_text(dir / m.at("eval_csv").get<std::string>());
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  } catch (const std::logic_error& e) {
    throw IoError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace sgrs
