#pragma once

// Run configuration: one flat JSON object, unknown keys rejected.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "sgrs/augment.hpp"
#include "sgrs/error.hpp"
#include "sgrs/meanteacher.hpp"
#include "sgrs/netzoo.hpp"
#include "sgrs/rle.hpp"

namespace sgrs {

// Component ablation rows. baseline: the student labels its own unlabeled
// batch; +ma: adds mix augmentation; +mt: labels come from the EMA teacher;
// full: +ma+mt plus region-wise losses.
enum class Variant { baseline, ma, mt, ma_mt, full };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::ma: return "+ma";
    case Variant::mt: return "+mt";
    case Variant::ma_mt: return "+ma+mt";
    case Variant::full: return "full";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (auto v : {Variant::baseline, Variant::ma, Variant::mt, Variant::ma_mt, Variant::full}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("variant must be one of baseline, +ma, +mt, +ma+mt, full; got " + s);
}

inline bool uses_teacher(Variant v) { return v == Variant::mt || v == Variant::ma_mt || v == Variant::full; }
inline bool uses_augmentation(Variant v) { return v == Variant::ma || v == Variant::ma_mt || v == Variant::full; }

enum class Augmentation { ma, flip_h, flip_v };

inline std::string to_string(Augmentation a) {
  return a == Augmentation::ma ? "ma" : (a == Augmentation::flip_h ? "flip_h" : "flip_v");
}

inline Augmentation parse_augmentation(const std::string& s) {
  if (s == "ma") return Augmentation::ma;
  if (s == "flip_h") return Augmentation::flip_h;
  if (s == "flip_v") return Augmentation::flip_v;
  throw ConfigError("augmentation must be ma, flip_h or flip_v; got " + s);
}

// One mix coefficient for the whole batch, or one per unlabeled image.
enum class MixPer { batch, image };

inline std::string to_string(MixPer m) { return m == MixPer::batch ? "batch" : "image"; }

inline MixPer parse_mix_per(const std::string& s) {
  if (s == "batch") return MixPer::batch;
  if (s == "image") return MixPer::image;
  throw ConfigError("mix_per must be batch or image; got " + s);
}

// Which unlabeled loss a region feeds in the full variant.
enum class RegionLoss { con, nr, excluded };

inline std::string to_string(RegionLoss r) {
  return r == RegionLoss::con ? "con" : (r == RegionLoss::nr ? "nr" : "excluded");
}

inline RegionLoss parse_region_loss(const std::string& s) {
  if (s == "con") return RegionLoss::con;
  if (s == "nr") return RegionLoss::nr;
  if (s == "excluded") return RegionLoss::excluded;
  throw ConfigError("region loss must be con, nr or excluded; got " + s);
}

struct RegionAssignment {
  RegionLoss omega = RegionLoss::con;
  RegionLoss theta = RegionLoss::nr;
  RegionLoss delta = RegionLoss::excluded;

  friend bool operator==(const RegionAssignment&, const RegionAssignment&) = default;

  // "omega,theta,delta", e.g. "con,nr,excluded".
  std::string to_string() const {
    return sgrs::to_string(omega) + "," + sgrs::to_string(theta) + "," + sgrs::to_string(delta);
  }

  static RegionAssignment parse(const std::string& s) {
    const auto a = s.find(',');
    const auto b = a == std::string::npos ? a : s.find(',', a + 1);
    if (b == std::string::npos || s.find(',', b + 1) != std::string::npos) {
      throw ConfigError("region_losses must read omega,theta,delta; got " + s);
    }
    return {parse_region_loss(s.substr(0, a)), parse_region_loss(s.substr(a + 1, b - a - 1)),
            parse_region_loss(s.substr(b + 1))};
  }
};

struct RunConfig {
  std::string dataset;
  std::string output;
  std::uint64_t seed = 1;
  Variant variant = Variant::full;

  double labeled_ratio = 0.05;
  std::size_t total_steps = 2000;
  std::optional<std::size_t> t_warm;  // unset: 0.4 * total_steps
  double tau = 0.296;
  double epsilon = 0.2;
  double eta = 20.0;
  double lr = 1e-2;
  double weight_decay = 1e-4;
  double momentum = 0.0;
  double grad_clip = 0.0;  // global L2 cap on the student gradient; 0 disables
  double ema_decay = 0.99;
  std::size_t batch_labeled = 2;
  std::size_t batch_unlabeled = 2;
  std::size_t base_width = 8;

  AlphaPolicy alpha_policy = AlphaPolicy::uniform();
  MixPer mix_per = MixPer::batch;
  Augmentation augmentation = Augmentation::ma;
  // Per-mask means blow up on tiny regions; a fixed per-batch divisor does not.
  Normalization loss_normalization = Normalization::batch;
  RegionAssignment region_losses;

  std::size_t eval_every = 200;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::string eval_split = "test";

  std::size_t effective_t_warm() const {
    if (t_warm) return *t_warm;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.4 * static_cast<double>(total_steps))));
  }

  OptimizerConfig optimizer() const { return {lr, weight_decay, momentum}; }

  LossConfig losses() const { return {epsilon, eta, effective_t_warm(), loss_normalization}; }

  void validate() const {
    if (dataset.empty()) throw ConfigError("dataset path is required");
    if (!(labeled_ratio > 0.0 && labeled_ratio < 1.0)) throw ConfigError("labeled_ratio must be in (0, 1)");
    if (t_warm && *t_warm == 0) throw ConfigError("t_warm must be positive");
    if (!(tau >= 0.0) || std::isnan(tau)) throw ConfigError("tau must be >= 0");
    losses().validate();
    optimizer().validate();
    if (!std::isfinite(grad_clip) || grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
    validate_ema_decay(ema_decay);
    alpha_policy.validate();
    if (batch_labeled == 0 || batch_unlabeled == 0) throw ConfigError("batch sizes must be positive");
    if (base_width < 2) throw ConfigError("base_width must be >= 2");
    if (eval_split != "test" && eval_split != "train") throw ConfigError("eval_split must be test or train");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["dataset"] = dataset;
    j["output"] = output;
    j["seed"] = seed;
    j["variant"] = to_string(variant);
    j["labeled_ratio"] = labeled_ratio;
    j["total_steps"] = total_steps;
    j["t_warm"] = t_warm ? nlohmann::json(*t_warm) : nlohmann::json(nullptr);
    j["tau"] = tau;
    j["epsilon"] = epsilon;
    j["eta"] = eta;
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["momentum"] = momentum;
    j["grad_clip"] = grad_clip;
    j["ema_decay"] = ema_decay;
    j["batch_labeled"] = batch_labeled;
    j["batch_unlabeled"] = batch_unlabeled;
    j["base_width"] = base_width;
    j["alpha_policy"] = alpha_policy.to_string();
    j["mix_per"] = to_string(mix_per);
    j["augmentation"] = to_string(augmentation);
    j["loss_normalization"] = to_string(loss_normalization);
    j["region_losses"] = region_losses.to_string();
    j["eval_every"] = eval_every;
    j["checkpoint_every"] = checkpoint_every;
    j["eval_split"] = eval_split;
    return j;
  }

  // Keys absent from `j` keep their current values, so this doubles as an
  // overlay for partial documents.
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    try {
      for (const auto& [key, v] : j.items()) {
        if (key == "dataset") dataset = v.get<std::string>();
        else if (key == "output") output = v.get<std::string>();
        else if (key == "seed") seed = v.get<std::uint64_t>();
        else if (key == "variant") variant = parse_variant(v.get<std::string>());
        else if (key == "labeled_ratio") labeled_ratio = v.get<double>();
        else if (key == "total_steps") total_steps = v.get<std::size_t>();
        else if (key == "t_warm") t_warm = v.is_null() ? std::nullopt : std::optional(v.get<std::size_t>());
        else if (key == "tau") tau = v.get<double>();
        else if (key == "epsilon") epsilon = v.get<double>();
        else if (key == "eta") eta = v.get<double>();
        else if (key == "lr") lr = v.get<double>();
        else if (key == "weight_decay") weight_decay = v.get<double>();
        else if (key == "momentum") momentum = v.get<double>();
        else if (key == "grad_clip") grad_clip = v.get<double>();
        else if (key == "ema_decay") ema_decay = v.get<double>();
        else if (key == "batch_labeled") batch_labeled = v.get<std::size_t>();
        else if (key == "batch_unlabeled") batch_unlabeled = v.get<std::size_t>();
        else if (key == "base_width") base_width = v.get<std::size_t>();
        else if (key == "alpha_policy") alpha_policy = v.is_number() ? AlphaPolicy::fixed(v.get<double>()) : AlphaPolicy::parse(v.get<std::string>());
        else if (key == "mix_per") mix_per = parse_mix_per(v.get<std::string>());
        else if (key == "augmentation") augmentation = parse_augmentation(v.get<std::string>());
        else if (key == "loss_normalization") loss_normalization = parse_normalization(v.get<std::string>());
        else if (key == "region_losses") region_losses = RegionAssignment::parse(v.get<std::string>());
        else if (key == "eval_every") eval_every = v.get<std::size_t>();
        else if (key == "checkpoint_every") checkpoint_every = v.get<std::size_t>();
        else if (key == "eval_split") eval_split = v.get<std::string>();
        else throw ConfigError("unknown run config key: " + key);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad run config value: ") + e.what());
    }
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    c.merge_json(j);
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  // FNV-1a over the canonical dump, output directory excluded: resuming
  // into a fresh directory is allowed, changing anything else is not.
  std::uint64_t fingerprint() const {
    auto j = to_json();
    j.erase("output");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : j.dump()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace sgrs
