#pragma once

// Synthetic 2D segmentation corpus: noisy images holding 1-3 random ellipses
// or rectangles, the labeled/unlabeled split, and the 2+2 batch sampler.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgrs/error.hpp"
#include "sgrs/rng.hpp"
#include "sgrs/tensor.hpp"
#include "sgrs/tsr.hpp"

namespace sgrs {

struct DatasetSpec {
  std::size_t num_images = 200;
  // Held-out images generated alongside the training pool for evaluation.
  std::size_t num_test_images = 50;
  std::size_t image_size = 64;
  std::size_t num_classes = 2;
  double min_radius = 5.0;
  double max_radius = 14.0;
  double noise_sigma = 0.75;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_images < 4) throw ConfigError("num_images must be >= 4");
    if (image_size < 16 || image_size % 4) throw ConfigError("image_size must be >= 16 and divisible by 4");
    if (num_classes < 2 || num_classes > 255) throw ConfigError("num_classes must be in [2, 255]");
    if (!(min_radius > 0) || !(max_radius >= min_radius)) throw ConfigError("radius range must satisfy 0 < min <= max");
    if (!std::isfinite(noise_sigma) || noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"num_images", num_images}, {"num_test_images", num_test_images}, {"image_size", image_size},
            {"num_classes", num_classes}, {"min_radius", min_radius},         {"max_radius", max_radius},
            {"noise_sigma", noise_sigma}, {"seed", seed}};
  }

  static DatasetSpec from_json(const nlohmann::json& j) {
    DatasetSpec s;
    for (const auto& [key, value] : j.items()) {
      if (key == "num_images") s.num_images = value.get<std::size_t>();
      else if (key == "num_test_images") s.num_test_images = value.get<std::size_t>();
      else if (key == "image_size") s.image_size = value.get<std::size_t>();
      else if (key == "num_classes") s.num_classes = value.get<std::size_t>();
      else if (key == "min_radius") s.min_radius = value.get<double>();
      else if (key == "max_radius") s.max_radius = value.get<double>();
      else if (key == "noise_sigma") s.noise_sigma = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown dataset spec key: " + key);
    }
    return s;
  }
};

struct Sample {
  Tensor<float> image;  // [1,H,W], intensities in [0,1]
  Mask mask;            // [H,W], class indices
};

struct Splits {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

// Training pool ids are [0, num_images); held-out ids follow.
struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> samples;
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> test_ids;
  std::optional<Splits> frozen_splits;
};

inline std::string sample_name(std::size_t id) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << id;
  return os.str();
}

// Mean intensity of a class: background 0.2, top class 0.8, evenly spaced.
inline double class_intensity(std::size_t cls, std::size_t num_classes) {
  return 0.2 + 0.6 * static_cast<double>(cls) / static_cast<double>(num_classes - 1);
}

inline Sample render_sample(const DatasetSpec& spec, std::size_t id) {
  auto rng = Xoshiro256(mix_seed(mix_seed(spec.seed, static_cast<std::uint64_t>(StreamRole::dataset)), id));
  const std::size_t n = spec.image_size;
  Mask mask(Dims{n, n});
  const std::size_t shapes = 1 + rng.below(3);
  for (std::size_t s = 0; s < shapes; ++s) {
    const bool ellipse = rng.below(2) == 0;
    const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(n);
    const double cy = rng.uniform(0.15, 0.85) * static_cast<double>(n);
    const double rx = rng.uniform(spec.min_radius, spec.max_radius);
    const double ry = rng.uniform(spec.min_radius, spec.max_radius);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const auto cls = static_cast<std::uint8_t>(spec.num_classes == 2 ? 1 : 1 + rng.below(spec.num_classes - 1));
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const double u = (ca * dx + sa * dy) / rx;
        const double v = (-sa * dx + ca * dy) / ry;
        const bool inside = ellipse ? (u * u + v * v <= 1.0) : (std::abs(u) <= 1.0 && std::abs(v) <= 1.0);
        if (inside) mask[y * n + x] = cls;
      }
    }
  }
  Tensor<float> image(Dims{1, n, n});
  for (std::size_t i = 0; i < n * n; ++i) {
    const double v = rng.normal(class_intensity(mask[i], spec.num_classes), spec.noise_sigma);
    image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return {std::move(image), std::move(mask)};
}

inline Dataset render_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds{spec, {}, {}, {}, std::nullopt};
  const std::size_t total = spec.num_images + spec.num_test_images;
  ds.samples.reserve(total);
  for (std::size_t id = 0; id < total; ++id) {
    ds.samples.push_back(render_sample(spec, id));
    (id < spec.num_images ? ds.train_ids : ds.test_ids).push_back(id);
  }
  return ds;
}

namespace detail {

inline nlohmann::json index_json(const Dataset& ds) {
  nlohmann::json j;
  j["format"] = "sgrs-dataset-v1";
  j["spec"] = ds.spec.to_json();
  auto names = [](const std::vector<std::size_t>& ids) {
    std::vector<std::string> out;
    for (auto id : ids) out.push_back(sample_name(id));
    return out;
  };
  j["train_ids"] = names(ds.train_ids);
  j["test_ids"] = names(ds.test_ids);
  if (ds.frozen_splits) {
    j["splits"] = {{"labeled", names(ds.frozen_splits->labeled)}, {"unlabeled", names(ds.frozen_splits->unlabeled)}};
  } else {
    j["splits"] = nullptr;
  }
  return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

inline std::size_t parse_id(const std::string& name) {
  try {
    std::size_t pos = 0;
    const auto id = std::stoull(name, &pos);
    if (pos != name.size()) throw IoError("bad sample id " + name);
    return static_cast<std::size_t>(id);
  } catch (const std::logic_error&) {
    throw IoError("bad sample id " + name);
  }
}

}  // namespace detail

inline void write_index(const std::filesystem::path& dir, const Dataset& ds) {
  detail::write_text(dir / "index.json", detail::index_json(ds).dump(2) + "\n");
}

// Writes images/<id>.tsr, masks/<id>.tsr and index.json under `dir`.
inline Dataset generate_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  auto ds = render_dataset(spec);
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  std::filesystem::create_directories(dir / "masks", ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  for (std::size_t id = 0; id < ds.samples.size(); ++id) {
    tsr::save(dir / "images" / (sample_name(id) + ".tsr"), ds.samples[id].image);
    tsr::save(dir / "masks" / (sample_name(id) + ".tsr"), ds.samples[id].mask);
  }
  write_index(dir, ds);
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError("missing dataset index " + (dir / "index.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed index.json: ") + e.what());
  }
  Dataset ds;
  ds.spec = DatasetSpec::from_json(j.at("spec"));
  auto ids = [&](const nlohmann::json& arr) {
    std::vector<std::size_t> out;
    for (const auto& name : arr) out.push_back(detail::parse_id(name.get<std::string>()));
    return out;
  };
  ds.train_ids = ids(j.at("train_ids"));
  ds.test_ids = ids(j.at("test_ids"));
  const std::size_t total = ds.train_ids.size() + ds.test_ids.size();
  ds.samples.resize(total);
  for (std::size_t id = 0; id < total; ++id) {
    auto& s = ds.samples[id];
    s.image = tsr::load<float>(dir / "images" / (sample_name(id) + ".tsr"));
    s.mask = tsr::load<std::uint8_t>(dir / "masks" / (sample_name(id) + ".tsr"));
    const std::size_t n = ds.spec.image_size;
    if (s.image.dims() != Dims{1, n, n} || s.mask.dims() != Dims{n, n}) {
      throw IoError("sample " + sample_name(id) + " has unexpected dims");
    }
  }
  if (j.contains("splits") && !j["splits"].is_null()) {
    ds.frozen_splits = Splits{ids(j["splits"].at("labeled")), ids(j["splits"].at("unlabeled"))};
  }
  return ds;
}

// Labeled count is round(ratio * pool size); both sides must hold >= 2 ids.
inline Splits split(const Dataset& ds, double labeled_ratio, std::uint64_t seed) {
  if (!(labeled_ratio > 0.0 && labeled_ratio < 1.0)) throw ConfigError("labeled_ratio must be in (0, 1)");
  const std::size_t n = ds.train_ids.size();
  const auto labeled = static_cast<std::size_t>(std::llround(labeled_ratio * static_cast<double>(n)));
  if (labeled < 2 || n - labeled < 2) {
    throw ConfigError("degenerate split: " + std::to_string(labeled) + " labeled of " + std::to_string(n));
  }
  auto ids = ds.train_ids;
  auto rng = Xoshiro256(mix_seed(seed, 0x5b117));
  rng.shuffle(std::span<std::size_t>(ids));
  Splits s;
  s.labeled.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(labeled));
  s.unlabeled.assign(ids.begin() + static_cast<std::ptrdiff_t>(labeled), ids.end());
  std::sort(s.labeled.begin(), s.labeled.end());
  std::sort(s.unlabeled.begin(), s.unlabeled.end());
  return s;
}

template <class T>
struct Batch {
  Tensor<T> labeled_images;    // [nl,1,H,W]
  LabelMap ground_truth;       // [nl,H,W]
  Tensor<T> unlabeled_images;  // [nu,1,H,W]
  std::vector<std::size_t> labeled_ids;
  std::vector<std::size_t> unlabeled_ids;
  std::size_t step = 0;
};

namespace detail {

// Element `index` of the endless stream formed by concatenating one fresh
// shuffle of `ids` per epoch. Pure in (seed, tag, index).
inline std::size_t epoch_stream(const std::vector<std::size_t>& ids, std::uint64_t seed, std::uint64_t tag,
                                std::size_t index) {
  const std::size_t epoch = index / ids.size();
  auto perm = ids;
  auto rng = Xoshiro256(mix_seed(mix_seed(seed, tag), epoch));
  rng.shuffle(std::span<std::size_t>(perm));
  return perm[index % ids.size()];
}

template <class T>
Tensor<T> stack_images(const Dataset& ds, const std::vector<std::size_t>& ids) {
  const std::size_t n = ds.spec.image_size;
  Tensor<T> out(Dims{ids.size(), 1, n, n});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& img = ds.samples.at(ids[i]).image;
    for (std::size_t p = 0; p < n * n; ++p) out[i * n * n + p] = static_cast<T>(img[p]);
  }
  return out;
}

inline LabelMap stack_masks(const Dataset& ds, const std::vector<std::size_t>& ids) {
  const std::size_t n = ds.spec.image_size;
  LabelMap out(Dims{ids.size(), n, n});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& m = ds.samples.at(ids[i]).mask;
    for (std::size_t p = 0; p < n * n; ++p) out[i * n * n + p] = m[p];
  }
  return out;
}

}  // namespace detail

template <class T>
Tensor<T> stack_images(const Dataset& ds, const std::vector<std::size_t>& ids) {
  return detail::stack_images<T>(ds, ids);
}

inline LabelMap stack_masks(const Dataset& ds, const std::vector<std::size_t>& ids) {
  return detail::stack_masks(ds, ids);
}

// Deterministic in (seed, step): labeled and unlabeled streams are separate
// epoch shuffles of their id lists.
template <class T = float>
Batch<T> sample_batch(const Dataset& ds, const Splits& splits, std::size_t step, std::uint64_t seed,
                      std::size_t num_labeled = 2, std::size_t num_unlabeled = 2) {
  if (splits.labeled.size() < num_labeled || splits.unlabeled.size() < num_unlabeled) {
    throw ConfigError("split too small for the requested batch composition");
  }
  const std::uint64_t base = mix_seed(seed, static_cast<std::uint64_t>(StreamRole::data));
  Batch<T> b;
  b.step = step;
  for (std::size_t j = 0; j < num_labeled; ++j) {
    b.labeled_ids.push_back(detail::epoch_stream(splits.labeled, base, 1, step * num_labeled + j));
  }
  for (std::size_t j = 0; j < num_unlabeled; ++j) {
    b.unlabeled_ids.push_back(detail::epoch_stream(splits.unlabeled, base, 2, step * num_unlabeled + j));
  }
  b.labeled_images = detail::stack_images<T>(ds, b.labeled_ids);
  b.ground_truth = detail::stack_masks(ds, b.labeled_ids);
  b.unlabeled_images = detail::stack_images<T>(ds, b.unlabeled_ids);
  return b;
}

}  // namespace sgrs
