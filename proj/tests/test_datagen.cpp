#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "sgrs/datagen.hpp"

using namespace sgrs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sgrs_datagen_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

DatasetSpec small_spec() {
  DatasetSpec s;
  s.num_images = 40;
  s.num_test_images = 8;
  s.image_size = 32;
  s.min_radius = 3;
  s.max_radius = 8;
  return s;
}

}  // namespace

TEST_CASE("generation is byte-identical for a fixed spec") {
  const auto a = scratch("a"), b = scratch("b");
  generate_dataset(small_spec(), a);
  generate_dataset(small_spec(), b);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(slurp(e.path()) == slurp(b / fs::relative(e.path(), a)));
  }
  CHECK(files == 2 * 48 + 1);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a different seed gives different images") {
  auto s = small_spec();
  const auto a = render_sample(s, 0);
  s.seed = 2;
  CHECK_FALSE(render_sample(s, 0).image == a.image);
}

TEST_CASE("masks hold class indices and foreground covers a sensible share") {
  const auto ds = render_dataset(DatasetSpec{});
  CHECK(ds.samples.size() == 250);
  CHECK(ds.train_ids.size() == 200);
  CHECK(ds.test_ids.size() == 50);
  std::size_t fg = 0, total = 0;
  for (std::size_t id : ds.train_ids) {
    for (auto v : ds.samples[id].mask.data()) {
      REQUIRE(v <= 1);
      fg += v;
    }
    total += ds.samples[id].mask.size();
    for (float v : ds.samples[id].image.data()) REQUIRE((v >= 0.0f && v <= 1.0f));
  }
  const double share = static_cast<double>(fg) / static_cast<double>(total);
  CHECK(share >= 0.05);
  CHECK(share <= 0.60);
}

TEST_CASE("noise-free images are the class intensity map") {
  auto s = small_spec();
  s.noise_sigma = 0.0;
  for (std::size_t id = 0; id < 5; ++id) {
    const auto smp = render_sample(s, id);
    for (std::size_t i = 0; i < smp.mask.size(); ++i) {
      REQUIRE(smp.image[i] == static_cast<float>(class_intensity(smp.mask[i], 2)));
    }
  }
  CHECK(class_intensity(0, 2) == 0.2);
  CHECK(class_intensity(1, 2) == 0.8);
}

TEST_CASE("saved datasets load back unchanged") {
  const auto dir = scratch("load");
  auto ds = generate_dataset(small_spec(), dir);
  const auto back = load_dataset(dir);
  CHECK(back.train_ids == ds.train_ids);
  CHECK(back.test_ids == ds.test_ids);
  CHECK(back.spec.to_json() == ds.spec.to_json());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].image == ds.samples[i].image);
    CHECK(back.samples[i].mask == ds.samples[i].mask);
  }
  CHECK_FALSE(back.frozen_splits);
  ds.frozen_splits = split(ds, 0.1, 3);
  write_index(dir, ds);
  const auto frozen = load_dataset(dir);
  REQUIRE(frozen.frozen_splits);
  CHECK(frozen.frozen_splits->labeled == ds.frozen_splits->labeled);
  fs::remove_all(dir);
}

TEST_CASE("labeled/unlabeled split") {
  const auto ds = render_dataset(DatasetSpec{});
  for (auto [ratio, expected] : std::vector<std::pair<double, std::size_t>>{{0.05, 10}, {0.1, 20}}) {
    const auto sp = split(ds, ratio, 4);
    CHECK(sp.labeled.size() == expected);
    CHECK(sp.unlabeled.size() == 200 - expected);
    std::set<std::size_t> all(sp.labeled.begin(), sp.labeled.end());
    all.insert(sp.unlabeled.begin(), sp.unlabeled.end());
    CHECK(all.size() == 200);
    CHECK(*all.rbegin() == 199);
    CHECK(split(ds, ratio, 4).labeled == sp.labeled);
  }
  CHECK_FALSE(split(ds, 0.05, 4).labeled == split(ds, 0.05, 5).labeled);
  CHECK_THROWS_AS(split(ds, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split(ds, 1.0, 1), ConfigError);
}

TEST_CASE("batch sampling is deterministic, covers the pool and keeps streams apart") {
  const auto ds = render_dataset(DatasetSpec{});
  const auto sp = split(ds, 0.05, 1);
  const auto b = sample_batch<float>(ds, sp, 17, 9);
  CHECK(b.labeled_images.dims() == Dims{2, 1, 64, 64});
  CHECK(b.unlabeled_images.dims() == Dims{2, 1, 64, 64});
  CHECK(b.ground_truth.dims() == Dims{2, 64, 64});
  const auto again = sample_batch<float>(ds, sp, 17, 9);
  CHECK(again.labeled_ids == b.labeled_ids);
  CHECK(again.unlabeled_ids == b.unlabeled_ids);
  CHECK(again.unlabeled_images == b.unlabeled_images);

  const std::set<std::size_t> labeled(sp.labeled.begin(), sp.labeled.end());
  std::set<std::size_t> seen;
  bool disjoint = true;
  for (std::size_t step = 0; step < 1000; ++step) {
    const auto batch = sample_batch<float>(ds, sp, step, 9);
    for (auto id : batch.unlabeled_ids) {
      seen.insert(id);
      disjoint = disjoint && !labeled.count(id);
    }
    for (auto id : batch.labeled_ids) disjoint = disjoint && labeled.count(id);
  }
  CHECK(disjoint);
  CHECK(seen.size() == 190);
}

TEST_CASE("spec validation and I/O errors") {
  auto s = small_spec();
  s.num_classes = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.image_size = 30;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(DatasetSpec::from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
  CHECK(DatasetSpec::from_json(small_spec().to_json()).to_json() == small_spec().to_json());

  const auto blocker = scratch("blocker");
  std::ofstream(blocker) << "x";
  CHECK_THROWS_AS(generate_dataset(small_spec(), blocker / "sub"), IoError);
  CHECK_THROWS_AS(load_dataset(scratch("nothing")), IoError);
  fs::remove(blocker);
}
