#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "sgrs/harness.hpp"

using namespace sgrs;
namespace fs = std::filesystem;
using Catch::Approx;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sgrs_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

const fs::path& tiny_dataset() {
  static const fs::path dir = [] {
    auto d = scratch("tiny_data");
    DatasetSpec s;
    s.num_images = 16;
    s.num_test_images = 4;
    s.image_size = 16;
    s.min_radius = 2;
    s.max_radius = 5;
    generate_dataset(s, d);
    return d;
  }();
  return dir;
}

RunConfig tiny_config(const std::string& out, Variant v = Variant::full) {
  RunConfig c;
  c.dataset = tiny_dataset().string();
  c.output = scratch(out).string();
  c.variant = v;
  c.labeled_ratio = 0.25;
  c.total_steps = 6;
  c.eval_every = 3;
  c.base_width = 4;
  return c;
}

std::string slurp(const fs::path& p) { return io::read_text(p); }

}  // namespace

TEST_CASE("run config defaults follow the published hyperparameters") {
  const RunConfig c;
  CHECK(c.tau == 0.296);
  CHECK(c.epsilon == 0.2);
  CHECK(c.eta == 20.0);
  CHECK(c.lr == 1e-2);
  CHECK(c.weight_decay == 1e-4);
  CHECK(c.batch_labeled == 2);
  CHECK(c.batch_unlabeled == 2);
  CHECK(c.labeled_ratio == 0.05);
  CHECK(c.total_steps == 2000);
  CHECK(c.effective_t_warm() == 800);
  CHECK(c.ema_decay == 0.99);
  CHECK(c.eval_every == 200);
  CHECK(c.variant == Variant::full);
  CHECK(c.momentum == 0.0);
  CHECK(c.grad_clip == 0.0);
  CHECK(c.loss_normalization == Normalization::batch);
  CHECK(c.region_losses.to_string() == "con,nr,excluded");
}

TEST_CASE("run config JSON round trip and rejection of unknown keys") {
  RunConfig c;
  c.dataset = "d";
  c.tau = 0.4;
  c.variant = Variant::ma_mt;
  c.alpha_policy = AlphaPolicy::fixed(0.5);
  c.t_warm = 123;
  const auto back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.effective_t_warm() == 123);
  CHECK_THROWS_AS(RunConfig::from_json({{"tua", 0.3}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"tau", "high"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"variant", "+ma+mt+x"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"region_losses", "con,nr"}}), ConfigError);

  auto bad = c;
  bad.tau = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c, bad.ema_decay = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c, bad.labeled_ratio = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c, bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c, bad.grad_clip = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c, bad.dataset.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  auto moved = c;
  moved.output = "elsewhere";
  CHECK(moved.fingerprint() == c.fingerprint());
  moved.tau = 0.41;
  CHECK(moved.fingerprint() != c.fingerprint());
}

TEST_CASE("global gradient clipping") {
  std::vector<Tensor<float>> g{Tensor<float>({1}, std::vector<float>{3.0f}), Tensor<float>({1}, std::vector<float>{4.0f})};
  auto kept = g;
  detail::clip_global_norm(kept, 10.0);
  CHECK(kept[0][0] == 3.0f);
  CHECK(kept[1][0] == 4.0f);
  detail::clip_global_norm(g, 1.0);
  CHECK(g[0][0] == Approx(0.6f));
  CHECK(g[1][0] == Approx(0.8f));
}

TEST_CASE("config errors surface before any compute") {
  auto c = tiny_config("bad_config");
  c.epsilon = 1.5;
  CHECK_THROWS_AS(train(c), ConfigError);
  CHECK_FALSE(fs::exists(fs::path(c.output) / "config.json"));
  auto missing = tiny_config("missing_data");
  missing.dataset = scratch("no_such_dataset").string();
  CHECK_THROWS_AS(train(missing), IoError);
}

TEST_CASE("zero steps evaluates the initial network only") {
  auto c = tiny_config("zero");
  c.total_steps = 0;
  const auto rec = train(c);
  CHECK(rec.losses.empty());
  REQUIRE(rec.evals.size() == 1);
  CHECK(rec.evals[0].step == 0);
  CHECK(slurp(fs::path(c.output) / "losses.csv") == kLossHeader);
  CHECK(fs::exists(rec.final_checkpoint / "manifest.json"));
  CHECK(fs::exists(fs::path(c.output) / "report.svg"));
  CHECK(RunConfig::load(fs::path(c.output) / "config.json").to_json() == c.to_json());
}

TEST_CASE("identical configs give byte-identical outputs with increasing steps") {
  auto a = tiny_config("det_a"), b = tiny_config("det_b");
  const auto ra = train(a);
  train(b);
  CHECK(slurp(fs::path(a.output) / "losses.csv") == slurp(fs::path(b.output) / "losses.csv"));
  CHECK(slurp(fs::path(a.output) / "eval.csv") == slurp(fs::path(b.output) / "eval.csv"));
  REQUIRE(ra.losses.size() == 6);
  for (std::size_t i = 0; i < ra.losses.size(); ++i) CHECK(ra.losses[i].step == i);
  std::vector<std::size_t> eval_steps;
  for (const auto& e : ra.evals) eval_steps.push_back(e.step);
  CHECK(eval_steps == std::vector<std::size_t>{0, 3, 6});
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  for (double momentum : {0.0, 0.5}) {
    auto full = tiny_config("resume_full");
    full.total_steps = 8;
    full.checkpoint_every = 4;
    full.momentum = momentum;
    train(full);
    auto resumed = full;
    resumed.output = scratch("resume_tail").string();
    train(resumed, {}, fs::path(full.output) / "checkpoints" / "step_000004");
    CHECK(slurp(fs::path(full.output) / "losses.csv") == slurp(fs::path(resumed.output) / "losses.csv"));
    CHECK(slurp(fs::path(full.output) / "eval.csv") == slurp(fs::path(resumed.output) / "eval.csv"));
    const auto a = load_checkpoint(fs::path(full.output) / "checkpoints" / "step_000008");
    const auto b = load_checkpoint(fs::path(resumed.output) / "checkpoints" / "step_000008");
    CHECK(a.state.student == b.state.student);
    CHECK(a.state.teacher == b.state.teacher);

    auto changed = full;
    changed.tau = 0.5;
    changed.output = scratch("resume_changed").string();
    CHECK_THROWS_AS(train(changed, {}, fs::path(full.output) / "checkpoints" / "step_000004"), ConfigError);
  }
  CHECK_THROWS_AS(load_checkpoint(scratch("no_checkpoint")), IoError);
}

TEST_CASE("step instrumentation: teacher timing, label identity and gradient isolation") {
  auto c = tiny_config("hooks");
  c.total_steps = 5;
  const auto ds = load_dataset(c.dataset);
  Trainer trainer(c, ds);
  NetworkParams<float> previous_teacher = trainer.state().teacher;
  NetworkParams<float> previous_student = trainer.state().student;
  std::size_t calls = 0;
  TrainHooks hooks;
  hooks.on_step = [&](const StepTrace& tr) {
    ++calls;
    // Pseudo labels come from the teacher left by the previous EMA update.
    REQUIRE(tr.label_source);
    CHECK(*tr.label_source == previous_teacher);
    const auto teacher_labels = argmax_channel(predict_probs(previous_teacher, tr.batch->unlabeled_images));
    CHECK(*tr.pseudo_labels == teacher_labels);
    // The mixed stream is supervised by the unlabeled member's labels.
    CHECK(tr.target_m == tr.target_u);
    REQUIRE(tr.perturbed);
    REQUIRE(tr.lambdas.size() == 1);
    CHECK(*tr.perturbed == mix_augment(tr.batch->unlabeled_images, tr.batch->labeled_images, tr.lambdas));

    // Only the 22 student leaves may require grad.
    std::set<std::size_t> student_ids;
    for (const auto& v : *tr.student_leaves) student_ids.insert(v.id());
    std::size_t grad_leaves = 0;
    bool only_student = true;
    for (std::size_t id = 0; id < tr.tape->size(); ++id) {
      const auto& n = tr.tape->node(id);
      if (n.op != "leaf" || !n.requires_grad) continue;
      ++grad_leaves;
      only_student = only_student && student_ids.count(id);
    }
    CHECK(grad_leaves == 22);
    CHECK(only_student);

    // Region masks partition the batch and match the logged counts.
    REQUIRE(tr.regions);
    CHECK(tr.losses->counts.delta + tr.losses->counts.omega + tr.losses->counts.theta == 2 * 16 * 16);
    CHECK(count(tr.regions->omega) == tr.losses->counts.omega);

    // lambda(t) enters as a plain number.
    CHECK(tr.losses->lambda_t == consistency_weight(tr.step, c.effective_t_warm()));
    CHECK(tr.losses->total_value() ==
          Approx(tr.losses->sup_value() + tr.losses->lambda_t * (tr.losses->con_value() + tr.losses->nr_value()))
              .epsilon(1e-5));

    // Teacher after the step is the EMA of the old teacher and new student.
    const float old_t = previous_teacher.params[0].value[0];
    const float new_s = tr.after->student.params[0].value[0];
    CHECK(tr.after->teacher.params[0].value[0] == Approx(0.99f * old_t + 0.01f * new_s).epsilon(1e-5));
    CHECK_FALSE(tr.after->student == previous_student);
    previous_teacher = tr.after->teacher;
    previous_student = tr.after->student;
  };
  for (int i = 0; i < 5; ++i) trainer.step(&hooks);
  CHECK(calls == 5);
}

TEST_CASE("variant switches") {
  const auto ds = load_dataset(tiny_dataset());
  auto run_one = [&](Variant v, Augmentation a = Augmentation::ma) {
    auto c = tiny_config("variant");
    c.variant = v;
    c.augmentation = a;
    Trainer t(c, ds);
    const auto before = t.state().student;
    StepTrace seen;
    bool source_is_student = false, has_regions = false, has_perturbed = false;
    Tensor<float> perturbed, unlabeled;
    TrainHooks hooks;
    hooks.on_step = [&](const StepTrace& tr) {
      source_is_student = *tr.label_source == before;
      has_regions = tr.regions != nullptr;
      has_perturbed = tr.perturbed != nullptr;
      if (tr.perturbed) perturbed = *tr.perturbed, unlabeled = tr.batch->unlabeled_images;
    };
    // Step 1 so that teacher and student differ.
    t.step();
    const auto mid = t.state().student;
    auto row = t.step(&hooks);
    (void)mid;
    return std::tuple{row, has_regions, has_perturbed, perturbed, unlabeled, t.state()};
  };
  {
    auto [row, regions, perturbed, dm, du, st] = run_one(Variant::baseline);
    CHECK_FALSE(regions);
    CHECK_FALSE(perturbed);
    CHECK(row.nr == 0.0);
  }
  {
    auto [row, regions, perturbed, dm, du, st] = run_one(Variant::full, Augmentation::flip_h);
    CHECK(regions);
    REQUIRE(perturbed);
    CHECK(dm == flip_h(du));
  }
  {
    auto [row, regions, perturbed, dm, du, st] = run_one(Variant::ma_mt, Augmentation::flip_v);
    CHECK_FALSE(regions);
    CHECK(dm == flip_v(du));
    CHECK(row.nr == 0.0);
  }
}

TEST_CASE("baseline labels its unlabeled batch with the student") {
  auto c = tiny_config("baseline_labels", Variant::baseline);
  Trainer t(c, load_dataset(c.dataset));
  t.step();
  t.step();
  const auto student = t.state().student;
  TrainHooks hooks;
  bool checked = false;
  hooks.on_step = [&](const StepTrace& tr) {
    CHECK(*tr.label_source == student);
    CHECK(*tr.pseudo_labels == argmax_channel(predict_probs(student, tr.batch->unlabeled_images)));
    CHECK_FALSE(*tr.label_source == t.state().teacher);
    checked = true;
  };
  t.step(&hooks);
  CHECK(checked);
}

TEST_CASE("evaluating against the network's own predictions scores perfectly") {
  auto ds = load_dataset(tiny_dataset());
  const auto net = init_params<float>(3, 4, 2);
  const auto pred = predict_labels(net, ds, ds.test_ids);
  const std::size_t plane = 16 * 16;
  for (std::size_t i = 0; i < ds.test_ids.size(); ++i) {
    auto& m = ds.samples[ds.test_ids[i]].mask;
    for (std::size_t p = 0; p < plane; ++p) m[p] = static_cast<std::uint8_t>(pred[i * plane + p]);
  }
  const auto r = evaluate_params(net, ds, ds.test_ids);
  CHECK(r.mean.dice == 1.0);
  for (const auto& row : r.rows) CHECK(row.report.hd95 == 0.0);
}

TEST_CASE("checkpoint evaluation is repeatable and writes a CSV") {
  auto c = tiny_config("eval_ck");
  const auto rec = train(c);
  const auto csv = scratch("eval_ck.csv");
  const auto a = evaluate_checkpoint(rec.final_checkpoint, c.dataset, "test", csv);
  const auto b = evaluate_checkpoint(rec.final_checkpoint, c.dataset, "test");
  CHECK(a.mean.dice == b.mean.dice);
  CHECK(a.mean.dice == rec.final_metrics().dice);
  const auto table = io::read_csv(csv);
  CHECK(table.rows.size() == 5);
  CHECK(table.rows.back()[table.column("image")] == "mean");
  CHECK_THROWS_AS(evaluate_checkpoint(scratch("nothing_here"), c.dataset, "test"), IoError);
  CHECK_THROWS_AS(evaluate_checkpoint(rec.final_checkpoint, c.dataset, "validation"), ConfigError);
}

TEST_CASE("an untrained network scores poorly on the default data") {
  const auto ds = render_dataset(DatasetSpec{});
  const auto r = evaluate_params(init_params<float>(1, 8, 2), ds, ds.test_ids);
  CHECK(r.mean.dice < 0.6);
}

TEST_CASE("ablation grids") {
  RunConfig base;
  base.dataset = "d";
  const auto v = variant_grid(base);
  REQUIRE(v.rows.size() == 5);
  std::vector<std::string> labels;
  for (const auto& r : v.rows) labels.push_back(r.label);
  CHECK(labels == std::vector<std::string>{"baseline", "+ma", "+mt", "+ma+mt", "full"});

  const auto r = region_grid(base);
  std::size_t flagged = 0;
  for (const auto& row : r.rows) {
    if (!row.paper_choice) continue;
    ++flagged;
    CHECK(row.label == "con,nr,excluded");
    CHECK(row.config.region_losses.omega == RegionLoss::con);
    CHECK(row.config.region_losses.theta == RegionLoss::nr);
    CHECK(row.config.region_losses.delta == RegionLoss::excluded);
  }
  CHECK(flagged == 1);
  CHECK(augmentation_grid(base).rows.size() == 3);
}

TEST_CASE("ablation rows share seeds, data and initialisation") {
  auto base = tiny_config("ablate_base");
  base.total_steps = 2;
  base.eval_every = 0;
  auto grid = variant_grid(base);
  grid.rows.erase(grid.rows.begin() + 1, grid.rows.begin() + 4);  // baseline and full
  const auto out = scratch("ablate");
  const auto res = run_grid(grid, {4, 5}, out);
  write_grid(res, out);
  REQUIRE(res.rows.size() == 2);
  for (const auto& row : res.rows) CHECK(row.per_seed.size() == 2);
  for (std::uint64_t seed : {4, 5}) {
    // The first supervised loss depends only on the seed, not the variant.
    const auto a = io::read_csv(out / "variants" / "baseline" / ("seed_" + std::to_string(seed)) / "losses.csv");
    const auto b = io::read_csv(out / "variants" / "full" / ("seed_" + std::to_string(seed)) / "losses.csv");
    CHECK(a.rows[0][a.column("sup")] == b.rows[0][b.column("sup")]);
  }
  const auto table = io::read_csv(out / "variants.csv");
  CHECK(table.rows.size() == 2);
  CHECK(table.header.back() == "dice_seed_5");
  CHECK(fs::exists(out / "variants.svg"));
}

TEST_CASE("tau sweep") {
  const auto grid = default_tau_grid();
  CHECK(grid.size() == 7);
  CHECK(std::count(grid.begin(), grid.end(), 0.296) == 1);
  CHECK_NOTHROW(validate_taus({0.0, std::log(2.0)}, 2));
  CHECK_THROWS_AS(validate_taus({-0.01}, 2), ConfigError);
  CHECK_THROWS_AS(validate_taus({0.8}, 2), ConfigError);

  auto base = tiny_config("sweep_base");
  base.total_steps = 2;
  const auto out = scratch("sweep");
  const auto pts = sweep_tau(base, {0.0, std::log(2.0)}, {1, 2}, out);
  REQUIRE(pts.size() == 2);
  const auto table = io::read_csv(out / "tau_sweep.csv");
  CHECK(table.rows.size() == 2);
  CHECK(table.header[2] == "mean_dice");
  CHECK(table.header[3] == "std_dice");
  CHECK(fs::exists(out / "tau_sweep.svg"));
  auto wrong = base;
  wrong.variant = Variant::baseline;
  CHECK_THROWS_AS(sweep_tau(wrong, {0.1}, {1}, out), ConfigError);
}

TEST_CASE("svg output is well formed") {
  const auto bars = svg::bar_chart("t <&>", {{"a", 0.5, 0.1, false}, {"b", 0.7, 0.0, true}}, "Dice");
  CHECK(bars.rfind("<svg", 0) == 0);
  CHECK(bars.find("t &lt;&amp;&gt;") != std::string::npos);
  CHECK(bars.find("</svg>") != std::string::npos);
  const auto line = svg::line_chart("curve", {{"s", {0, 1, 2}, {1, 2, 3}, {}}}, "x", "y");
  CHECK(line.find("<polyline") != std::string::npos);
}

#ifdef SGRS_CLI
TEST_CASE("command-line exit codes") {
  const std::string cli = SGRS_CLI;
  auto run = [&](const std::string& args) {
    const int rc = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  const auto out = scratch("cli");
  const std::string data = (out / "data").string();
  CHECK(run("gen-data --out " + data + " --num-images 12 --num-test-images 4 --image-size 16 --min-radius 2 "
            "--max-radius 5") == 0);
  const std::string common = "--dataset " + data + " --labeled-ratio 0.25 --base-width 4 --total-steps 2 ";
  CHECK(run("train " + common + "--output " + (out / "run").string()) == 0);
  CHECK(fs::exists(out / "run" / "losses.csv"));
  CHECK(run("train " + common + "--output " + (out / "bad").string() + " --tau -1") == 2);
  CHECK(run("train " + common + "--output " + (out / "bad").string() + " --tau abc") == 2);
  CHECK(run("train --dataset " + (out / "missing").string() + " --output " + (out / "bad").string()) == 3);
  CHECK(run("eval --checkpoint " + (out / "run" / "checkpoints" / "step_000002").string() + " --dataset " + data) == 0);
  CHECK(run("eval --checkpoint " + (out / "none").string() + " --dataset " + data) == 3);
  CHECK(run("report --run " + (out / "run").string()) == 0);
  CHECK(run("train --bogus-flag 1") == 2);
}
#endif
