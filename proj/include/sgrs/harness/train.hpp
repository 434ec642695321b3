#pragma once

// The training loop. One step, in order:
//   batch -> pseudo labels (teacher, no grad) -> perturbed copy of D_U ->
//   student forward on D_L, D_U, D_M -> region partition -> losses ->
//   backward -> SGD -> EMA.
// Variants switch components off; see Variant.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sgrs/augment.hpp"
#include "sgrs/datagen.hpp"
#include "sgrs/harness/checkpoint.hpp"
#include "sgrs/harness/config.hpp"
#include "sgrs/harness/evaluate.hpp"
#include "sgrs/harness/io.hpp"
#include "sgrs/harness/svg.hpp"
#include "sgrs/meanteacher.hpp"
#include "sgrs/netzoo.hpp"
#include "sgrs/rle.hpp"
#include "sgrs/synergy.hpp"

namespace sgrs {

struct LossRow {
  std::size_t step = 0;
  double sup = 0, con = 0, nr = 0, lambda_t = 0, total = 0;
  RegionCounts counts;
};

inline const char* kLossHeader = "step,sup,con,nr,lambda_t,total,delta,omega,theta\n";

inline std::string loss_csv_row(const LossRow& r) {
  return std::to_string(r.step) + "," + io::num(r.sup) + "," + io::num(r.con) + "," + io::num(r.nr) + "," +
         io::num(r.lambda_t) + "," + io::num(r.total) + "," + std::to_string(r.counts.delta) + "," +
         std::to_string(r.counts.omega) + "," + std::to_string(r.counts.theta) + "\n";
}

struct EvalPoint {
  std::size_t step = 0;
  MetricsReport mean;
};

struct RunRecord {
  std::vector<LossRow> losses;
  std::vector<EvalPoint> evals;
  std::filesystem::path output;
  std::filesystem::path final_checkpoint;
  ModelState<float> state;

  const MetricsReport& final_metrics() const {
    if (evals.empty()) throw ContractError("run has no evaluation");
    return evals.back().mean;
  }
};

// Everything one step saw, for instrumentation. Pointers are null when the
// variant skips that component.
struct StepTrace {
  std::size_t step = 0;
  const Batch<float>* batch = nullptr;
  const NetworkParams<float>* label_source = nullptr;  // network that produced Y
  const LabelMap* pseudo_labels = nullptr;
  const LabelMap* target_u = nullptr;
  const LabelMap* target_m = nullptr;
  const Tensor<float>* perturbed = nullptr;
  std::vector<double> lambdas;
  const RegionMasks* regions = nullptr;
  const Tape<float>* tape = nullptr;
  const std::vector<Var<float>>* student_leaves = nullptr;
  const LossBreakdown<float>* losses = nullptr;
  const ModelState<float>* after = nullptr;
};

struct TrainHooks {
  std::function<void(const StepTrace&)> on_step;
  std::function<void(const EvalPoint&)> on_eval;
};

namespace detail {

inline Mask region_union(const RegionMasks& r, const RegionAssignment& a, RegionLoss which) {
  Mask m(r.delta.dims());
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = (a.omega == which && r.omega[i]) || (a.theta == which && r.theta[i]) || (a.delta == which && r.delta[i]);
  }
  return m;
}

// Rescales all gradients together when their joint L2 norm exceeds `cap`.
inline void clip_global_norm(std::vector<Tensor<float>>& grads, double cap) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (float v : g.storage()) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (!(norm > cap)) return;
  const auto k = static_cast<float>(cap / norm);
  for (auto& g : grads)
    for (auto& v : g.storage()) v *= k;
}

inline std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06zu", step);
  return buf;
}

}  // namespace detail

class Trainer {
 public:
  Trainer(RunConfig cfg, Dataset ds) : cfg_(std::move(cfg)), ds_(std::move(ds)) {
    cfg_.validate();
    splits_ = ds_.frozen_splits ? *ds_.frozen_splits : split(ds_, cfg_.labeled_ratio, cfg_.seed);
    if (splits_.labeled.size() < cfg_.batch_labeled || splits_.unlabeled.size() < cfg_.batch_unlabeled) {
      throw ConfigError("split too small for the batch composition");
    }
    eval_ids_ = split_ids(ds_, cfg_.eval_split);
    state_ = make_model_state(init_params<float>(cfg_.seed, cfg_.base_width, ds_.spec.num_classes), cfg_.ema_decay);
    rng_ = Xoshiro256::for_role(cfg_.seed, StreamRole::augment);
  }

  const RunConfig& config() const { return cfg_; }
  const Dataset& dataset() const { return ds_; }
  const Splits& splits() const { return splits_; }
  const ModelState<float>& state() const { return state_; }
  std::size_t steps_done() const { return done_; }

  void restore(const Checkpoint& ck) {
    if (ck.config_fingerprint != cfg_.fingerprint()) {
      throw ConfigError("checkpoint was written under a different run config");
    }
    if (ck.step > cfg_.total_steps) throw ConfigError("checkpoint is past total_steps");
    if (!ck.state.student.same_topology(state_.student)) throw ConfigError("checkpoint topology differs from config");
    state_ = ck.state;
    velocity_ = ck.velocity;
    rng_.set_state(ck.augment_rng);
    done_ = ck.step;
  }

  Checkpoint snapshot(std::string losses_csv, std::string eval_csv) const {
    return {state_, velocity_, rng_.state(), done_, cfg_.fingerprint(), std::move(losses_csv), std::move(eval_csv)};
  }

  EvalResult evaluate() const { return evaluate_params(state_.student, ds_, eval_ids_); }

  LossRow step(const TrainHooks* hooks = nullptr) {
    const std::size_t t = done_;
    const auto batch =
        sample_batch<float>(ds_, splits_, t, cfg_.seed, cfg_.batch_labeled, cfg_.batch_unlabeled);
    const bool teacher = uses_teacher(cfg_.variant);
    const bool perturb = uses_augmentation(cfg_.variant);

    // Pseudo labels from the teacher as left by the previous step's EMA.
    std::optional<PseudoLabels<float>> plg;
    if (teacher) plg = generate_pseudo_labels(state_, batch.unlabeled_images);

    std::optional<Tensor<float>> dm;
    std::vector<double> lambdas;
    if (perturb) {
      switch (cfg_.augmentation) {
        case Augmentation::ma: {
          const std::size_t draws = cfg_.mix_per == MixPer::batch ? 1 : cfg_.batch_unlabeled;
          for (std::size_t i = 0; i < draws; ++i) lambdas.push_back(draw_mix_coefficient(cfg_.alpha_policy, rng_).lambda_mix);
          dm = mix_augment(batch.unlabeled_images, batch.labeled_images, lambdas);
          break;
        }
        case Augmentation::flip_h: dm = flip_h(batch.unlabeled_images); break;
        case Augmentation::flip_v: dm = flip_v(batch.unlabeled_images); break;
      }
    }

    Tape<float> tape;
    const auto leaves = bind(tape, state_.student, true);
    auto pl = softmax_channel(forward(leaves, tape.constant(batch.labeled_images)));
    auto pu = softmax_channel(forward(leaves, tape.constant(batch.unlabeled_images)));
    std::optional<Var<float>> pm;
    if (dm) {
      pm = softmax_channel(forward(leaves, tape.constant(*dm)));
      // Flips move pixels; bring the prediction back onto D_U's grid.
      if (cfg_.augmentation != Augmentation::ma) pm = flip(*pm, cfg_.augmentation == Augmentation::flip_h);
    }

    // Without a teacher the student labels its own unlabeled batch.
    const LabelMap y = teacher ? plg->labels : argmax_channel(pu);
    const auto norm = cfg_.loss_normalization;
    const Mask everywhere = full_mask(y.dims());

    auto sup = sup_loss(pl, batch.ground_truth, norm);
    Var<float> con, nr;
    std::optional<RegionMasks> regions;
    RegionCounts counts;
    if (cfg_.variant == Variant::full) {
      regions = partition_regions(pu.value(), pm->value(), cfg_.tau);
      counts = {count(regions->delta), count(regions->omega), count(regions->theta)};
      const auto& a = cfg_.region_losses;
      con = con_loss(pu, *pm, y, detail::region_union(*regions, a, RegionLoss::con), norm);
      nr = nr_loss(pu, *pm, y, detail::region_union(*regions, a, RegionLoss::nr), cfg_.epsilon, cfg_.eta, norm);
    } else if (pm) {
      con = con_loss(pu, *pm, y, everywhere, norm);
      nr = tape.constant(Tensor<float>::scalar(0.0f));
    } else {
      con = ce_dice(pu, y, everywhere, norm);
      nr = tape.constant(Tensor<float>::scalar(0.0f));
    }
    const auto breakdown = total_loss(sup, con, nr, t, cfg_.effective_t_warm(), counts);
    tape.backward(breakdown.total);

    std::vector<Tensor<float>> grads;
    grads.reserve(leaves.size());
    for (const auto& leaf : leaves) grads.push_back(leaf.grad());
    if (cfg_.grad_clip > 0.0) detail::clip_global_norm(grads, cfg_.grad_clip);
    const NetworkParams<float> label_source = teacher ? state_.teacher : state_.student;
    sgd_step(state_.student, grads, cfg_.optimizer(), &velocity_);
    ema_update(state_);
    ++done_;

    LossRow row{t, breakdown.sup_value(), breakdown.con_value(), breakdown.nr_value(), breakdown.lambda_t,
                breakdown.total_value(), counts};
    if (hooks && hooks->on_step) {
      StepTrace tr;
      tr.step = t;
      tr.batch = &batch;
      tr.label_source = &label_source;
      tr.pseudo_labels = &y;
      tr.target_u = &y;
      tr.target_m = pm ? &y : nullptr;
      tr.perturbed = dm ? &*dm : nullptr;
      tr.lambdas = lambdas;
      tr.regions = regions ? &*regions : nullptr;
      tr.tape = &tape;
      tr.student_leaves = &leaves;
      tr.losses = &breakdown;
      tr.after = &state_;
      hooks->on_step(tr);
    }
    return row;
  }

 private:
  RunConfig cfg_;
  Dataset ds_;
  Splits splits_;
  std::vector<std::size_t> eval_ids_;
  ModelState<float> state_;
  std::vector<Tensor<float>> velocity_;
  Xoshiro256 rng_{1};
  std::size_t done_ = 0;
};

// Dice and loss curves of a finished run directory.
inline std::string run_report_svg(const std::filesystem::path& run_dir) {
  const auto losses = io::read_csv(run_dir / "losses.csv");
  const auto evals = io::read_csv(run_dir / "eval.csv");
  svg::Series total{"total", {}, {}, {}}, sup{"sup", {}, {}, {}};
  const auto cs = losses.column("step"), ct = losses.column("total"), cu = losses.column("sup");
  for (const auto& r : losses.rows) {
    const double s = std::stod(r[cs]);
    total.x.push_back(s), total.y.push_back(std::stod(r[ct]));
    sup.x.push_back(s), sup.y.push_back(std::stod(r[cu]));
  }
  svg::Series dice{"held-out dice", {}, {}, {}};
  const auto es = evals.column("step"), ei = evals.column("image"), ed = evals.column("dice");
  for (const auto& r : evals.rows) {
    if (r[ei] != "mean") continue;
    dice.x.push_back(std::stod(r[es]));
    dice.y.push_back(std::stod(r[ed]));
  }
  return svg::stack({svg::line_chart("training loss", {total, sup}, "step", "loss"),
                     svg::line_chart("held-out Dice", {dice}, "step", "Dice")});
}

// Runs (or resumes) a configured training job, writing config.json,
// losses.csv, eval.csv, checkpoints/ and report.svg under cfg.output.
inline RunRecord train(const RunConfig& cfg, const TrainHooks& hooks = {},
                       const std::optional<std::filesystem::path>& resume_from = std::nullopt) {
  cfg.validate();
  if (cfg.output.empty()) throw ConfigError("output directory is required");
  Trainer trainer(cfg, load_dataset(cfg.dataset));
  const std::filesystem::path out = cfg.output;
  io::ensure_dir(out / "checkpoints");
  io::write_text(out / "config.json", cfg.to_json().dump(2) + "\n");

  RunRecord rec;
  rec.output = out;
  std::string losses_csv = kLossHeader, eval_csv = kEvalHeader;
  if (resume_from) {
    auto ck = load_checkpoint(*resume_from);
    trainer.restore(ck);
    losses_csv = ck.losses_csv;
    eval_csv = ck.eval_csv;
  }

  auto flush = [&] {
    io::write_text(out / "losses.csv", losses_csv);
    io::write_text(out / "eval.csv", eval_csv);
  };
  auto evaluate_now = [&] {
    const auto r = trainer.evaluate();
    eval_csv += eval_csv_rows(trainer.steps_done(), r);
    rec.evals.push_back({trainer.steps_done(), r.mean});
    if (hooks.on_eval) hooks.on_eval(rec.evals.back());
  };
  auto checkpoint_now = [&] {
    const auto dir = out / "checkpoints" / detail::checkpoint_name(trainer.steps_done());
    save_checkpoint(dir, trainer.snapshot(losses_csv, eval_csv));
    return dir;
  };

  if (trainer.steps_done() == 0) evaluate_now();
  while (trainer.steps_done() < cfg.total_steps) {
    const auto row = trainer.step(&hooks);
    losses_csv += loss_csv_row(row);
    rec.losses.push_back(row);
    const std::size_t s = trainer.steps_done();
    const bool last = s == cfg.total_steps;
    if (last || (cfg.eval_every && s % cfg.eval_every == 0)) {
      evaluate_now();
      flush();
    }
    if (!last && cfg.checkpoint_every && s % cfg.checkpoint_every == 0) checkpoint_now();
  }
  flush();
  rec.final_checkpoint = checkpoint_now();
  rec.state = trainer.state();
  io::write_text(out / "report.svg", run_report_svg(out));
  return rec;
}

}  // namespace sgrs
