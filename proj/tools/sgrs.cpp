// sgrs: command-line front end.
//
//   sgrs gen-data  --out data/
//   sgrs train     --dataset data/ --output runs/full [--config run.json] [--tau 0.3 ...]
//   sgrs eval      --checkpoint runs/full/checkpoints/step_002000 --dataset data/
//   sgrs ablate    --dataset data/ --output runs/ablate --seeds 1,2,3
//   sgrs sweep-tau --dataset data/ --output runs/tau --seeds 1,2,3
//   sgrs report    --run runs/full
//
// Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numeric failure.

#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgrs/harness.hpp"

namespace {

using namespace sgrs;

// Run-config keys exposed as --flags. Values are passed through JSON so
// parsing and range checks live in one place.
const std::vector<std::string> kRunKeys = {
    "dataset", "output", "seed", "variant", "labeled_ratio", "total_steps", "t_warm", "tau", "epsilon", "eta", "lr",
    "weight_decay", "momentum", "grad_clip", "ema_decay", "batch_labeled", "batch_unlabeled", "base_width", "alpha_policy",
    "mix_per", "augmentation", "loss_normalization", "region_losses", "eval_every", "checkpoint_every", "eval_split"};
const std::set<std::string> kStringKeys = {"dataset",      "output",             "variant",       "alpha_policy",
                                           "mix_per",      "augmentation",       "region_losses", "eval_split",
                                           "loss_normalization"};

struct RunFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run config; flags override its entries");
    for (const auto& key : kRunKeys) {
      std::string flag = "--" + key;
      for (auto& c : flag) c = c == '_' ? '-' : c;
      app->add_option(flag, values[key], key);
    }
  }

  RunConfig resolve(CLI::App* app) const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    nlohmann::json overlay = nlohmann::json::object();
    for (const auto& key : kRunKeys) {
      std::string flag = "--" + key;
      for (auto& c : flag) c = c == '_' ? '-' : c;
      if (app->count(flag) == 0) continue;
      const auto& text = values.at(key);
      if (kStringKeys.count(key)) {
        overlay[key] = text;
      } else {
        try {
          overlay[key] = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception&) {
          throw ConfigError("--" + key + " expects a number, got " + text);
        }
      }
    }
    cfg.merge_json(overlay);
    return cfg;
  }
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& part : io::split(s)) {
    try {
      out.push_back(std::stoull(part));
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed list " + s);
    }
  }
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : io::split(s)) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::logic_error&) {
      throw ConfigError("bad number list " + s);
    }
  }
  return out;
}

void log_line(const std::string& msg) { std::fprintf(stderr, "[sgrs] %s\n", msg.c_str()); }

int run(int argc, char** argv) {
  CLI::App app{"Semi-supervised segmentation with synergy evaluation and regional losses"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset");
  DatasetSpec spec;
  std::string gen_out, spec_path;
  gen->add_option("--out", gen_out, "dataset directory")->required();
  gen->add_option("--spec", spec_path, "JSON dataset spec");
  gen->add_option("--num-images", spec.num_images);
  gen->add_option("--num-test-images", spec.num_test_images);
  gen->add_option("--image-size", spec.image_size);
  gen->add_option("--num-classes", spec.num_classes);
  gen->add_option("--min-radius", spec.min_radius);
  gen->add_option("--max-radius", spec.max_radius);
  gen->add_option("--noise-sigma", spec.noise_sigma);
  gen->add_option("--seed", spec.seed);

  // train
  auto* tr = app.add_subcommand("train", "Train one configuration");
  RunFlags train_flags;
  train_flags.attach(tr);
  std::string resume;
  tr->add_option("--resume", resume, "checkpoint directory to continue from");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint's student network");
  std::string ck_dir, ev_data, ev_split = "test", ev_out;
  ev->add_option("--checkpoint", ck_dir)->required();
  ev->add_option("--dataset", ev_data)->required();
  ev->add_option("--split", ev_split, "test or train");
  ev->add_option("--out", ev_out, "evaluation CSV (default: <checkpoint>/eval_<split>.csv)");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Variant, region-loss and augmentation grids");
  RunFlags ablate_flags;
  ablate_flags.attach(ab);
  std::string ab_seeds = "1,2,3", ab_grids;
  ab->add_option("--seeds", ab_seeds, "comma-separated seeds shared by every row");
  ab->add_option("--grids", ab_grids, "subset of variants,regions,augmentation");

  // sweep-tau
  auto* sw = app.add_subcommand("sweep-tau", "Held-out Dice across entropy thresholds");
  RunFlags sweep_flags;
  sweep_flags.attach(sw);
  std::string sw_seeds = "1,2,3", sw_taus;
  sw->add_option("--seeds", sw_seeds);
  sw->add_option("--taus", sw_taus, "comma-separated thresholds (default 0.05,0.1,0.2,0.296,0.4,0.5,0.6)");

  // report
  auto* rp = app.add_subcommand("report", "Re-render report.svg for a run directory");
  std::string rp_dir;
  rp->add_option("--run", rp_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (gen->parsed()) {
    if (!spec_path.empty()) {
      auto overrides = spec.to_json();
      const auto file = nlohmann::json::parse(io::read_text(spec_path));
      auto merged = file;
      for (const auto& [k, v] : overrides.items()) {
        std::string flag = "--" + k;
        for (auto& c : flag) c = c == '_' ? '-' : c;
        if (gen->count(flag)) merged[k] = v;
      }
      spec = DatasetSpec::from_json(merged);
    }
    const auto ds = generate_dataset(spec, gen_out);
    log_line("wrote " + std::to_string(ds.samples.size()) + " samples to " + gen_out);
  } else if (tr->parsed()) {
    const auto cfg = train_flags.resolve(tr);
    TrainHooks hooks;
    hooks.on_eval = [](const EvalPoint& p) {
      log_line("step " + std::to_string(p.step) + " dice " + io::num(p.mean.dice) + " hd95 " + io::num(p.mean.hd95));
    };
    const auto rec = train(cfg, hooks, resume.empty() ? std::nullopt : std::optional<std::filesystem::path>(resume));
    std::printf("final dice %s jaccard %s hd95 %s asd %s\n", io::num(rec.final_metrics().dice).c_str(),
                io::num(rec.final_metrics().jaccard).c_str(), io::num(rec.final_metrics().hd95).c_str(),
                io::num(rec.final_metrics().asd).c_str());
  } else if (ev->parsed()) {
    const std::filesystem::path out = ev_out.empty() ? std::filesystem::path(ck_dir) / ("eval_" + ev_split + ".csv")
                                                     : std::filesystem::path(ev_out);
    const auto r = evaluate_checkpoint(ck_dir, ev_data, ev_split, out);
    std::printf("dice %s jaccard %s hd95 %s asd %s (%zu images) -> %s\n", io::num(r.mean.dice).c_str(),
                io::num(r.mean.jaccard).c_str(), io::num(r.mean.hd95).c_str(), io::num(r.mean.asd).c_str(),
                r.rows.size(), out.string().c_str());
  } else if (ab->parsed()) {
    const auto cfg = ablate_flags.resolve(ab);
    if (cfg.output.empty()) throw ConfigError("--output is required");
    std::vector<std::string> grids;
    if (!ab_grids.empty()) grids = io::split(ab_grids);
    for (const auto& g : ablate(cfg, parse_seeds(ab_seeds), cfg.output, grids, log_line)) {
      for (const auto& r : g.rows) {
        std::printf("%-14s %-18s dice %s +- %s%s\n", g.name.c_str(), r.label.c_str(), io::num(r.dice().mean).c_str(),
                    io::num(r.dice().stddev).c_str(), r.paper_choice ? "  *" : "");
      }
    }
  } else if (sw->parsed()) {
    const auto cfg = sweep_flags.resolve(sw);
    if (cfg.output.empty()) throw ConfigError("--output is required");
    const auto taus = sw_taus.empty() ? default_tau_grid() : parse_doubles(sw_taus);
    for (const auto& p : sweep_tau(cfg, taus, parse_seeds(sw_seeds), cfg.output, log_line)) {
      std::printf("tau %-8s dice %s +- %s\n", io::num(p.tau).c_str(), io::num(p.dice().mean).c_str(),
                  io::num(p.dice().stddev).c_str());
    }
  } else if (rp->parsed()) {
    io::write_text(std::filesystem::path(rp_dir) / "report.svg", run_report_svg(rp_dir));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sgrs::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const sgrs::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const sgrs::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
