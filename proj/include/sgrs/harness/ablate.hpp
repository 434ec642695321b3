#pragma once

// Ablation grids: component variants, region-to-loss assignments and
// perturbation types. Every row of a grid is trained on the same seed list,
// so row differences come from the ablated setting alone.

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sgrs/harness/config.hpp"
#include "sgrs/harness/io.hpp"
#include "sgrs/harness/svg.hpp"
#include "sgrs/harness/train.hpp"

namespace sgrs {

struct AblationRow {
  std::string label;
  RunConfig config;
  bool paper_choice = false;
};

struct AblationGrid {
  std::string name;
  std::vector<AblationRow> rows;
};

inline AblationGrid variant_grid(const RunConfig& base) {
  AblationGrid g{"variants", {}};
  for (auto v : {Variant::baseline, Variant::ma, Variant::mt, Variant::ma_mt, Variant::full}) {
    auto c = base;
    c.variant = v;
    g.rows.push_back({to_string(v), c, v == Variant::full});
  }
  return g;
}

// Rows read (omega, theta, delta).
inline AblationGrid region_grid(const RunConfig& base) {
  AblationGrid g{"regions", {}};
  for (const char* spec : {"con,con,excluded", "nr,con,excluded", "nr,nr,excluded", "nr,nr,nr", "con,con,con",
                           "con,nr,excluded"}) {
    auto c = base;
    c.variant = Variant::full;
    c.region_losses = RegionAssignment::parse(spec);
    g.rows.push_back({spec, c, c.region_losses == RegionAssignment{}});
  }
  return g;
}

inline AblationGrid augmentation_grid(const RunConfig& base) {
  AblationGrid g{"augmentation", {}};
  for (auto a : {Augmentation::flip_h, Augmentation::flip_v, Augmentation::ma}) {
    auto c = base;
    c.variant = Variant::full;
    c.augmentation = a;
    g.rows.push_back({to_string(a), c, a == Augmentation::ma});
  }
  return g;
}

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
};

inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct RowResult {
  std::string label;
  bool paper_choice = false;
  std::vector<MetricsReport> per_seed;

  Summary dice() const {
    std::vector<double> v;
    for (const auto& m : per_seed) v.push_back(m.dice);
    return summarize(v);
  }
  Summary field(double MetricsReport::*f) const {
    std::vector<double> v;
    for (const auto& m : per_seed) v.push_back(m.*f);
    return summarize(v);
  }
};

struct GridResult {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<RowResult> rows;
};

using Progress = std::function<void(const std::string&)>;

inline std::string dir_label(const std::string& label) {
  std::string s;
  for (char c : label) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : (c == '+' ? 'p' : '-');
  return s;
}

inline GridResult run_grid(const AblationGrid& grid, const std::vector<std::uint64_t>& seeds,
                           const std::filesystem::path& out, const Progress& progress = {}) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  for (const auto& row : grid.rows) row.config.validate();
  GridResult res{grid.name, seeds, {}};
  for (const auto& row : grid.rows) {
    RowResult r{row.label, row.paper_choice, {}};
    for (auto seed : seeds) {
      auto c = row.config;
      c.seed = seed;
      c.output = (out / grid.name / dir_label(row.label) / ("seed_" + std::to_string(seed))).string();
      if (progress) progress(grid.name + " " + row.label + " seed " + std::to_string(seed));
      r.per_seed.push_back(train(c).final_metrics());
    }
    res.rows.push_back(std::move(r));
  }
  return res;
}

inline std::string grid_csv(const GridResult& g) {
  std::string s = "grid,row,paper_choice,seeds,mean_dice,std_dice,mean_jaccard,mean_hd95,mean_asd";
  for (auto seed : g.seeds) s += ",dice_seed_" + std::to_string(seed);
  s += "\n";
  for (const auto& r : g.rows) {
    s += g.name + ",\"" + r.label + "\"," + (r.paper_choice ? "1" : "0") + "," + std::to_string(r.per_seed.size()) +
         "," + io::num(r.dice().mean) + "," + io::num(r.dice().stddev) + "," +
         io::num(r.field(&MetricsReport::jaccard).mean) + "," + io::num(r.field(&MetricsReport::hd95).mean) + "," +
         io::num(r.field(&MetricsReport::asd).mean);
    for (const auto& m : r.per_seed) s += "," + io::num(m.dice);
    s += "\n";
  }
  return s;
}

inline std::string grid_svg(const GridResult& g) {
  std::vector<svg::Bar> bars;
  for (const auto& r : g.rows) bars.push_back({r.label, r.dice().mean, r.dice().stddev, r.paper_choice});
  return svg::bar_chart("ablation: " + g.name + " (mean held-out Dice, " + std::to_string(g.seeds.size()) + " seeds)",
                        bars, "Dice");
}

inline void write_grid(const GridResult& g, const std::filesystem::path& out) {
  io::ensure_dir(out);
  io::write_text(out / (g.name + ".csv"), grid_csv(g));
  io::write_text(out / (g.name + ".svg"), grid_svg(g));
}

// All three grids, or the named subset.
inline std::vector<GridResult> ablate(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                      const std::filesystem::path& out, std::vector<std::string> grids = {},
                                      const Progress& progress = {}) {
  if (grids.empty()) grids = {"variants", "regions", "augmentation"};
  std::vector<AblationGrid> plan;
  for (const auto& name : grids) {
    if (name == "variants") plan.push_back(variant_grid(base));
    else if (name == "regions") plan.push_back(region_grid(base));
    else if (name == "augmentation") plan.push_back(augmentation_grid(base));
    else throw ConfigError("unknown ablation grid " + name);
  }
  std::vector<GridResult> out_results;
  for (const auto& g : plan) {
    out_results.push_back(run_grid(g, seeds, out, progress));
    write_grid(out_results.back(), out);
  }
  return out_results;
}

}  // namespace sgrs
