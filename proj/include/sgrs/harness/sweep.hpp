#pragma once

// Held-out Dice as a function of the entropy threshold tau.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sgrs/harness/ablate.hpp"
#include "sgrs/harness/config.hpp"
#include "sgrs/harness/io.hpp"
#include "sgrs/harness/svg.hpp"
#include "sgrs/harness/train.hpp"

namespace sgrs {

inline std::vector<double> default_tau_grid() { return {0.05, 0.1, 0.2, 0.296, 0.4, 0.5, 0.6}; }

struct SweepPoint {
  double tau = 0.0;
  std::vector<MetricsReport> per_seed;

  Summary dice() const {
    std::vector<double> v;
    for (const auto& m : per_seed) v.push_back(m.dice);
    return summarize(v);
  }
};

// Both endpoints of [0, ln C] are accepted: tau = 0 keeps only fully
// confident pixels, tau = ln C leaves the disregarded region empty.
inline void validate_taus(const std::vector<double>& taus, std::size_t num_classes) {
  if (taus.empty()) throw ConfigError("tau sweep needs at least one value");
  const double top = std::log(static_cast<double>(num_classes));
  for (double t : taus) {
    if (!(t >= 0.0 && t <= top + 1e-12)) {
      throw ConfigError("tau " + io::num(t) + " outside [0, ln C] = [0, " + io::num(top) + "]");
    }
  }
}

inline std::string tau_dir(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "tau_%.6f", tau);
  return buf;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& pts, const std::vector<std::uint64_t>& seeds) {
  std::string s = "tau,seeds,mean_dice,std_dice";
  for (auto seed : seeds) s += ",dice_seed_" + std::to_string(seed);
  s += "\n";
  for (const auto& p : pts) {
    s += io::num(p.tau) + "," + std::to_string(p.per_seed.size()) + "," + io::num(p.dice().mean) + "," +
         io::num(p.dice().stddev);
    for (const auto& m : p.per_seed) s += "," + io::num(m.dice);
    s += "\n";
  }
  return s;
}

inline std::string sweep_svg(const std::vector<SweepPoint>& pts) {
  svg::Series curve{"mean held-out Dice", {}, {}, {}};
  for (const auto& p : pts) {
    curve.x.push_back(p.tau);
    curve.y.push_back(p.dice().mean);
    curve.error.push_back(p.dice().stddev);
  }
  return svg::line_chart("Dice vs entropy threshold", {curve}, "tau", "Dice");
}

inline std::vector<SweepPoint> sweep_tau(const RunConfig& base, std::vector<double> taus,
                                         const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out,
                                         const Progress& progress = {}) {
  if (base.variant != Variant::full) throw ConfigError("the tau sweep needs the full variant");
  if (seeds.empty()) throw ConfigError("tau sweep needs at least one seed");
  if (taus.empty()) taus = default_tau_grid();
  base.validate();
  validate_taus(taus, load_dataset(base.dataset).spec.num_classes);
  std::vector<SweepPoint> pts;
  for (double tau : taus) {
    SweepPoint p{tau, {}};
    for (auto seed : seeds) {
      auto c = base;
      c.tau = tau;
      c.seed = seed;
      c.output = (out / tau_dir(tau) / ("seed_" + std::to_string(seed))).string();
      if (progress) progress("tau " + io::num(tau) + " seed " + std::to_string(seed));
      p.per_seed.push_back(train(c).final_metrics());
    }
    pts.push_back(std::move(p));
  }
  io::ensure_dir(out);
  io::write_text(out / "tau_sweep.csv", sweep_csv(pts, seeds));
  io::write_text(out / "tau_sweep.svg", sweep_svg(pts));
  return pts;
}

}  // namespace sgrs
