#pragma once

// Held-out evaluation of a network: argmax masks against ground truth,
// scored as foreground (class > 0) vs background.

#include <filesystem>
#include <string>
#include <vector>

#include "sgrs/datagen.hpp"
#include "sgrs/harness/checkpoint.hpp"
#include "sgrs/harness/io.hpp"
#include "sgrs/metrics.hpp"
#include "sgrs/netzoo.hpp"

namespace sgrs {

struct EvalRow {
  std::size_t id = 0;
  MetricsReport report;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  MetricsReport mean;  // note holds the count of images with an empty mask
};

inline const std::vector<std::size_t>& split_ids(const Dataset& ds, const std::string& split) {
  if (split == "test") return ds.test_ids;
  if (split == "train") return ds.train_ids;
  throw ConfigError("evaluation split must be test or train; got " + split);
}

inline Mask foreground(const LabelMap& labels, std::size_t n) {
  const std::size_t h = labels.dim(1), w = labels.dim(2);
  Mask m(Dims{h, w});
  for (std::size_t i = 0; i < h * w; ++i) m[i] = labels[n * h * w + i] > 0;
  return m;
}

inline Mask foreground(const Mask& labels) {
  Mask m(labels.dims());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = labels[i] > 0;
  return m;
}

template <class T>
LabelMap predict_labels(const NetworkParams<T>& net, const Dataset& ds, const std::vector<std::size_t>& ids) {
  return argmax_channel(predict_logits(net, stack_images<T>(ds, ids)));
}

template <class T>
EvalResult evaluate_params(const NetworkParams<T>& net, const Dataset& ds, const std::vector<std::size_t>& ids,
                           std::size_t chunk = 10) {
  if (ids.empty()) throw ConfigError("evaluation split is empty");
  EvalResult out;
  std::size_t empties = 0;
  for (std::size_t start = 0; start < ids.size(); start += chunk) {
    const std::vector<std::size_t> part(ids.begin() + start, ids.begin() + std::min(ids.size(), start + chunk));
    const auto pred = predict_labels(net, ds, part);
    for (std::size_t i = 0; i < part.size(); ++i) {
      auto r = evaluate_pair(foreground(pred, i), foreground(ds.samples.at(part[i]).mask));
      empties += !r.note.empty();
      out.rows.push_back({part[i], std::move(r)});
    }
  }
  const double n = static_cast<double>(out.rows.size());
  for (const auto& row : out.rows) {
    out.mean.dice += row.report.dice / n;
    out.mean.jaccard += row.report.jaccard / n;
    out.mean.hd95 += row.report.hd95 / n;
    out.mean.asd += row.report.asd / n;
  }
  out.mean.note = empties ? std::to_string(empties) + " empty" : "";
  return out;
}

inline const char* kEvalHeader = "step,image,dice,jaccard,hd95,asd,note\n";

inline std::string eval_csv_rows(std::size_t step, const EvalResult& r) {
  std::string s;
  auto line = [&](const std::string& image, const MetricsReport& m) {
    s += std::to_string(step) + "," + image + "," + io::num(m.dice) + "," + io::num(m.jaccard) + "," +
         io::num(m.hd95) + "," + io::num(m.asd) + "," + m.note + "\n";
  };
  for (const auto& row : r.rows) line(sample_name(row.id), row.report);
  line("mean", r.mean);
  return s;
}

// Student network of a checkpoint against one split of a dataset directory.
inline EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                                      const std::string& split, const std::filesystem::path& csv_out = {}) {
  const auto ck = load_checkpoint(checkpoint);
  const auto ds = load_dataset(dataset);
  auto result = evaluate_params(ck.state.student, ds, split_ids(ds, split));
  if (!csv_out.empty()) io::write_text(csv_out, kEvalHeader + eval_csv_rows(ck.step, result));
  return result;
}

}  // namespace sgrs
