#include "leafwood/evaluation.hpp"

#include <iomanip>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "leafwood/errors.hpp"

namespace leafwood {

namespace {

double ratio_or_zero(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double true_positive_rate(const ConfusionMatrix& c) { return ratio_or_zero(c.tp, c.tp + c.fn); }

}  // namespace

ConfusionMatrix confusion(std::span<const ClassLabel> pred, std::span<const ClassLabel> truth) {
  if (pred.size() != truth.size()) {
    throw ContractError("prediction has " + std::to_string(pred.size()) +
                        " labels but truth has " + std::to_string(truth.size()));
  }
  if (pred.empty()) throw ContractError("cannot evaluate zero points");
  ConfusionMatrix c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == ClassLabel::wood;
    const bool t = truth[i] == ClassLabel::wood;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

double overall_accuracy(const ConfusionMatrix& c) {
  if (c.total() == 0) throw ContractError("overall accuracy of an empty confusion matrix");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

std::pair<double, double> iou_per_class(const ConfusionMatrix& c) {
  const std::uint64_t wood_den = c.tp + c.fp + c.fn;
  const std::uint64_t leaf_den = c.tn + c.fn + c.fp;
  const double wood = wood_den == 0 ? 1.0 : ratio_or_zero(c.tp, wood_den);
  const double leaf = leaf_den == 0 ? 1.0 : ratio_or_zero(c.tn, leaf_den);
  return {wood, leaf};
}

double mean_iou(std::span<const double> ious) {
  if (ious.empty()) throw ContractError("mean IoU over zero classes");
  return std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(ious.size());
}

PrecisionRecallF1 precision_recall_f1(const ConfusionMatrix& c) {
  PrecisionRecallF1 r;
  r.precision = ratio_or_zero(c.tp, c.tp + c.fp);
  r.recall = true_positive_rate(c);
  const double s = r.precision + r.recall;
  r.f1 = s > 0.0 ? 2.0 * (r.precision * r.recall) / s : 0.0;
  return r;
}

std::pair<double, double> sensitivity_specificity(const ConfusionMatrix& c) {
  return {true_positive_rate(c), ratio_or_zero(c.tn, c.tn + c.fp)};
}

MetricsReport evaluate(std::span<const ClassLabel> pred, std::span<const ClassLabel> truth) {
  MetricsReport r;
  r.counts = confusion(pred, truth);
  r.oa = overall_accuracy(r.counts);
  std::tie(r.iou_wood, r.iou_leaf) = iou_per_class(r.counts);
  const double ious[] = {r.iou_wood, r.iou_leaf};
  r.miou = mean_iou(ious);
  const auto prf = precision_recall_f1(r.counts);
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.f1 = prf.f1;
  std::tie(r.sensitivity, r.specificity) = sensitivity_specificity(r.counts);
  return r;
}

MetricsReport evaluate(const LabeledCloud& pred, const LabeledCloud& truth) {
  if (pred.size() != truth.size()) {
    throw ContractError("prediction has " + std::to_string(pred.size()) +
                        " points but truth has " + std::to_string(truth.size()));
  }
  return evaluate(pred.labels(), truth.labels());
}

double tpmp(std::uint64_t total_points, double wall_seconds) {
  if (total_points == 0) throw ContractError("TPMP of zero points");
  if (!(wall_seconds >= 0.0)) throw ContractError("wall time must be non-negative");
  return wall_seconds * 1e6 / static_cast<double>(total_points);
}

TimingRecord make_timing(std::uint64_t total_points, double wall_seconds) {
  return {total_points, wall_seconds, tpmp(total_points, wall_seconds)};
}

void write_key_values(std::ostream& os, const MetricsReport& r) {
  const auto old = os.precision(17);
  os << "tp=" << r.counts.tp << '\n'
     << "tn=" << r.counts.tn << '\n'
     << "fp=" << r.counts.fp << '\n'
     << "fn=" << r.counts.fn << '\n'
     << "oa=" << r.oa << '\n'
     << "iou_wood=" << r.iou_wood << '\n'
     << "iou_leaf=" << r.iou_leaf << '\n'
     << "miou=" << r.miou << '\n'
     << "precision=" << r.precision << '\n'
     << "recall=" << r.recall << '\n'
     << "f1=" << r.f1 << '\n'
     << "sensitivity=" << r.sensitivity << '\n'
     << "specificity=" << r.specificity << '\n';
  os.precision(old);
}

void write_key_values(std::ostream& os, const TimingRecord& t) {
  const auto old = os.precision(17);
  os << "total_points=" << t.total_points << '\n'
     << "wall_seconds=" << t.wall_seconds << '\n'
     << "tpmp=" << t.tpmp << '\n';
  os.precision(old);
}

std::string to_json(const MetricsReport& r, const std::string& tree_name) {
  nlohmann::json j = {
      {"tree", tree_name},
      {"counts", {{"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp}, {"fn", r.counts.fn}}},
      {"oa", r.oa},
      {"iou", {{"wood", r.iou_wood}, {"leaf", r.iou_leaf}}},
      {"miou", r.miou},
      {"precision", r.precision},
      {"recall", r.recall},
      {"f1", r.f1},
      {"sensitivity", r.sensitivity},
      {"specificity", r.specificity},
  };
  return j.dump(2);
}

}  // namespace leafwood
