#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>

#include "leafwood/cloud.hpp"

namespace leafwood {

/// Binary confusion counts with wood as the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const ClassLabel> pred, std::span<const ClassLabel> truth);

/// (TP + TN) / total. Throws ContractError on an empty matrix.
double overall_accuracy(const ConfusionMatrix& c);

/// IoU of wood, IoU of leaf. A class with a zero denominator (absent from
/// both prediction and truth) scores 1.
std::pair<double, double> iou_per_class(const ConfusionMatrix& c);

double mean_iou(std::span<const double> ious);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero denominators yield 0 for the affected value.
PrecisionRecallF1 precision_recall_f1(const ConfusionMatrix& c);

/// Sensitivity is computed by the same expression as recall and is
/// bit-identical to it.
std::pair<double, double> sensitivity_specificity(const ConfusionMatrix& c);

struct MetricsReport {
  ConfusionMatrix counts;
  double oa = 0.0;
  double iou_wood = 0.0;
  double iou_leaf = 0.0;
  double miou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

MetricsReport evaluate(std::span<const ClassLabel> pred, std::span<const ClassLabel> truth);
MetricsReport evaluate(const LabeledCloud& pred, const LabeledCloud& truth);

/// Processing time normalized to seconds per million points.
double tpmp(std::uint64_t total_points, double wall_seconds);

struct TimingRecord {
  std::uint64_t total_points = 0;
  double wall_seconds = 0.0;
  double tpmp = 0.0;
};

TimingRecord make_timing(std::uint64_t total_points, double wall_seconds);

/// key=value lines, one per field.
void write_key_values(std::ostream& os, const MetricsReport& r);
void write_key_values(std::ostream& os, const TimingRecord& t);

/// One JSON object per report; see README for the schema.
std::string to_json(const MetricsReport& r, const std::string& tree_name);

}  // namespace leafwood
