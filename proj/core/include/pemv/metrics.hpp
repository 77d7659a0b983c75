#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace pemv {

// Malignant (label 1) is the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
};

ConfusionCounts count_confusion(std::span<const int> predictions, std::span<const int> labels);

// Percentages. A zero denominator reports 0 and raises the matching flag.
struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

ClassificationMetrics compute_metrics(const ConfusionCounts& counts);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

MeanStd mean_std(std::span<const double> values);

// "82.08_{±1.14}", the table-cell format used in reports.
std::string format_mean_std(const MeanStd& value);
// Fixed four-decimal rendering used in every CSV / JSON artifact.
std::string format_fixed4(double value);

}  // namespace pemv
