#pragma once

// Confusion counts, the eight overlap metrics and per-image dataset reports.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "acsseg/data_model.hpp"

namespace acsseg {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricsReport {
  double recall = 0, specificity = 0, precision = 0, dice = 0;
  double iou_p = 0, iou_b = 0, miou = 0, accuracy = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

// Every ratio with a zero denominator (necessarily 0/0) is 1.
MetricsReport metrics_from_counts(const ConfusionCounts& c);

// Arithmetic mean of each metric. Throws on an empty list.
MetricsReport mean_report(const std::vector<MetricsReport>& reports);

struct ImageReport {
  std::string id;
  ConfusionCounts counts;
  MetricsReport metrics;
};

struct DatasetReport {
  std::vector<ImageReport> images;
  MetricsReport mean;
  // "id: reason" for every sample that could not be read.
  std::vector<std::string> failures;
};

// Produces the binary prediction and the reference mask for one sample.
using SamplePredictor = std::function<std::pair<BinaryMask, BinaryMask>(const Sample&)>;

// Loads every entry, evaluates it, and averages per-image metrics.
// Unreadable samples are skipped and listed; throws DataError when nothing
// could be evaluated.
DatasetReport evaluate_dataset(const DatasetManifest& manifest, const SamplePredictor& predict);

// Header id,recall,specificity,precision,dice,ioup,ioub,miou,accuracy, one row
// per image, final MEAN row, 6 decimal places.
std::string format_report_row(const std::string& id, const MetricsReport& m);
void write_report_csv(const std::filesystem::path& file, const DatasetReport& report);

}  // namespace acsseg
