#include "acsseg/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "acsseg/errors.hpp"

namespace acsseg {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.values.size() != gt.values.size()) {
    throw std::invalid_argument("confusion: shape mismatch");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    const bool p = pred.values[i] != 0;
    const bool g = gt.values[i] != 0;
    c.tp += p && g;
    c.fp += p && !g;
    c.fn += !p && g;
  }
  c.tn = gt.values.size() - c.tp - c.fp - c.fn;
  return c;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  MetricsReport m;
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  m.iou_p = ratio(c.tp, c.tp + c.fp + c.fn);
  m.iou_b = ratio(c.tn, c.tn + c.fp + c.fn);
  m.miou = (m.iou_p + m.iou_b) / 2.0;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  return m;
}

MetricsReport mean_report(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("mean_report: no reports");
  MetricsReport s;
  for (const auto& r : reports) {
    s.recall += r.recall;
    s.specificity += r.specificity;
    s.precision += r.precision;
    s.dice += r.dice;
    s.iou_p += r.iou_p;
    s.iou_b += r.iou_b;
    s.miou += r.miou;
    s.accuracy += r.accuracy;
  }
  const auto n = static_cast<double>(reports.size());
  for (double* v : {&s.recall, &s.specificity, &s.precision, &s.dice, &s.iou_p, &s.iou_b, &s.miou, &s.accuracy}) {
    *v /= n;
  }
  return s;
}

DatasetReport evaluate_dataset(const DatasetManifest& manifest, const SamplePredictor& predict) {
  if (manifest.entries.empty()) throw DataError("evaluation manifest is empty");
  DatasetReport report;
  std::vector<MetricsReport> all;
  for (const auto& entry : manifest.entries) {
    Sample sample;
    try {
      sample = load_sample(entry);
    } catch (const DataError& e) {
      report.failures.push_back(entry.id + ": " + e.what());
      continue;
    }
    const auto [pred, gt] = predict(sample);
    ImageReport r{entry.id, confusion(pred, gt), {}};
    r.metrics = metrics_from_counts(r.counts);
    all.push_back(r.metrics);
    report.images.push_back(std::move(r));
  }
  if (all.empty()) throw DataError("no sample could be evaluated");
  report.mean = mean_report(all);
  return report;
}

std::string format_report_row(const std::string& id, const MetricsReport& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", m.recall, m.specificity, m.precision,
                m.dice, m.iou_p, m.iou_b, m.miou, m.accuracy);
  return id + "," + buf;
}

void write_report_csv(const std::filesystem::path& file, const DatasetReport& report) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  out << "id,recall,specificity,precision,dice,ioup,ioub,miou,accuracy\n";
  for (const auto& r : report.images) out << format_report_row(r.id, r.metrics) << '\n';
  out << format_report_row("MEAN", report.mean) << '\n';
  if (!out) throw DataError("write failed for " + file.string());
}

}  // namespace acsseg
