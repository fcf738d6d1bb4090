#pragma once

// Precision/success evaluation. Each frame is scored against every available
// ground truth and keeps its best match; curves are averaged over sequences.

#include <string>
#include <vector>

#include "xic/data.hpp"

namespace xic {

double center_error(const BoundingBox& a, const BoundingBox& b);
double iou(const BoundingBox& a, const BoundingBox& b);

struct EvalRecord {
  std::string name;
  std::vector<BoundingBox> predicted;
  std::vector<std::vector<BoundingBox>> ground_truth;  // one list per modality
  std::vector<std::string> attributes;
};

struct AttributeRow {
  std::string tag;
  double msr = 0.0;
  std::size_t sequences = 0;

  bool operator==(const AttributeRow&) const = default;
};

struct MetricReport {
  double px_threshold = 5.0;
  double mpr = 0.0;
  double msr = 0.0;
  std::vector<double> precision;  // thresholds 0..50 px, step 1
  std::vector<double> success;    // IoU thresholds 0..1, step 0.01
  std::vector<AttributeRow> attributes;
  std::size_t sequences = 0;
  std::size_t frames = 0;

  bool operator==(const MetricReport&) const = default;
};

std::vector<double> precision_thresholds();
std::vector<double> success_thresholds();

// Frames whose ground truths are all invalid (non-positive size) are skipped.
MetricReport mpr_msr(const std::vector<EvalRecord>& records, double px_threshold);

// MSR over the sequences carrying each tag; absent tags are omitted.
std::vector<AttributeRow> attribute_report(const std::vector<EvalRecord>& records,
                                           double px_threshold);

// Writes metrics.json, precision.csv and success.csv into `dir`.
void emit_report(const MetricReport& report, const std::string& dir);
MetricReport load_report(const std::string& dir);

// Pairs trajectory files in `pred_dir` with sequences under `gt_root`.
// Missing predictions raise an error listing every missing sequence.
std::vector<EvalRecord> collect_records(const std::string& pred_dir, const std::string& gt_root);

}  // namespace xic
