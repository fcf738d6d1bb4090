#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "xic/error.hpp"
#include "xic/eval.hpp"

namespace fs = std::filesystem;

namespace xic {

double center_error(const BoundingBox& a, const BoundingBox& b) {
  return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<double> precision_thresholds() {
  std::vector<double> t(51);
  for (int i = 0; i <= 50; ++i) t[i] = static_cast<double>(i);
  return t;
}

std::vector<double> success_thresholds() {
  std::vector<double> t(101);
  for (int i = 0; i <= 100; ++i) t[i] = static_cast<double>(i) / 100.0;
  return t;
}

namespace {

struct FrameScores {
  std::vector<double> errors;
  std::vector<double> overlaps;
};

FrameScores score_record(const EvalRecord& r) {
  require(!r.ground_truth.empty(), ErrorKind::InvalidInput,
          "sequence " + r.name + " has no ground truth");
  for (const auto& gt : r.ground_truth)
    require(gt.size() == r.predicted.size(), ErrorKind::InvalidInput,
            "sequence " + r.name + ": " + std::to_string(r.predicted.size()) +
                " predictions vs " + std::to_string(gt.size()) + " ground-truth boxes");
  FrameScores s;
  for (std::size_t f = 0; f < r.predicted.size(); ++f) {
    double best_err = std::numeric_limits<double>::infinity();
    double best_iou = -1.0;
    for (const auto& gt : r.ground_truth) {
      if (!gt[f].valid()) continue;
      best_err = std::min(best_err, center_error(r.predicted[f], gt[f]));
      best_iou = std::max(best_iou, iou(r.predicted[f], gt[f]));
    }
    if (best_iou < 0.0) continue;
    s.errors.push_back(best_err);
    s.overlaps.push_back(best_iou);
  }
  return s;
}

double fraction(const std::vector<double>& v, auto pred) {
  std::size_t k = 0;
  for (double x : v) k += pred(x) ? 1 : 0;
  return static_cast<double>(k) / static_cast<double>(v.size());
}

MetricReport overall(const std::vector<EvalRecord>& records, double px_threshold) {
  require(!records.empty(), ErrorKind::InvalidInput, "no sequences to evaluate");
  require(px_threshold >= 0.0, ErrorKind::InvalidInput, "pixel threshold must be non-negative");
  MetricReport rep;
  rep.px_threshold = px_threshold;
  const auto pt = precision_thresholds();
  const auto st = success_thresholds();
  rep.precision.assign(pt.size(), 0.0);
  rep.success.assign(st.size(), 0.0);
  for (const auto& r : records) {
    const FrameScores s = score_record(r);
    if (s.errors.empty()) continue;
    ++rep.sequences;
    rep.frames += s.errors.size();
    rep.mpr += fraction(s.errors, [&](double e) { return e <= px_threshold; });
    for (std::size_t i = 0; i < pt.size(); ++i)
      rep.precision[i] += fraction(s.errors, [&](double e) { return e <= pt[i]; });
    for (std::size_t i = 0; i < st.size(); ++i)
      rep.success[i] += fraction(s.overlaps, [&](double o) { return o > st[i]; });
  }
  require(rep.sequences > 0, ErrorKind::InvalidInput, "no frame has a valid ground-truth box");
  const double inv = 1.0 / static_cast<double>(rep.sequences);
  rep.mpr *= inv;
  for (double& v : rep.precision) v *= inv;
  double sum = 0.0;
  for (double& v : rep.success) {
    v *= inv;
    sum += v;
  }
  rep.msr = sum / static_cast<double>(rep.success.size());
  return rep;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
  os << text;
  require(static_cast<bool>(os), ErrorKind::Io, "failed writing " + path.string());
}

std::string csv(const std::vector<double>& x, const std::vector<double>& y, const char* header) {
  std::string out = std::string(header) + "\n";
  char line[96];
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.17g,%.17g\n", x[i], y[i]);
    out += line;
  }
  return out;
}

}  // namespace

std::vector<AttributeRow> attribute_report(const std::vector<EvalRecord>& records,
                                           double px_threshold) {
  std::map<std::string, std::vector<EvalRecord>> by_tag;
  for (const auto& r : records)
    for (const auto& tag : r.attributes)
      if (!tag.empty()) by_tag[tag].push_back(r);
  std::vector<AttributeRow> rows;
  for (const auto& [tag, subset] : by_tag)
    rows.push_back({tag, overall(subset, px_threshold).msr, subset.size()});
  return rows;
}

MetricReport mpr_msr(const std::vector<EvalRecord>& records, double px_threshold) {
  MetricReport rep = overall(records, px_threshold);
  rep.attributes = attribute_report(records, px_threshold);
  return rep;
}

void emit_report(const MetricReport& report, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(fs::is_directory(dir), ErrorKind::Io, "cannot create report directory " + dir);
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : report.attributes)
    attrs.push_back({{"tag", a.tag}, {"msr", a.msr}, {"sequences", a.sequences}});
  nlohmann::json j = {{"px_threshold", report.px_threshold},
                      {"mpr", report.mpr},
                      {"msr", report.msr},
                      {"sequences", report.sequences},
                      {"frames", report.frames},
                      {"precision_thresholds", precision_thresholds()},
                      {"precision", report.precision},
                      {"success_thresholds", success_thresholds()},
                      {"success", report.success},
                      {"attributes", attrs}};
  write_text(fs::path(dir) / "metrics.json", j.dump(2) + "\n");
  write_text(fs::path(dir) / "precision.csv",
             csv(precision_thresholds(), report.precision, "threshold_px,precision"));
  write_text(fs::path(dir) / "success.csv",
             csv(success_thresholds(), report.success, "threshold_iou,success"));
}

MetricReport load_report(const std::string& dir) {
  const fs::path path = fs::path(dir) / "metrics.json";
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
    MetricReport rep;
    rep.px_threshold = j.at("px_threshold").get<double>();
    rep.mpr = j.at("mpr").get<double>();
    rep.msr = j.at("msr").get<double>();
    rep.sequences = j.at("sequences").get<std::size_t>();
    rep.frames = j.at("frames").get<std::size_t>();
    rep.precision = j.at("precision").get<std::vector<double>>();
    rep.success = j.at("success").get<std::vector<double>>();
    for (const auto& a : j.at("attributes"))
      rep.attributes.push_back({a.at("tag").get<std::string>(), a.at("msr").get<double>(),
                                a.at("sequences").get<std::size_t>()});
    return rep;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

std::vector<EvalRecord> collect_records(const std::string& pred_dir, const std::string& gt_root) {
  require(fs::is_directory(pred_dir), ErrorKind::Io, "prediction directory " + pred_dir + " not found");
  const auto dirs = list_sequences(gt_root);
  require(!dirs.empty(), ErrorKind::InvalidInput, "no sequences under " + gt_root);
  std::vector<EvalRecord> records;
  std::vector<std::string> missing;
  for (const auto& d : dirs) {
    const SequencePair seq = load_sequence(d);
    const fs::path pred = fs::path(pred_dir) / (seq.name + ".txt");
    if (!fs::exists(pred)) {
      missing.push_back(seq.name);
      continue;
    }
    EvalRecord r;
    r.name = seq.name;
    r.predicted = parse_groundtruth(pred.string());
    if (seq.gt_rgb) r.ground_truth.push_back(*seq.gt_rgb);
    if (seq.gt_t) r.ground_truth.push_back(*seq.gt_t);
    require(!r.ground_truth.empty(), ErrorKind::InvalidInput,
            "sequence " + seq.name + " has no ground-truth file");
    r.attributes = seq.attributes;
    records.push_back(std::move(r));
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "missing predictions for " << missing.size() << " sequence(s):";
    for (const auto& m : missing) msg << ' ' << m;
    fail(ErrorKind::InvalidInput, msg.str());
  }
  return records;
}

}  // namespace xic
