#include <doctest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "xic/eval.hpp"

using namespace xic;
namespace fs = std::filesystem;

namespace {

EvalRecord shifted_record(const std::string& name, const std::vector<double>& dx) {
  EvalRecord r;
  r.name = name;
  r.ground_truth.emplace_back();
  for (double d : dx) {
    r.ground_truth[0].push_back({20, 20, 10, 10});
    r.predicted.push_back({20 + d, 20, 10, 10});
  }
  return r;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("center error and overlap of simple boxes") {
  CHECK(center_error({0, 0, 2, 2}, {3, 4, 2, 2}) == doctest::Approx(5.0));
  CHECK(center_error({0, 0, 2, 2}, {-1, -1, 4, 4}) == 0.0);
  CHECK(iou({0, 0, 2, 2}, {1, 0, 2, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
  CHECK(iou({0, 0, 2, 2}, {5, 5, 2, 2}) == 0.0);
  CHECK(iou({0, 0, 4, 4}, {1, 1, 2, 2}) == doctest::Approx(0.25));
  CHECK(iou({0, 0, 0, 0}, {0, 0, 0, 0}) == 0.0);
}

TEST_CASE("threshold grids") {
  const auto p = precision_thresholds();
  const auto s = success_thresholds();
  REQUIRE(p.size() == 51);
  REQUIRE(s.size() == 101);
  CHECK(p.back() == 50.0);
  CHECK(s[37] == doctest::Approx(0.37));
  CHECK(s.back() == 1.0);
}

TEST_CASE("perfect tracking") {
  const MetricReport rep = mpr_msr({shifted_record("a", std::vector<double>(20, 0.0))}, 5.0);
  CHECK(rep.mpr == 1.0);
  // An overlap of exactly 1 clears every threshold except 1 itself.
  CHECK(rep.msr == doctest::Approx(100.0 / 101.0));
  CHECK(rep.frames == 20);
  CHECK(rep.sequences == 1);
  for (double v : rep.precision) CHECK(v == 1.0);
}

TEST_CASE("disjoint predictions score zero") {
  const MetricReport rep = mpr_msr({shifted_record("a", std::vector<double>(5, 30.0))}, 5.0);
  CHECK(rep.mpr == 0.0);
  CHECK(rep.msr == 0.0);
  CHECK(rep.precision[30] == 1.0);
  CHECK(rep.precision[29] == 0.0);
}

TEST_CASE("hand-computed ten-frame sequence") {
  // Shift d of a 10x10 box: error d, overlap (10-d)/(10+d).
  std::vector<double> dx{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const MetricReport rep = mpr_msr({shifted_record("h", dx)}, 5.0);
  CHECK(rep.mpr == doctest::Approx(0.6));
  CHECK(rep.precision[0] == doctest::Approx(0.1));
  CHECK(rep.precision[9] == 1.0);
  // Thresholds strictly below each overlap: 100 82 67 54 43 34 25 18 12 6.
  CHECK(rep.msr == doctest::Approx(441.0 / 1010.0));
  CHECK(rep.success[25] == doctest::Approx(0.6));
  CHECK(mpr_msr({shifted_record("h", dx)}, 20.0).mpr == 1.0);
}

TEST_CASE("curves are monotone") {
  std::vector<double> dx;
  for (int i = 0; i < 40; ++i) dx.push_back(xt::uniform(-12.0, 12.0));
  const MetricReport rep = mpr_msr({shifted_record("m", dx)}, 5.0);
  for (std::size_t i = 1; i < rep.precision.size(); ++i)
    CHECK(rep.precision[i] >= rep.precision[i - 1]);
  for (std::size_t i = 1; i < rep.success.size(); ++i) CHECK(rep.success[i] <= rep.success[i - 1]);
}

TEST_CASE("curves average over sequences, not frames") {
  const EvalRecord good = shifted_record("g", std::vector<double>(2, 0.0));
  const EvalRecord bad = shifted_record("b", std::vector<double>(8, 30.0));
  const MetricReport rep = mpr_msr({good, bad}, 5.0);
  CHECK(rep.mpr == doctest::Approx(0.5));
  CHECK(rep.frames == 10);
}

TEST_CASE("each frame keeps its best ground truth") {
  EvalRecord r = shifted_record("two", {0, 0, 0});
  // Visible ground truth is far off; the thermal one matches.
  r.ground_truth.insert(r.ground_truth.begin(), std::vector<BoundingBox>(3, {80, 80, 10, 10}));
  CHECK(mpr_msr({r}, 5.0).mpr == 1.0);

  EvalRecord thermal_only = shifted_record("t", {0, 0});
  CHECK(mpr_msr({thermal_only}, 5.0).mpr == 1.0);
}

TEST_CASE("frames without a valid ground truth are skipped") {
  EvalRecord r = shifted_record("s", {0, 30, 0});
  r.ground_truth[0][1] = {0, 0, 0, 0};
  const MetricReport rep = mpr_msr({r}, 5.0);
  CHECK(rep.frames == 2);
  CHECK(rep.mpr == 1.0);
}

TEST_CASE("evaluation input errors") {
  CHECK_THROWS_AS(mpr_msr({}, 5.0), Error);
  EvalRecord r = shifted_record("x", {0, 0});
  r.predicted.pop_back();
  CHECK_THROWS_AS(mpr_msr({r}, 5.0), Error);
  CHECK_THROWS_AS(mpr_msr({shifted_record("y", {0})}, -1.0), Error);
}

TEST_CASE("attribute subsets") {
  EvalRecord a = shifted_record("a", {0, 0});
  a.attributes = {"OCC", "FM"};
  EvalRecord b = shifted_record("b", {30, 30});
  b.attributes = {"OCC"};
  const auto rows = attribute_report({a, b}, 5.0);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].tag == "FM");
  CHECK(rows[0].sequences == 1);
  CHECK(rows[0].msr == doctest::Approx(100.0 / 101.0));
  CHECK(rows[1].tag == "OCC");
  CHECK(rows[1].sequences == 2);
  CHECK(rows[1].msr == doctest::Approx(50.0 / 101.0));
}

TEST_CASE("report files roundtrip") {
  EvalRecord a = shifted_record("a", {0, 1, 2, 7});
  a.attributes = {"LI"};
  const MetricReport rep = mpr_msr({a}, 5.0);
  const fs::path dir = xt::scratch_dir("report");
  emit_report(rep, dir.string());
  CHECK(load_report(dir.string()) == rep);
  CHECK(count_lines(dir / "precision.csv") == 52);
  CHECK(count_lines(dir / "success.csv") == 102);
  std::ifstream is(dir / "precision.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "threshold_px,precision");
}

TEST_CASE("collect_records pairs trajectories with sequences") {
  const fs::path root = xt::scratch_dir("collect");
  for (const char* name : {"s1", "s2"}) {
    fs::create_directories(root / "gt" / name / "visible");
    fs::create_directories(root / "gt" / name / "infrared");
    write_png((root / "gt" / name / "visible" / "000001.png").string(), Image(3, 8, 8));
    write_png((root / "gt" / name / "infrared" / "000001.png").string(), Image(1, 8, 8));
    std::ofstream(root / "gt" / name / "groundtruth_visible.txt") << "1,1,5,5\n";
  }
  fs::create_directories(root / "pred");
  std::ofstream(root / "pred" / "s1.txt") << "1,1,5,5\n";
  try {
    collect_records((root / "pred").string(), (root / "gt").string());
    FAIL("expected missing predictions");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("s2") != std::string::npos);
  }
  std::ofstream(root / "pred" / "s2.txt") << "2,1,5,5\n";
  const auto recs = collect_records((root / "pred").string(), (root / "gt").string());
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].predicted[0] == BoundingBox{2, 1, 5, 5});
}
