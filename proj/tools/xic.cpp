#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "xic/config.hpp"
#include "xic/error.hpp"
#include "xic/eval.hpp"
#include "xic/gradcheck.hpp"
#include "xic/selfsup.hpp"
#include "xic/tracker.hpp"

namespace fs = std::filesystem;
using namespace xic;

namespace {

struct Common {
  std::string config_path;
  int threads = 0;
};

RunConfig read_config(const Common& c) {
  return c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
}

int thread_count(const Common& c) {
  if (c.threads > 0) return c.threads;
  if (const char* env = std::getenv("XIC_THREADS")) {
    const int n = std::atoi(env);
    require(n > 0, ErrorKind::InvalidConfig, "XIC_THREADS must be a positive integer");
    return n;
  }
  return 1;
}

// The original file verbatim (when one was given) plus every resolved value.
void echo_config(const Common& c, const RunConfig& cfg, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!c.config_path.empty()) {
    fs::copy_file(c.config_path, fs::path(dir) / "config.txt",
                  fs::copy_options::overwrite_existing, ec);
    require(!ec, ErrorKind::Io, "cannot copy config into " + dir);
  }
  std::ofstream os(fs::path(dir) / "resolved_config.txt");
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write into " + dir);
  os << to_text(cfg);
}

BoundingBox parse_box(const std::string& text) {
  const auto boxes = parse_groundtruth_text(text, "--init");
  require(boxes.size() == 1, ErrorKind::InvalidConfig, "--init expects x,y,w,h");
  return boxes[0];
}

std::vector<std::string> sequence_dirs(const std::string& path) {
  if (fs::is_directory(fs::path(path) / "visible")) return {path};
  return list_sequences(path);
}

int cmd_synth(const Common& c, const std::string& out) {
  RunConfig cfg = read_config(c);
  const SynthDataset ds = synth_generate(cfg.synth);
  const fs::path root(out);
  std::error_code ec;
  fs::create_directories(root, ec);
  require(!ec && fs::is_directory(root), ErrorKind::Io, "cannot create output directory " + out);
  for (const auto& s : ds.train) write_sequence(s, (root / "train").string());
  for (const auto& s : ds.test) write_sequence(s, (root / "test").string());
  echo_config(c, cfg, out);
  std::printf("wrote %zu train and %zu test sequences to %s\n", ds.train.size(), ds.test.size(),
              out.c_str());
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& out,
              const std::string& variant, bool resume, int epochs) {
  RunConfig cfg = read_config(c);
  if (!variant.empty()) cfg.training.variant = parse_variant(variant);
  if (epochs > 0) cfg.training.epochs = epochs;
  cfg.validate();
  const ModelConfig model = cfg.model_config();
  std::vector<TrainingPair> pairs;
  for (const auto& dir : sequence_dirs(data)) {
    auto p = center_crop_pairs(load_sequence(dir), cfg.crop_options());
    for (auto& x : p) pairs.push_back(std::move(x));
  }
  require(!pairs.empty(), ErrorKind::InvalidInput, "no training pairs under " + data);
  echo_config(c, cfg, out);
  std::printf("training %s on %zu pairs, %d epochs, batch %zu\n",
              to_string(cfg.training.variant).c_str(), pairs.size(), cfg.training.epochs,
              cfg.training.batch_size);
  TrainOptions opt = cfg.train_options(out, thread_count(c));
  opt.resume = resume;
  train(pairs, model, opt, [](const EpochSummary& e) {
    std::printf("epoch %3d  lr %.3e  loss %.6e  steps %zu  skipped %zu\n", e.epoch, e.lr,
                e.mean_loss, e.steps, e.skipped);
    std::fflush(stdout);
  });
  std::printf("final checkpoint: %s\n", (fs::path(out) / "final.ckpt").string().c_str());
  return 0;
}

int cmd_track(const Common& c, const std::string& checkpoint, const std::string& sequence,
              const std::string& out, const std::string& init_text) {
  RunConfig cfg = read_config(c);
  require(fs::exists(checkpoint), ErrorKind::Io, "checkpoint not found: " + checkpoint);
  const ModelParams params = load_checkpoint(checkpoint, cfg.model_config());
  std::optional<BoundingBox> init;
  if (!init_text.empty()) init = parse_box(init_text);
  const auto dirs = sequence_dirs(sequence);
  require(!dirs.empty(), ErrorKind::InvalidInput, "no sequences under " + sequence);
  double frames = 0.0, seconds = 0.0;
  for (const auto& dir : dirs) {
    const SequencePair seq = load_sequence(dir);
    const SequenceRun run = run_sequence(seq, init, params, cfg.tracker_config());
    write_trajectory(out, seq.name, run);
    frames += static_cast<double>(run.boxes.size());
    seconds += run.seconds;
    std::printf("%s: %zu frames, %.2f FPS\n", seq.name.c_str(), run.boxes.size(), run.fps);
  }
  echo_config(c, cfg, out);
  std::printf("overall: %.2f FPS (tracking only, image loading excluded)\n",
              frames / std::max(seconds, 1e-9));
  return 0;
}

int cmd_eval(const Common& c, const std::string& pred, const std::string& gt,
             std::optional<double> threshold, const std::string& out) {
  RunConfig cfg = read_config(c);
  const double px = threshold.value_or(cfg.px_threshold);
  const MetricReport rep = mpr_msr(collect_records(pred, gt), px);
  std::printf("sequences %zu  frames %zu\nMPR@%gpx %.4f\nMSR %.4f\n", rep.sequences, rep.frames,
              px, rep.mpr, rep.msr);
  if (!rep.attributes.empty()) {
    std::printf("attribute  sequences  MSR\n");
    for (const auto& a : rep.attributes)
      std::printf("%-9s  %9zu  %.4f\n", a.tag.c_str(), a.sequences, a.msr);
  }
  emit_report(rep, out.empty() ? pred : out);
  return 0;
}

int cmd_gradcheck(const GradcheckOptions& opt) {
  const GradcheckReport rep = run_gradcheck(opt);
  for (const auto& s : rep.stages)
    std::printf("%-12s max rel error %.3e over %zu values  %s\n", s.name.c_str(), s.max_rel_error,
                s.checked, s.passed ? "ok" : "FAIL");
  std::printf("%s in %.2f s\n", rep.passed() ? "passed" : "FAILED", rep.seconds);
  return rep.passed() ? 0 : 2;
}

int cmd_bench(const Common& c, const std::string& checkpoint, int frames) {
  RunConfig cfg = read_config(c);
  const ModelConfig model = cfg.model_config();
  const ModelParams params = checkpoint.empty() ? init_model(model, cfg.training.seed)
                                                : load_checkpoint(checkpoint, model);
  SynthConfig sc = cfg.synth;
  const SynthSequence seq = synth_sequence(sc, sc.seed, frames, "bench");
  LoadedFrames lf{seq.rgb, seq.t};
  const SequenceRun run = run_sequence(lf, seq.gt.front(), params, cfg.tracker_config());
  std::printf("tracked %zu frames at %zux%zu input in %.3f s: %.2f FPS (single thread)\n",
              run.boxes.size(), model.input_size, model.input_size, run.seconds, run.fps);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised RGB-T correlation-filter tracker"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "flat key = value config file");
  app.add_option("--threads", common.threads, "worker threads (default: XIC_THREADS or 1)");

  std::string out, data, variant, checkpoint, sequence, init, pred, gt;
  bool resume = false;
  int epochs = 0, bench_frames = 60;
  std::optional<double> threshold;
  GradcheckOptions gc;
  std::string gc_variant = "xic2", gc_loss = "l1";

  auto* synth = app.add_subcommand("synth", "render the synthetic RGB-T dataset");
  synth->add_option("--out", out, "output root (train/ and test/ are created)")->required();

  auto* train_cmd = app.add_subcommand("train", "self-supervised training");
  train_cmd->add_option("--data", data, "sequence root or single sequence")->required();
  train_cmd->add_option("--out", out, "checkpoint and log directory")->required();
  train_cmd->add_option("--variant", variant, "xic2 | xic3 | cycle2 | cycle3 | three-branch");
  train_cmd->add_flag("--resume", resume, "continue from the newest checkpoint in --out");
  train_cmd->add_option("--epochs", epochs, "override the configured epoch count");

  auto* track = app.add_subcommand("track", "run the tracker over sequences");
  track->add_option("--checkpoint", checkpoint, "parameter checkpoint")->required();
  track->add_option("--sequence", sequence, "sequence directory or root")->required();
  track->add_option("--out", out, "trajectory directory")->required();
  track->add_option("--init", init, "x,y,w,h initial box, overrides ground truth");

  auto* eval = app.add_subcommand("eval", "precision/success evaluation");
  eval->add_option("--pred", pred, "directory of <sequence>.txt trajectories")->required();
  eval->add_option("--gt", gt, "dataset root with ground truth")->required();
  eval->add_option("--threshold", threshold, "MPR pixel threshold (default from config, 5)");
  eval->add_option("--out", out, "report directory (default: --pred)");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--size", gc.size, "patch side");
  grad->add_option("--channels", gc.channels, "feature channels");
  grad->add_option("--batch", gc.batch, "batch size");
  grad->add_option("--lambda", gc.lambda, "filter regularizer");
  grad->add_option("--tolerance", gc.tolerance, "max relative error");
  grad->add_option("--variant", gc_variant, "training variant to differentiate");
  grad->add_option("--loss", gc_loss, "l1 | mse");
  grad->add_option("--step", gc.step, "finite-difference step");
  grad->add_flag("--inject-wrong-sign", gc.inject_wrong_sign, "test hook: negate analytic gradients");

  auto* bench = app.add_subcommand("bench", "tracker throughput on a synthetic sequence");
  bench->add_option("--checkpoint", checkpoint, "parameters (default: random init)");
  bench->add_option("--frames", bench_frames, "frames to track");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(common, out);
    if (*train_cmd) return cmd_train(common, data, out, variant, resume, epochs);
    if (*track) return cmd_track(common, checkpoint, sequence, out, init);
    if (*eval) return cmd_eval(common, pred, gt, threshold, out);
    if (*grad) {
      gc.variant = parse_variant(gc_variant);
      gc.loss_norm = parse_loss_norm(gc_loss);
      return cmd_gradcheck(gc);
    }
    if (*bench) return cmd_bench(common, checkpoint, bench_frames);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return e.kind() == ErrorKind::InvalidConfig ? 1 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
