#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>

#include "xic/error.hpp"
#include "xic/selfsup.hpp"

namespace fs = std::filesystem;

namespace xic {

double lr_at(int epoch, int epochs, double start, double end) {
  require(epochs >= 1 && epoch >= 0 && epoch < epochs, ErrorKind::InvalidInput,
          "lr_at: epoch out of range");
  require(start > 0.0 && end > 0.0, ErrorKind::InvalidConfig, "learning rates must be positive");
  if (epoch == 0 || epochs == 1) return start;
  if (epoch == epochs - 1) return end;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return start * std::pow(end / start, t);
}

namespace {

const std::regex kCheckpointName(R"(epoch_(\d{3,})\.ckpt)");

std::string checkpoint_path(const std::string& dir, int epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
  return (fs::path(dir) / name).string();
}

// Fisher-Yates with an explicit draw so the order is the same on every
// standard library.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) + 1);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

void save_state(const std::string& path, const ModelParams& params,
                const std::vector<double>& velocity, int epoch) {
  std::vector<NamedTensor> ts = to_named(params);
  ts.push_back({"state.velocity", {velocity.size()}, velocity});
  ts.push_back({"state.epoch", {1}, {static_cast<double>(epoch)}});
  save_tensors(path, ts);
}

}  // namespace

std::string latest_checkpoint(const std::string& dir) {
  std::error_code ec;
  if (dir.empty() || !fs::is_directory(dir, ec)) return {};
  int best = -1;
  std::string best_path;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, kCheckpointName)) continue;
    const int epoch = std::stoi(m[1].str());
    if (epoch > best) {
      best = epoch;
      best_path = entry.path().string();
    }
  }
  return best_path;
}

TrainResult train(const std::vector<TrainingPair>& data, const ModelConfig& cfg,
                  const TrainOptions& opt, const EpochCallback& on_epoch) {
  cfg.validate();
  require(!data.empty(), ErrorKind::InvalidInput, "training set is empty");
  require(opt.epochs >= 1 && opt.batch_size >= 1, ErrorKind::InvalidConfig,
          "epochs and batch size must be positive");

  TrainResult result;
  result.params = init_model(cfg, opt.seed);
  std::vector<double> velocity(param_count(result.params), 0.0);
  int start_epoch = 0;

  const bool persist = !opt.out_dir.empty();
  if (persist) {
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    require(fs::is_directory(opt.out_dir), ErrorKind::Io,
            "cannot create output directory " + opt.out_dir);
  }
  if (persist && opt.resume) {
    const std::string ckpt = latest_checkpoint(opt.out_dir);
    if (!ckpt.empty()) {
      const auto tensors = load_tensors(ckpt);
      result.params = model_from_named(tensors, cfg);
      auto find = [&](const std::string& name) -> const NamedTensor& {
        for (const auto& t : tensors)
          if (t.name == name) return t;
        fail(ErrorKind::Format, ckpt + " lacks optimizer state '" + name + "'");
      };
      velocity = find("state.velocity").data;
      require(velocity.size() == param_count(result.params), ErrorKind::Format,
              ckpt + ": optimizer state does not match the model");
      start_epoch = static_cast<int>(find("state.epoch").data.at(0)) + 1;
    }
  }

  std::ofstream log;
  if (persist) {
    const auto path = fs::path(opt.out_dir) / "train_log.jsonl";
    log.open(path, (opt.resume && start_epoch > 0) ? std::ios::app : std::ios::trunc);
    require(static_cast<bool>(log), ErrorKind::Io, "cannot write " + path.string());
  }

  StepOptions step = opt.step;
  for (int epoch = start_epoch; epoch < opt.epochs; ++epoch) {
    step.sgd.lr = lr_at(epoch, opt.epochs, opt.lr_start, opt.lr_end);
    const auto order = epoch_order(data.size(), opt.seed, epoch);
    EpochSummary summary;
    summary.epoch = epoch;
    summary.lr = step.sgd.lr;
    double loss_sum = 0.0;
    std::size_t step_index = 0;
    for (std::size_t first = 0; first < order.size(); first += opt.batch_size, ++step_index) {
      const std::size_t last = std::min(order.size(), first + opt.batch_size);
      std::vector<TrainingPair> batch;
      batch.reserve(last - first);
      for (std::size_t k = first; k < last; ++k) batch.push_back(data[order[k]]);
      LossReport report;
      try {
        report = train_step(batch, result.params, velocity, cfg, step);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::TrainingDiverged) throw;
        const std::string last_good = persist ? latest_checkpoint(opt.out_dir) : std::string();
        fail(ErrorKind::TrainingDiverged,
             std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                 std::to_string(step_index) +
                 (last_good.empty() ? "" : "; last good checkpoint: " + last_good));
      }
      if (report.skipped) {
        ++summary.skipped;
      } else {
        ++summary.steps;
        loss_sum += report.final_loss;
      }
      if (persist) {
        nlohmann::json rec = {{"epoch", epoch},
                              {"step", step_index},
                              {"lr", step.sgd.lr},
                              {"loss", report.skipped ? nlohmann::json(nullptr)
                                                      : nlohmann::json(report.final_loss)},
                              {"dropped_noisy", report.weights.dropped_noisy()},
                              {"dropped_background", report.weights.dropped_background()}};
        if (report.skipped) rec["skipped"] = true;
        log << rec.dump() << '\n';
        log.flush();
      }
    }
    summary.mean_loss = summary.steps ? loss_sum / static_cast<double>(summary.steps) : 0.0;
    if (persist) save_state(checkpoint_path(opt.out_dir, epoch), result.params, velocity, epoch);
    result.epochs.push_back(summary);
    if (on_epoch) on_epoch(summary);
  }
  if (persist) save_checkpoint((fs::path(opt.out_dir) / "final.ckpt").string(), result.params);
  return result;
}

}  // namespace xic
