#pragma once

// Cross-input consistency training: the consistency loss, sample-quality
// re-weighting, per-sample forward/backward for every training variant, the
// batched SGD step and the epoch loop with checkpoints and a JSONL log.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xic/data.hpp"
#include "xic/dcf.hpp"
#include "xic/features.hpp"

namespace xic {

struct ConsistencyResult {
  double value = 0.0;
  RealPlane grad_a;
  RealPlane grad_b;
};

// L1: mean |a-b| (subgradient 0 at ties). Mse: mean (a-b)^2.
ConsistencyResult consistency_loss(const RealPlane& a, const RealPlane& b, LossNorm norm);

// Squared L2 distance over all pixels and channels, divided by H*W only.
double sample_difference(const Patch& template_patch, const Patch& search_patch);

struct DropMasks {
  std::vector<int> noisy;       // 0 = dropped as noisy (largest differences)
  std::vector<int> background;  // 0 = dropped as background (smallest differences)
};

DropMasks compute_drop_masks(std::span<const double> d, double noisy_frac = 0.10,
                             double bg_frac = 0.25);

// Survivors get 1/k each; throws a degenerate-batch error when k = 0.
std::vector<double> normalize_weights(std::span<const int> noisy_mask,
                                      std::span<const int> background_mask);

// (1/n) * sum_i d_norm[i] * losses[i]
double weighted_loss(std::span<const double> per_sample, std::span<const double> d_norm);

struct SampleWeights {
  std::vector<double> d;
  std::vector<int> noisy_mask;
  std::vector<int> background_mask;
  std::vector<double> d_norm;  // empty when no sample survives

  std::size_t dropped_noisy() const;
  std::size_t dropped_background() const;
  bool degenerate() const { return d_norm.empty(); }
};

SampleWeights compute_sample_weights(std::span<const double> d, double noisy_frac = 0.10,
                                     double bg_frac = 0.25);

enum class Objective { CrossInput, Cycle };

enum class Variant { Xic2, Xic3, Cycle2, Cycle3, ThreeBranch };
std::string to_string(Variant v);
Variant parse_variant(const std::string& text);
Objective objective_of(Variant v);
// Applies the variant's branch count and sequence length to `base`.
ModelConfig apply_variant(Variant v, ModelConfig base);

struct DcfOptions {
  double lambda = 1e-4;
  double sigma_divisor = 12.5;  // label sigma = patch side / divisor
};

RealPlane pseudo_label(const TrainingPair& pair, std::size_t size, const DcfOptions& dcf);

struct LossTerm {
  std::string name;
  double value = 0.0;
};

struct SampleResult {
  double loss = 0.0;
  std::vector<LossTerm> terms;
  std::optional<ModelParams> grad;  // gradient of `loss`, when requested
};

struct StepOptions {
  Objective objective = Objective::CrossInput;
  DcfOptions dcf;
  SgdOptions sgd;
  double noisy_frac = 0.10;
  double bg_frac = 0.25;
  bool reweight = true;  // false: every sample weighted 1/n
  int threads = 1;
};

// Number of tracking hops the objective runs per branch.
std::size_t hop_count(Objective objective, int sequence_length);

SampleResult sample_loss(const TrainingPair& pair, const ModelParams& params,
                         const ModelConfig& cfg, const StepOptions& opt, bool need_grad);

struct LossReport {
  std::vector<double> per_sample_losses;
  double final_loss = 0.0;
  std::vector<LossTerm> terms;  // each weighted like final_loss; they sum to it
  SampleWeights weights;
  bool skipped = false;  // degenerate batch, no update
};

// Loss report and gradient of the final loss for one batch.
LossReport batch_loss(std::span<const TrainingPair> batch, const ModelParams& params,
                      const ModelConfig& cfg, const StepOptions& opt, ModelParams* grad);

LossReport train_step(std::span<const TrainingPair> batch, ModelParams& params,
                      std::vector<double>& velocity, const ModelConfig& cfg,
                      const StepOptions& opt);

// Geometric interpolation: epoch 0 -> start, epoch (epochs-1) -> end.
double lr_at(int epoch, int epochs, double start, double end);

struct TrainOptions {
  int epochs = 30;
  std::size_t batch_size = 32;
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  std::uint64_t seed = 1;
  StepOptions step;
  std::string out_dir;  // empty: no checkpoints or log
  bool resume = false;
};

struct EpochSummary {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  std::size_t steps = 0;
  std::size_t skipped = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochSummary> epochs;
};

using EpochCallback = std::function<void(const EpochSummary&)>;

TrainResult train(const std::vector<TrainingPair>& data, const ModelConfig& cfg,
                  const TrainOptions& opt, const EpochCallback& on_epoch = {});

// Newest epoch checkpoint in `dir`, or empty.
std::string latest_checkpoint(const std::string& dir);

struct BranchResponses {
  RealPlane first;  // first-input branch, frame t -> t+1
  RealPlane fused;  // RGB-T branch
};

BranchResponses branch_responses(const TrainingPair& pair, const ModelParams& params,
                                 const ModelConfig& cfg, const DcfOptions& dcf);

}  // namespace xic
