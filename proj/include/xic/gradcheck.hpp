#pragma once

// Finite-difference checks of every hand-written backward pass, from single
// kernels up to the batch loss with respect to all conv parameters.

#include <cstdint>
#include <string>
#include <vector>

#include "xic/selfsup.hpp"

namespace xic {

struct GradcheckOptions {
  std::size_t size = 16;  // patch side for the extractor and end-to-end stages
  std::size_t channels = 8;
  std::size_t batch = 2;
  double lambda = 1e-4;
  double step = 1e-6;  // larger steps straddle ReLU kinks at zero-bias init
  double tolerance = 1e-4;
  std::uint64_t seed = 3;
  Variant variant = Variant::Xic2;
  LossNorm loss_norm = LossNorm::L1;
  bool share_weights = false;
  // Test hook: flips the sign of every analytic gradient.
  bool inject_wrong_sign = false;
};

struct StageResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<StageResult> stages;
  double seconds = 0.0;
  bool passed() const;
};

// Relative error |a-n| / max(|a|, |n|, floor), with the floor at 1e-6 of the
// stage's largest finite-difference magnitude (and at least 1e-12).
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

GradcheckReport run_gradcheck(const GradcheckOptions& opt);

// The reduced-geometry batch the end-to-end stage differentiates.
std::vector<TrainingPair> gradcheck_batch(const GradcheckOptions& opt);

}  // namespace xic
