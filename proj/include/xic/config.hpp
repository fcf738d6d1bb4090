#pragma once

// Flat `key = value` run configuration with `#` comments. Unknown keys,
// duplicate keys and malformed values are errors.

#include <string>

#include "xic/data.hpp"
#include "xic/features.hpp"
#include "xic/selfsup.hpp"
#include "xic/tracker.hpp"

namespace xic {

struct TrainingSettings {
  Variant variant = Variant::Xic2;
  std::size_t batch_size = 32;
  int epochs = 30;
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  std::uint64_t seed = 1;
  double noisy_frac = 0.10;
  double bg_frac = 0.25;
  bool reweight = true;
  double momentum = 0.9;
  double weight_decay = 5e-5;
};

struct DataSettings {
  double crop_ratio = 0.5;
  std::size_t stride = 1;
};

struct RunConfig {
  ModelConfig model;  // model.input_size is the patch size everywhere
  DcfOptions dcf;
  TrackerConfig tracker;  // fusion, window, lambda, sigma and size follow model/dcf
  TrainingSettings training;
  DataSettings data;
  SynthConfig synth;
  double px_threshold = 5.0;

  void validate() const;
  // Model config with the variant's branch count and sequence length applied.
  ModelConfig model_config() const;
  TrackerConfig tracker_config() const;
  CropOptions crop_options() const;
  TrainOptions train_options(const std::string& out_dir, int threads) const;
};

RunConfig parse_config_text(const std::string& text, const std::string& source);
RunConfig load_config(const std::string& path);
// Every key with its current value, in a form parse_config_text accepts.
std::string to_text(const RunConfig& cfg);

}  // namespace xic
