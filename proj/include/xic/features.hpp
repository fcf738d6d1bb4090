#pragma once

// Two-layer convolutional feature extractors (conv -> ReLU -> conv, then a
// Hann window), the model configuration that selects training variants, and
// the parameter checkpoint container.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xic/fusion.hpp"
#include "xic/image.hpp"
#include "xic/numkit.hpp"

namespace xic {

enum class Modality { Rgb, Thermal, Rgbt4 };
enum class FirstInput { Rgb, Thermal, Rgbt4 };
enum class LossNorm { L1, Mse };

std::string to_string(Modality m);
std::string to_string(FirstInput f);
std::string to_string(LossNorm n);
FirstInput parse_first_input(const std::string& text);
LossNorm parse_loss_norm(const std::string& text);

struct ModelConfig {
  bool share_weights = false;
  FirstInput first_input = FirstInput::Rgb;
  int branches = 2;
  FusionMode fusion = FusionMode::Concat;
  LossNorm loss_norm = LossNorm::L1;
  int sequence_length = 2;
  std::size_t feature_channels = 32;
  std::size_t input_size = 125;
  bool window = true;

  void validate() const;
};

struct FeatureExtractorParams {
  ConvKernel conv1;
  ConvKernel conv2;
  Modality modality = Modality::Rgb;

  bool operator==(const FeatureExtractorParams&) const = default;
};

// Glorot-uniform weights, zero biases; deterministic in (seed, modality).
FeatureExtractorParams init_params(std::uint64_t seed, Modality modality, std::size_t in_channels,
                                   std::size_t feature_channels = 32);

// All extractors a configuration needs. `thermal` is absent when weights are
// shared; `rgbt4` exists only for the 4-channel first-branch variant.
struct ModelParams {
  FeatureExtractorParams rgb;
  std::optional<FeatureExtractorParams> thermal;
  std::optional<FeatureExtractorParams> rgbt4;

  const FeatureExtractorParams& thermal_extractor() const { return thermal ? *thermal : rgb; }
  FeatureExtractorParams& thermal_extractor() { return thermal ? *thermal : rgb; }
  bool operator==(const ModelParams&) const = default;
};

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);
// Same layout, all zero; used as a gradient accumulator.
ModelParams zeros_like(const ModelParams& p);

std::size_t param_count(const ModelParams& p);
std::vector<double> flatten(const ModelParams& p);
void unflatten(std::span<const double> flat, ModelParams& p);
void accumulate(ModelParams& into, const ModelParams& from, double scale = 1.0);

// Outer product of two periodic-free Hann windows, peak 1 at the center.
RealPlane hann_window(std::size_t height, std::size_t width);

// Per-channel mean subtraction; thermal is replicated to three channels.
Tensor3 to_network_input(const Patch& patch, Modality modality);
// Stacks RGB and thermal into a 4-channel input, each channel mean-subtracted.
Tensor3 to_network_input(const Patch& rgb, const Patch& thermal);

struct FeatureTape {
  Tensor3 input;
  Tensor3 pre_activation;
  Tensor3 activation;
  bool windowed = false;
};

struct ExtractOptions {
  std::size_t input_size = 125;
  bool window = true;
};

Tensor3 extract_features(const Tensor3& input, const FeatureExtractorParams& params,
                         const ExtractOptions& opt, FeatureTape* tape = nullptr);

struct ExtractorGrads {
  ConvKernel conv1;
  ConvKernel conv2;
};

ExtractorGrads extract_features_backward(const Tensor3& grad_features, const FeatureTape& tape,
                                         const FeatureExtractorParams& params);

void accumulate(FeatureExtractorParams& into, const ExtractorGrads& g, double scale = 1.0);

// Checkpoint container: 16-byte header ("XICPARAM", u32 version, u32 count)
// followed by named tensors, all little-endian, payload as f64.
struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  bool operator==(const NamedTensor&) const = default;
};

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

std::vector<NamedTensor> to_named(const ModelParams& p);
// Reads a model from tensors; `cfg` decides which extractors are expected.
ModelParams model_from_named(const std::vector<NamedTensor>& tensors, const ModelConfig& cfg);

void save_checkpoint(const std::string& path, const ModelParams& p);
ModelParams load_checkpoint(const std::string& path, const ModelConfig& cfg);

}  // namespace xic
