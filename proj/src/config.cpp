#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "xic/config.hpp"
#include "xic/error.hpp"

namespace xic {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size(), ErrorKind::InvalidConfig,
          "config key '" + key + "': cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  fail(ErrorKind::InvalidConfig, "config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Entry num(const char* key, T RunConfig::*group, auto member) {
  using V = std::remove_reference_t<decltype(std::declval<T&>().*member)>;
  return {key,
          [group, member](RunConfig& c, const std::string& v, const std::string& k) {
            (c.*group).*member = parse_number<V>(v, k);
          },
          [group, member](const RunConfig& c) {
            const V v = (c.*group).*member;
            if constexpr (std::is_floating_point_v<V>) return fmt(v);
            else return std::to_string(v);
          }};
}

template <typename T>
Entry flag(const char* key, T RunConfig::*group, bool T::*member) {
  return {key,
          [group, member](RunConfig& c, const std::string& v, const std::string& k) {
            (c.*group).*member = parse_bool(v, k);
          },
          [group, member](const RunConfig& c) {
            return std::string((c.*group).*member ? "true" : "false");
          }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      // model
      flag("share_weights", &RunConfig::model, &ModelConfig::share_weights),
      {"first_input",
       [](RunConfig& c, const std::string& v, const std::string&) {
         c.model.first_input = parse_first_input(v);
       },
       [](const RunConfig& c) { return to_string(c.model.first_input); }},
      num("branches", &RunConfig::model, &ModelConfig::branches),
      {"fusion",
       [](RunConfig& c, const std::string& v, const std::string&) { c.model.fusion = parse_fusion(v); },
       [](const RunConfig& c) { return to_string(c.model.fusion); }},
      {"loss_norm",
       [](RunConfig& c, const std::string& v, const std::string&) {
         c.model.loss_norm = parse_loss_norm(v);
       },
       [](const RunConfig& c) { return to_string(c.model.loss_norm); }},
      num("sequence_length", &RunConfig::model, &ModelConfig::sequence_length),
      num("feature_channels", &RunConfig::model, &ModelConfig::feature_channels),
      num("patch_size", &RunConfig::model, &ModelConfig::input_size),
      flag("window", &RunConfig::model, &ModelConfig::window),
      {"precision",
       [](RunConfig&, const std::string& v, const std::string&) {
         require(v == "double", ErrorKind::InvalidConfig,
                 "precision '" + v + "' is not supported; only 'double' is built");
       },
       [](const RunConfig&) { return std::string("double"); }},
      // correlation filter
      num("lambda", &RunConfig::dcf, &DcfOptions::lambda),
      num("sigma_divisor", &RunConfig::dcf, &DcfOptions::sigma_divisor),
      // tracker
      num("alpha", &RunConfig::tracker, &TrackerConfig::alpha),
      num("scale_step", &RunConfig::tracker, &TrackerConfig::scale_step),
      num("scale_penalty", &RunConfig::tracker, &TrackerConfig::scale_penalty),
      num("padding", &RunConfig::tracker, &TrackerConfig::padding),
      flag("subpixel", &RunConfig::tracker, &TrackerConfig::subpixel),
      num("min_size", &RunConfig::tracker, &TrackerConfig::min_size),
      // training
      {"variant",
       [](RunConfig& c, const std::string& v, const std::string&) {
         c.training.variant = parse_variant(v);
       },
       [](const RunConfig& c) { return to_string(c.training.variant); }},
      num("batch_size", &RunConfig::training, &TrainingSettings::batch_size),
      num("epochs", &RunConfig::training, &TrainingSettings::epochs),
      num("lr_start", &RunConfig::training, &TrainingSettings::lr_start),
      num("lr_end", &RunConfig::training, &TrainingSettings::lr_end),
      num("seed", &RunConfig::training, &TrainingSettings::seed),
      num("noisy_frac", &RunConfig::training, &TrainingSettings::noisy_frac),
      num("bg_frac", &RunConfig::training, &TrainingSettings::bg_frac),
      flag("reweight", &RunConfig::training, &TrainingSettings::reweight),
      num("momentum", &RunConfig::training, &TrainingSettings::momentum),
      num("weight_decay", &RunConfig::training, &TrainingSettings::weight_decay),
      // data
      num("crop_ratio", &RunConfig::data, &DataSettings::crop_ratio),
      num("stride", &RunConfig::data, &DataSettings::stride),
      // synthetic data
      num("synth.train_sequences", &RunConfig::synth, &SynthConfig::train_sequences),
      num("synth.test_sequences", &RunConfig::synth, &SynthConfig::test_sequences),
      num("synth.train_frames", &RunConfig::synth, &SynthConfig::train_frames),
      num("synth.test_frames", &RunConfig::synth, &SynthConfig::test_frames),
      num("synth.canvas", &RunConfig::synth, &SynthConfig::canvas),
      num("synth.distractors", &RunConfig::synth, &SynthConfig::distractors),
      num("synth.object_min", &RunConfig::synth, &SynthConfig::object_min),
      num("synth.object_max", &RunConfig::synth, &SynthConfig::object_max),
      num("synth.speed", &RunConfig::synth, &SynthConfig::speed),
      num("synth.turn_probability", &RunConfig::synth, &SynthConfig::turn_probability),
      num("synth.lighting_amplitude", &RunConfig::synth, &SynthConfig::lighting_amplitude),
      num("synth.rgb_noise", &RunConfig::synth, &SynthConfig::rgb_noise),
      num("synth.thermal_noise", &RunConfig::synth, &SynthConfig::thermal_noise),
      num("synth.occluders", &RunConfig::synth, &SynthConfig::occluders),
      num("synth.seed", &RunConfig::synth, &SynthConfig::seed),
      // evaluation
      {"px_threshold",
       [](RunConfig& c, const std::string& v, const std::string& k) {
         c.px_threshold = parse_number<double>(v, k);
       },
       [](const RunConfig& c) { return fmt(c.px_threshold); }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model_config().validate();
  tracker_config().validate();
  synth.validate();
  require(dcf.lambda > 0.0 && dcf.sigma_divisor > 0.0, ErrorKind::InvalidConfig,
          "lambda and sigma_divisor must be positive");
  require(training.batch_size >= 1 && training.epochs >= 1, ErrorKind::InvalidConfig,
          "batch_size and epochs must be positive");
  require(training.lr_start > 0.0 && training.lr_end > 0.0, ErrorKind::InvalidConfig,
          "learning rates must be positive");
  require(training.momentum >= 0.0 && training.momentum < 1.0 && training.weight_decay >= 0.0,
          ErrorKind::InvalidConfig, "momentum must be in [0,1) and weight_decay non-negative");
  require(training.noisy_frac >= 0.0 && training.bg_frac >= 0.0 &&
              training.noisy_frac + training.bg_frac < 1.0,
          ErrorKind::InvalidConfig, "drop fractions must be non-negative and sum to less than 1");
  require(data.crop_ratio > 0.0 && data.crop_ratio <= 1.0 && data.stride >= 1,
          ErrorKind::InvalidConfig, "crop_ratio must be in (0,1] and stride positive");
  require(px_threshold >= 0.0, ErrorKind::InvalidConfig, "px_threshold must be non-negative");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = apply_variant(training.variant, model);
  // A file may still combine `branches = 3` with a three-frame variant.
  if (model.branches == 3) m.branches = 3;
  return m;
}

TrackerConfig RunConfig::tracker_config() const {
  TrackerConfig t = tracker;
  t.fusion = model.fusion;
  t.window = model.window;
  t.input_size = model.input_size;
  t.lambda = dcf.lambda;
  t.sigma_divisor = dcf.sigma_divisor;
  return t;
}

CropOptions RunConfig::crop_options() const {
  CropOptions c;
  c.crop_ratio = data.crop_ratio;
  c.out_size = model.input_size;
  c.stride = data.stride;
  c.sequence_length = model_config().sequence_length;
  return c;
}

TrainOptions RunConfig::train_options(const std::string& out_dir, int threads) const {
  TrainOptions o;
  o.epochs = training.epochs;
  o.batch_size = training.batch_size;
  o.lr_start = training.lr_start;
  o.lr_end = training.lr_end;
  o.seed = training.seed;
  o.out_dir = out_dir;
  o.step.objective = objective_of(training.variant);
  o.step.dcf = dcf;
  o.step.sgd.momentum = training.momentum;
  o.step.sgd.weight_decay = training.weight_decay;
  o.step.noisy_frac = training.noisy_frac;
  o.step.bg_frac = training.bg_frac;
  o.step.reweight = training.reweight;
  o.step.threads = threads;
  return o;
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno);
    const auto eq = body.find('=');
    require(eq != std::string::npos, ErrorKind::InvalidConfig,
            where + ": expected 'key = value', got '" + body + "'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    require(!key.empty() && !value.empty(), ErrorKind::InvalidConfig,
            where + ": empty key or value");
    require(seen.insert(key).second, ErrorKind::InvalidConfig,
            where + ": duplicate key '" + key + "'");
    const Entry* entry = nullptr;
    for (const auto& e : entries())
      if (key == e.key) entry = &e;
    require(entry != nullptr, ErrorKind::InvalidConfig, where + ": unknown key '" + key + "'");
    try {
      entry->set(cfg, value, key);
    } catch (const Error& e) {
      fail(ErrorKind::InvalidConfig, where + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace xic
