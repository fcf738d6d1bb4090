#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "xic/error.hpp"
#include "xic/selfsup.hpp"

namespace xic {

ConsistencyResult consistency_loss(const RealPlane& a, const RealPlane& b, LossNorm norm) {
  require(a.height == b.height && a.width == b.width && a.size() > 0, ErrorKind::InvalidInput,
          "consistency_loss: response maps differ in shape");
  ConsistencyResult r;
  r.grad_a = RealPlane(a.height, a.width);
  r.grad_b = RealPlane(a.height, a.width);
  const double inv = 1.0 / static_cast<double>(a.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a.data[i] - b.data[i];
    double g;
    if (norm == LossNorm::L1) {
      sum += std::abs(diff);
      g = diff > 0.0 ? inv : (diff < 0.0 ? -inv : 0.0);
    } else {
      sum += diff * diff;
      g = 2.0 * diff * inv;
    }
    r.grad_a.data[i] = g;
    r.grad_b.data[i] = -g;
  }
  r.value = sum * inv;
  return r;
}

double sample_difference(const Patch& t, const Patch& s) {
  require(t.same_shape(s) && !t.empty(), ErrorKind::InvalidInput,
          "sample_difference: patch shapes differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const double d = static_cast<double>(t.data[i]) - static_cast<double>(s.data[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(t.height * t.width);
}

DropMasks compute_drop_masks(std::span<const double> d, double noisy_frac, double bg_frac) {
  require(!d.empty(), ErrorKind::InvalidInput, "compute_drop_masks: empty batch");
  require(noisy_frac >= 0.0 && bg_frac >= 0.0 && noisy_frac + bg_frac < 1.0,
          ErrorKind::InvalidConfig, "drop fractions must be non-negative and sum to less than 1");
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  const auto n_noisy = static_cast<std::size_t>(std::floor(noisy_frac * static_cast<double>(n)));
  const auto n_bg = static_cast<std::size_t>(std::floor(bg_frac * static_cast<double>(n)));
  DropMasks m{std::vector<int>(n, 1), std::vector<int>(n, 1)};
  // One ascending order serves both ends, so the two dropped sets never overlap.
  for (std::size_t k = 0; k < n_bg; ++k) m.background[order[k]] = 0;
  for (std::size_t k = 0; k < n_noisy; ++k) m.noisy[order[n - 1 - k]] = 0;
  return m;
}

std::vector<double> normalize_weights(std::span<const int> noisy, std::span<const int> background) {
  require(noisy.size() == background.size(), ErrorKind::InvalidInput,
          "normalize_weights: mask lengths differ");
  double survivors = 0.0;
  for (std::size_t i = 0; i < noisy.size(); ++i) survivors += noisy[i] * background[i];
  require(survivors > 0.0, ErrorKind::DegenerateBatch, "every sample in the batch was dropped");
  std::vector<double> out(noisy.size());
  for (std::size_t i = 0; i < noisy.size(); ++i) out[i] = (noisy[i] * background[i]) / survivors;
  return out;
}

double weighted_loss(std::span<const double> per_sample, std::span<const double> d_norm) {
  require(per_sample.size() == d_norm.size() && !per_sample.empty(), ErrorKind::InvalidInput,
          "weighted_loss: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < per_sample.size(); ++i) sum += d_norm[i] * per_sample[i];
  return sum / static_cast<double>(per_sample.size());
}

std::size_t SampleWeights::dropped_noisy() const {
  return static_cast<std::size_t>(std::count(noisy_mask.begin(), noisy_mask.end(), 0));
}

std::size_t SampleWeights::dropped_background() const {
  return static_cast<std::size_t>(std::count(background_mask.begin(), background_mask.end(), 0));
}

SampleWeights compute_sample_weights(std::span<const double> d, double noisy_frac, double bg_frac) {
  SampleWeights w;
  w.d.assign(d.begin(), d.end());
  DropMasks m = compute_drop_masks(d, noisy_frac, bg_frac);
  w.noisy_mask = std::move(m.noisy);
  w.background_mask = std::move(m.background);
  try {
    w.d_norm = normalize_weights(w.noisy_mask, w.background_mask);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateBatch) throw;
  }
  return w;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Xic2: return "xic2";
    case Variant::Xic3: return "xic3";
    case Variant::Cycle2: return "cycle2";
    case Variant::Cycle3: return "cycle3";
    case Variant::ThreeBranch: return "three-branch";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  for (Variant v : {Variant::Xic2, Variant::Xic3, Variant::Cycle2, Variant::Cycle3,
                    Variant::ThreeBranch})
    if (to_string(v) == text) return v;
  fail(ErrorKind::InvalidConfig,
       "unknown variant '" + text + "' (expected xic2, xic3, cycle2, cycle3, three-branch)");
}

Objective objective_of(Variant v) {
  return (v == Variant::Cycle2 || v == Variant::Cycle3) ? Objective::Cycle : Objective::CrossInput;
}

ModelConfig apply_variant(Variant v, ModelConfig base) {
  switch (v) {
    case Variant::Xic2:
    case Variant::Cycle2:
      base.sequence_length = 2;
      break;
    case Variant::Xic3:
    case Variant::Cycle3:
      base.sequence_length = 3;
      break;
    case Variant::ThreeBranch:
      base.branches = 3;
      base.sequence_length = 2;
      break;
  }
  if (v != Variant::ThreeBranch) base.branches = 2;
  return base;
}

RealPlane pseudo_label(const TrainingPair& pair, std::size_t size, const DcfOptions& dcf) {
  require(dcf.sigma_divisor > 0.0, ErrorKind::InvalidConfig, "sigma divisor must be positive");
  const auto row = static_cast<std::size_t>(std::lround(pair.pseudo_box.row));
  const auto col = static_cast<std::size_t>(std::lround(pair.pseudo_box.col));
  return gaussian_label(size, size, static_cast<double>(size) / dcf.sigma_divisor, row, col).map;
}

std::size_t hop_count(Objective objective, int sequence_length) {
  const std::size_t forward = static_cast<std::size_t>(sequence_length - 1);
  return objective == Objective::Cycle ? 2 * forward : forward;
}

namespace {

enum class Branch { Rgb, Thermal, Rgbt4, Fused };
enum Stream { kRgb = 0, kThermal = 1, kRgbt4 = 2 };

const char* branch_name(Branch b) {
  switch (b) {
    case Branch::Rgb: return "RGB";
    case Branch::Thermal: return "T";
    case Branch::Rgbt4: return "RGBT4";
    case Branch::Fused: return "RGBT";
  }
  return "?";
}

Branch first_branch(FirstInput f) {
  switch (f) {
    case FirstInput::Rgb: return Branch::Rgb;
    case FirstInput::Thermal: return Branch::Thermal;
    case FirstInput::Rgbt4: return Branch::Rgbt4;
  }
  return Branch::Rgb;
}

struct Hop {
  int template_frame;
  int search_frame;
};

std::vector<Hop> make_hops(Objective objective, int frames) {
  std::vector<Hop> hops;
  for (int f = 0; f + 1 < frames; ++f) hops.push_back({f, f + 1});
  if (objective == Objective::Cycle)
    for (int f = frames - 1; f > 0; --f) hops.push_back({f, f - 1});
  return hops;
}

void add_into(Tensor3& into, const Tensor3& from) {
  if (into.data.empty()) {
    into = from;
    return;
  }
  for (std::size_t i = 0; i < into.data.size(); ++i) into.data[i] += from.data[i];
}

RealPlane clamp_unit(const RealPlane& r) {
  RealPlane out = r;
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

// Features of every (stream, frame) a sample touches, computed once, with
// gradient slots so each extractor runs one backward pass per frame.
class SampleGraph {
 public:
  SampleGraph(const TrainingPair& pair, const ModelParams& params, const ModelConfig& cfg,
              bool need_grad)
      : pair_(pair), params_(params), cfg_(cfg), need_grad_(need_grad) {
    opt_.input_size = cfg.input_size;
    opt_.window = cfg.window;
  }

  Tensor3 branch(Branch b, int frame) {
    switch (b) {
      case Branch::Rgb: return stream(kRgb, frame);
      case Branch::Thermal: return stream(kThermal, frame);
      case Branch::Rgbt4: return stream(kRgbt4, frame);
      case Branch::Fused: return fuse(stream(kRgb, frame), stream(kThermal, frame), cfg_.fusion);
    }
    return {};
  }

  void add_grad(Branch b, int frame, const Tensor3& g) {
    switch (b) {
      case Branch::Rgb: add_into(slot(kRgb, frame).grad, g); break;
      case Branch::Thermal: add_into(slot(kThermal, frame).grad, g); break;
      case Branch::Rgbt4: add_into(slot(kRgbt4, frame).grad, g); break;
      case Branch::Fused: {
        FuseGrads fg = fuse_backward(g, stream(kRgb, frame).channels, cfg_.fusion);
        add_into(slot(kRgb, frame).grad, fg.a);
        add_into(slot(kThermal, frame).grad, fg.b);
        break;
      }
    }
  }

  ModelParams backward() {
    ModelParams grads = zeros_like(params_);
    for (int s = 0; s < 3; ++s) {
      for (int f = 0; f < 3; ++f) {
        Slot& sl = slots_[s][f];
        if (sl.grad.data.empty()) continue;
        const FeatureExtractorParams& ext = extractor(static_cast<Stream>(s));
        ExtractorGrads g = extract_features_backward(sl.grad, sl.tape, ext);
        FeatureExtractorParams& into = s == kRgb       ? grads.rgb
                                       : s == kThermal ? grads.thermal_extractor()
                                                       : *grads.rgbt4;
        accumulate(into, g);
      }
    }
    return grads;
  }

 private:
  struct Slot {
    bool ready = false;
    Tensor3 features;
    FeatureTape tape;
    Tensor3 grad;
  };

  const Patch& rgb_patch(int f) const {
    return f == 0 ? pair_.template_rgb : (f == 1 ? pair_.search_rgb : pair_.third_rgb);
  }
  const Patch& t_patch(int f) const {
    return f == 0 ? pair_.template_t : (f == 1 ? pair_.search_t : pair_.third_t);
  }

  const FeatureExtractorParams& extractor(Stream s) const {
    if (s == kRgb) return params_.rgb;
    if (s == kThermal) return params_.thermal_extractor();
    require(params_.rgbt4.has_value(), ErrorKind::InvalidState,
            "model has no 4-channel extractor for the RGBT4 first input");
    return *params_.rgbt4;
  }

  Slot& slot(Stream s, int frame) {
    require(frame >= 0 && frame < 3, ErrorKind::InvalidInput, "frame index out of range");
    return slots_[s][frame];
  }

  const Tensor3& stream(Stream s, int frame) {
    Slot& sl = slot(s, frame);
    if (!sl.ready) {
      const Patch& rgb = rgb_patch(frame);
      require(!rgb.empty(), ErrorKind::InvalidInput,
              "training pair lacks the frame this variant needs");
      Tensor3 input = s == kRgb       ? to_network_input(rgb, Modality::Rgb)
                      : s == kThermal ? to_network_input(t_patch(frame), Modality::Thermal)
                                      : to_network_input(rgb, t_patch(frame));
      sl.features = extract_features(input, extractor(s), opt_, need_grad_ ? &sl.tape : nullptr);
      sl.ready = true;
    }
    return sl.features;
  }

  const TrainingPair& pair_;
  const ModelParams& params_;
  const ModelConfig& cfg_;
  bool need_grad_;
  ExtractOptions opt_;
  Slot slots_[3][3];
};

struct Chain {
  std::vector<CfTape> tapes;
  std::vector<RealPlane> outputs;
};

Chain run_chain(const std::vector<Tensor3>& frames, const std::vector<Hop>& hops,
                const RealPlane& label, double lambda, bool keep_tapes) {
  Chain c;
  for (std::size_t k = 0; k < hops.size(); ++k) {
    const RealPlane next_label = k == 0 ? label : clamp_unit(c.outputs.back());
    CfForward fwd = cf_forward(frames[hops[k].template_frame], next_label, lambda,
                               frames[hops[k].search_frame]);
    c.outputs.push_back(std::move(fwd.response.map));
    if (keep_tapes) c.tapes.push_back(std::move(fwd.tape));
  }
  return c;
}

// Gradients with respect to every frame's features; a hop's label receives
// gradient only where the clamp was inactive.
std::vector<Tensor3> chain_backward(const RealPlane& grad_out, const Chain& c,
                                    const std::vector<Hop>& hops, std::size_t frames) {
  std::vector<Tensor3> grads(frames);
  RealPlane g = grad_out;
  for (std::size_t k = hops.size(); k-- > 0;) {
    CfGrads cg = cf_backward(g, c.tapes[k]);
    add_into(grads[hops[k].template_frame], cg.template_features);
    add_into(grads[hops[k].search_frame], cg.search_features);
    if (k > 0) {
      const RealPlane& prev = c.outputs[k - 1];
      for (std::size_t i = 0; i < cg.label.data.size(); ++i)
        if (!(prev.data[i] > 0.0 && prev.data[i] < 1.0)) cg.label.data[i] = 0.0;
      g = std::move(cg.label);
    }
  }
  return grads;
}

void check_pair(const TrainingPair& pair, const ModelConfig& cfg) {
  require(!pair.template_rgb.empty() && pair.template_rgb.same_shape(pair.search_rgb) &&
              pair.template_rgb.height == cfg.input_size &&
              pair.template_rgb.width == cfg.input_size,
          ErrorKind::InvalidInput,
          "training patches must be " + std::to_string(cfg.input_size) + " px squares");
  require(cfg.sequence_length == 2 || pair.has_third(), ErrorKind::InvalidInput,
          "three-frame training needs pairs cropped with sequence_length 3");
}

}  // namespace

SampleResult sample_loss(const TrainingPair& pair, const ModelParams& params,
                         const ModelConfig& cfg, const StepOptions& opt, bool need_grad) {
  cfg.validate();
  check_pair(pair, cfg);
  SampleGraph graph(pair, params, cfg, need_grad);
  const int frames = cfg.sequence_length;
  const std::vector<Hop> hops = make_hops(opt.objective, frames);
  const RealPlane label = pseudo_label(pair, cfg.input_size, opt.dcf);

  std::vector<Branch> branches;
  if (opt.objective == Objective::Cycle)
    branches = {Branch::Fused};
  else if (cfg.branches == 3)
    branches = {Branch::Rgb, Branch::Thermal, Branch::Fused};
  else
    branches = {first_branch(cfg.first_input), Branch::Fused};

  std::vector<Chain> chains;
  for (Branch b : branches) {
    std::vector<Tensor3> feats;
    for (int f = 0; f < frames; ++f) feats.push_back(graph.branch(b, f));
    chains.push_back(run_chain(feats, hops, label, opt.dcf.lambda, need_grad));
  }

  SampleResult result;
  std::vector<RealPlane> grad_out(branches.size());
  auto add_grad = [&](std::size_t b, const RealPlane& g) {
    if (grad_out[b].data.empty()) {
      grad_out[b] = g;
    } else {
      for (std::size_t i = 0; i < g.data.size(); ++i) grad_out[b].data[i] += g.data[i];
    }
  };

  if (opt.objective == Objective::Cycle) {
    ConsistencyResult cr = consistency_loss(chains[0].outputs.back(), label, cfg.loss_norm);
    result.terms.push_back({"cycle", cr.value});
    add_grad(0, cr.grad_a);
  } else {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (branches.size() == 3)
      pairs = {{0, 2}, {0, 1}, {1, 2}};
    else
      pairs = {{0, 1}};
    for (auto [a, b] : pairs) {
      ConsistencyResult cr =
          consistency_loss(chains[a].outputs.back(), chains[b].outputs.back(), cfg.loss_norm);
      result.terms.push_back(
          {std::string(branch_name(branches[a])) + "-" + branch_name(branches[b]), cr.value});
      add_grad(a, cr.grad_a);
      add_grad(b, cr.grad_b);
    }
  }
  for (const LossTerm& t : result.terms) result.loss += t.value;

  if (need_grad) {
    for (std::size_t b = 0; b < branches.size(); ++b) {
      if (grad_out[b].data.empty()) continue;
      std::vector<Tensor3> fg =
          chain_backward(grad_out[b], chains[b], hops, static_cast<std::size_t>(frames));
      for (int f = 0; f < frames; ++f)
        if (!fg[f].data.empty()) graph.add_grad(branches[b], f, fg[f]);
    }
    result.grad = graph.backward();
  }
  return result;
}

LossReport batch_loss(std::span<const TrainingPair> batch, const ModelParams& params,
                      const ModelConfig& cfg, const StepOptions& opt, ModelParams* grad) {
  require(!batch.empty(), ErrorKind::InvalidInput, "batch is empty");
  const std::size_t n = batch.size();
  LossReport report;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i)
    d[i] = sample_difference(batch[i].template_rgb, batch[i].search_rgb);
  if (opt.reweight) {
    report.weights = compute_sample_weights(d, opt.noisy_frac, opt.bg_frac);
  } else {
    report.weights.d = d;
    report.weights.noisy_mask.assign(n, 1);
    report.weights.background_mask.assign(n, 1);
    report.weights.d_norm.assign(n, 1.0 / static_cast<double>(n));
  }
  if (report.weights.degenerate()) {
    report.skipped = true;
    return report;
  }
  const std::vector<double>& w = report.weights.d_norm;

  std::vector<SampleResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = sample_loss(batch[i], params, cfg, opt, grad != nullptr && w[i] > 0.0);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, opt.threads));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Index-ordered reduction keeps the result independent of scheduling.
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) *grad = zeros_like(params);
  for (std::size_t i = 0; i < n; ++i) {
    report.per_sample_losses.push_back(results[i].loss);
    for (const LossTerm& t : results[i].terms) {
      auto it = std::find_if(report.terms.begin(), report.terms.end(),
                             [&](const LossTerm& x) { return x.name == t.name; });
      if (it == report.terms.end()) it = report.terms.insert(report.terms.end(), {t.name, 0.0});
      it->value += inv_n * w[i] * t.value;
    }
    if (grad && results[i].grad) accumulate(*grad, *results[i].grad, inv_n * w[i]);
  }
  report.final_loss = weighted_loss(report.per_sample_losses, w);
  return report;
}

LossReport train_step(std::span<const TrainingPair> batch, ModelParams& params,
                      std::vector<double>& velocity, const ModelConfig& cfg,
                      const StepOptions& opt) {
  ModelParams grad;
  LossReport report = batch_loss(batch, params, cfg, opt, &grad);
  if (report.skipped) return report;
  require(std::isfinite(report.final_loss), ErrorKind::TrainingDiverged,
          "non-finite training loss");
  std::vector<double> p = flatten(params);
  const std::vector<double> g = flatten(grad);
  if (velocity.empty()) velocity.assign(p.size(), 0.0);
  sgd_step(p, g, velocity, opt.sgd);
  unflatten(p, params);
  return report;
}

BranchResponses branch_responses(const TrainingPair& pair, const ModelParams& params,
                                 const ModelConfig& cfg, const DcfOptions& dcf) {
  check_pair(pair, cfg);
  SampleGraph graph(pair, params, cfg, false);
  const RealPlane label = pseudo_label(pair, cfg.input_size, dcf);
  const Branch first = cfg.branches == 3 ? Branch::Rgb : first_branch(cfg.first_input);
  BranchResponses out;
  out.first = cf_forward(graph.branch(first, 0), label, dcf.lambda, graph.branch(first, 1))
                  .response.map;
  out.fused = cf_forward(graph.branch(Branch::Fused, 0), label, dcf.lambda,
                         graph.branch(Branch::Fused, 1))
                  .response.map;
  return out;
}

}  // namespace xic
