#include "mplstm/network.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace mplstm {

void validate_sample(const SequenceSample& sample, std::size_t expected_m,
                     std::size_t expected_dim) {
  const std::size_t m = sample.perspectives.size();
  if (m == 0) throw NoPerspectivesError("sample has no perspectives");
  if (expected_m != 0 && m != expected_m) {
    throw NoPerspectivesError("sample has " + std::to_string(m) + " perspectives, expected " +
                              std::to_string(expected_m));
  }
  const std::size_t n = sample.perspectives.front().size();
  if (n == 0) throw EmptySequenceError("perspective 0 has no instances");
  for (std::size_t p = 0; p < m; ++p) {
    if (sample.perspectives[p].size() != n) {
      throw RaggedSequenceError("perspective " + std::to_string(p) + " has " +
                                std::to_string(sample.perspectives[p].size()) +
                                " instances, perspective 0 has " + std::to_string(n));
    }
  }
  const std::size_t d = expected_dim != 0 ? expected_dim : sample.perspectives.front().front().size();
  if (d == 0) throw FeatureDimError("feature vectors are empty");
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      if (sample.perspectives[p][i].size() != d) {
        throw FeatureDimError("perspective " + std::to_string(p) + " instance " +
                              std::to_string(i) + " has dim " +
                              std::to_string(sample.perspectives[p][i].size()) + ", expected " +
                              std::to_string(d));
      }
    }
  }
}

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::Mp: return "mp";
    case CellKind::Vanilla: return "vanilla";
    case CellKind::AblationA: return "ablation_a";
    case CellKind::AblationB: return "ablation_b";
    case CellKind::AblationC: return "ablation_c";
  }
  return "?";
}

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::Joint: return "joint";
    case FusionMode::FeatureConcatDim: return "feature_dim";
    case FusionMode::FeatureConcatTime: return "feature_time";
    case FusionMode::Score: return "score";
  }
  return "?";
}

AblationKind ablation_kind(CellKind kind) {
  switch (kind) {
    case CellKind::AblationA: return AblationKind::ModelA;
    case CellKind::AblationB: return AblationKind::ModelB;
    case CellKind::AblationC: return AblationKind::ModelC;
    case CellKind::Mp:
    case CellKind::Vanilla: return AblationKind::Full;
  }
  return AblationKind::Full;
}

void NetworkConfig::validate() const {
  if (hidden_dim == 0) throw ConfigError("hidden size must be >= 1");
  if (num_perspectives == 0) throw ConfigError("number of perspectives must be >= 1");
  if (input_dim == 0) throw ConfigError("input dim must be >= 1");
  if (num_classes < 2) throw ConfigError("number of classes must be >= 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
  if (fusion == FusionMode::Joint && cell == CellKind::Vanilla) {
    throw ConfigError("joint fusion requires an mp or ablation cell, got vanilla");
  }
  if (fusion != FusionMode::Joint && cell != CellKind::Vanilla) {
    throw ConfigError(std::string(to_string(fusion)) + " fusion requires vanilla cells, got " +
                      std::string(to_string(cell)));
  }
}

std::vector<CoreSpec> core_specs(const NetworkConfig& config) {
  config.validate();
  CoreSpec base;
  base.kind = ablation_kind(config.cell);
  base.hidden_dim = config.hidden_dim;
  base.num_classes = config.num_classes;
  base.bidirectional = config.bidirectional;
  base.attention = config.attention;
  switch (config.fusion) {
    case FusionMode::Joint:
      base.num_perspectives = config.num_perspectives;
      base.input_dim = config.input_dim;
      return {base};
    case FusionMode::FeatureConcatDim:
      base.input_dim = config.input_dim * config.num_perspectives;
      return {base};
    case FusionMode::FeatureConcatTime:
      base.input_dim = config.input_dim;
      return {base};
    case FusionMode::Score:
      base.input_dim = config.input_dim;
      return std::vector<CoreSpec>(config.num_perspectives, base);
  }
  return {base};
}

SequenceSample adapt_input(const NetworkConfig& config, const SequenceSample& sample,
                           std::size_t member) {
  validate_sample(sample, config.num_perspectives, config.input_dim);
  const std::size_t m = sample.num_perspectives();
  const std::size_t n = sample.length();
  SequenceSample out;
  out.label = sample.label;
  switch (config.fusion) {
    case FusionMode::Joint:
      return sample;
    case FusionMode::FeatureConcatDim: {
      std::vector<Vec> seq;
      seq.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> joined;
        joined.reserve(m * config.input_dim);
        for (std::size_t p = 0; p < m; ++p) {
          joined.insert(joined.end(), sample.perspectives[p][i].begin(),
                        sample.perspectives[p][i].end());
        }
        seq.emplace_back(std::move(joined));
      }
      out.perspectives.push_back(std::move(seq));
      return out;
    }
    case FusionMode::FeatureConcatTime: {
      std::vector<Vec> seq;
      seq.reserve(m * n);
      for (std::size_t p = 0; p < m; ++p) {
        seq.insert(seq.end(), sample.perspectives[p].begin(), sample.perspectives[p].end());
      }
      out.perspectives.push_back(std::move(seq));
      return out;
    }
    case FusionMode::Score:
      if (member >= m) {
        throw ShapeError("score fusion member " + std::to_string(member) + " out of range for " +
                         std::to_string(m) + " perspectives");
      }
      out.perspectives.push_back(sample.perspectives[member]);
      return out;
  }
  return out;
}

HeadParams HeadParams::zeros(const CoreSpec& spec) {
  HeadParams h;
  const std::size_t out = spec.output_dim();
  if (spec.attention) {
    h.w_a = Mat(spec.hidden_dim, out);
    h.v_a = Vec(spec.hidden_dim);
    h.b_a = Vec(spec.hidden_dim);
  }
  h.w_out = Mat(spec.num_classes, out);
  h.b_out = Vec(spec.num_classes);
  return h;
}

HeadParams HeadParams::glorot(const CoreSpec& spec, Rng& rng) {
  HeadParams h = zeros(spec);
  if (spec.attention) {
    h.w_a = init_glorot(rng, spec.hidden_dim, spec.output_dim());
    const Mat v = init_glorot(rng, spec.hidden_dim, 1);
    std::copy(v.span().begin(), v.span().end(), h.v_a.begin());
  }
  h.w_out = init_glorot(rng, spec.num_classes, spec.output_dim());
  return h;
}

NetworkParams NetworkParams::zeros(const CoreSpec& spec) {
  NetworkParams p;
  p.forward = CellParams::zeros(spec.num_perspectives, spec.input_dim, spec.hidden_dim);
  if (spec.bidirectional) {
    p.backward = CellParams::zeros(spec.num_perspectives, spec.input_dim, spec.hidden_dim);
  }
  p.head = HeadParams::zeros(spec);
  return p;
}

NetworkParams NetworkParams::glorot(const CoreSpec& spec, Rng& rng) {
  NetworkParams p;
  p.forward = CellParams::glorot(spec.num_perspectives, spec.input_dim, spec.hidden_dim, rng);
  if (spec.bidirectional) {
    p.backward = CellParams::glorot(spec.num_perspectives, spec.input_dim, spec.hidden_dim, rng);
  }
  p.head = HeadParams::glorot(spec, rng);
  return p;
}

void Network::check() const {
  auto check_cell = [&](const CellParams& c, const char* which) {
    if (c.num_perspectives() != spec.num_perspectives || c.input_dim != spec.input_dim ||
        c.hidden_dim != spec.hidden_dim) {
      throw ShapeError(std::string(which) + " cell parameters do not match the network spec");
    }
    c.check();
  };
  check_cell(params.forward, "forward");
  if (spec.bidirectional) {
    check_cell(params.backward, "backward");
  } else if (!params.backward.perspectives.empty()) {
    throw ShapeError("unidirectional network carries backward cell parameters");
  }
  const HeadParams ref = HeadParams::zeros(spec);
  const HeadParams& h = params.head;
  auto same = [](const Mat& a, const Mat& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
  if (!same(h.w_a, ref.w_a) || h.v_a.size() != ref.v_a.size() || h.b_a.size() != ref.b_a.size() ||
      !same(h.w_out, ref.w_out) || h.b_out.size() != ref.b_out.size()) {
    throw ShapeError("head parameters do not match the network spec");
  }
}

Model Model::create(const NetworkConfig& config, Rng& rng) {
  Model model{config, {}};
  for (const auto& spec : core_specs(config)) {
    model.members.push_back({spec, NetworkParams::glorot(spec, rng)});
  }
  return model;
}

Model Model::zeros(const NetworkConfig& config) {
  Model model{config, {}};
  for (const auto& spec : core_specs(config)) {
    model.members.push_back({spec, NetworkParams::zeros(spec)});
  }
  return model;
}

UnrollTrace unroll_traced(const CellParams& params, AblationKind kind,
                          const SequenceSample& sample, bool reverse) {
  validate_sample(sample, params.num_perspectives(), params.input_dim);
  const std::size_t m = sample.num_perspectives();
  const std::size_t n = sample.length();
  UnrollTrace out;
  out.steps.reserve(n);
  out.outputs.reserve(n);
  StepState state = StepState::zeros(params.hidden_dim);
  std::vector<Vec> per_perspective(kind == AblationKind::ModelB ? m : 0, Vec(params.hidden_dim));
  std::vector<Vec> inputs(m);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = reverse ? n - 1 - j : j;
    for (std::size_t p = 0; p < m; ++p) inputs[p] = sample.perspectives[p][i];
    auto [next, trace] = ablation_cell_step(kind, params, inputs, state, per_perspective);
    if (kind == AblationKind::ModelB) per_perspective = trace.cell;
    state = std::move(next);
    out.outputs.push_back(state.h);
    out.steps.push_back(std::move(trace));
  }
  return out;
}

std::vector<Vec> unroll(const CellParams& params, AblationKind kind, const SequenceSample& sample) {
  return unroll_traced(params, kind, sample).outputs;
}

namespace {

std::vector<Vec> concat_directions(const std::vector<Vec>& fwd, const std::vector<Vec>& bwd_rev) {
  const std::size_t n = fwd.size();
  std::vector<Vec> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec& b = bwd_rev[n - 1 - i];
    std::vector<double> joined(fwd[i].begin(), fwd[i].end());
    joined.insert(joined.end(), b.begin(), b.end());
    out.emplace_back(std::move(joined));
  }
  return out;
}

}  // namespace

std::vector<Vec> bidirectional_unroll(const CellParams& params_fwd, const CellParams& params_bwd,
                                      AblationKind kind, const SequenceSample& sample) {
  const auto fwd = unroll_traced(params_fwd, kind, sample, false);
  const auto bwd = unroll_traced(params_bwd, kind, sample, true);
  return concat_directions(fwd.outputs, bwd.outputs);
}

AttentionResult attention_pool(const HeadParams& head, std::span<const Vec> hs) {
  if (hs.empty()) throw ShapeError("attention_pool: empty sequence");
  const std::size_t n = hs.size();
  AttentionResult r;
  r.scores = Vec(n);
  r.hidden.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec u = tanh_act(affine(head.w_a, hs[i], head.b_a));
    r.scores[i] = dot(head.v_a.span(), u.span());
    r.hidden.push_back(std::move(u));
  }
  r.weights = softmax(r.scores);
  r.context = Vec(hs.front().size());
  for (std::size_t i = 0; i < n; ++i) axpy(r.weights[i], hs[i].span(), r.context.span());
  return r;
}

std::pair<Vec, Vec> classify(const HeadParams& head, const Vec& context) {
  Vec logits = affine(head.w_out, context, head.b_out);
  Vec probs = softmax(logits);
  return {std::move(logits), std::move(probs)};
}

double cross_entropy(const Vec& probs, std::size_t label) {
  if (label >= probs.size()) {
    throw LabelError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], 1e-12));
}

ForwardTrace forward(const Network& net, const SequenceSample& sample, DropoutSpec dropout) {
  const CoreSpec& spec = net.spec;
  ForwardTrace t;
  t.forward = unroll_traced(net.params.forward, spec.kind, sample, false);
  t.length = t.forward.outputs.size();
  const std::size_t n = t.length;
  if (spec.bidirectional) {
    t.backward = unroll_traced(net.params.backward, spec.kind, sample, true);
    t.outputs = concat_directions(t.forward.outputs, t.backward.outputs);
  } else {
    t.outputs = t.forward.outputs;
  }

  if (dropout.active()) {
    const double keep_scale = 1.0 / (1.0 - dropout.rate);
    t.dropout_mask.reserve(n);
    t.pooled_inputs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vec mask(spec.output_dim());
      Vec y = t.outputs[i];
      for (std::size_t k = 0; k < mask.size(); ++k) {
        mask[k] = dropout.rng->uniform() < dropout.rate ? 0.0 : keep_scale;
        y[k] *= mask[k];
      }
      t.dropout_mask.push_back(std::move(mask));
      t.pooled_inputs.push_back(std::move(y));
    }
  } else {
    t.pooled_inputs = t.outputs;
  }

  if (spec.attention) {
    t.attention = attention_pool(net.params.head, t.pooled_inputs);
    t.context = t.attention.context;
  } else {
    // Final state of each direction: H^fwd_n, and H^bwd_1 when bidirectional.
    const std::size_t hd = spec.hidden_dim;
    t.context = Vec(spec.output_dim());
    const Vec& last = t.pooled_inputs[n - 1];
    std::copy(last.begin(), last.begin() + static_cast<std::ptrdiff_t>(hd), t.context.begin());
    if (spec.bidirectional) {
      const Vec& first = t.pooled_inputs[0];
      std::copy(first.begin() + static_cast<std::ptrdiff_t>(hd), first.end(),
                t.context.begin() + static_cast<std::ptrdiff_t>(hd));
    }
  }
  std::tie(t.logits, t.probs) = classify(net.params.head, t.context);
  return t;
}

ForwardTrace feature_fusion_forward(const Model& model, const SequenceSample& sample) {
  if (model.config.fusion != FusionMode::FeatureConcatDim &&
      model.config.fusion != FusionMode::FeatureConcatTime) {
    throw ConfigError("feature_fusion_forward needs a feature fusion model, got " +
                      std::string(to_string(model.config.fusion)));
  }
  return forward(model.members.front(), adapt_input(model.config, sample, 0));
}

Vec score_fusion_predict(std::span<const Network> models, const SequenceSample& sample) {
  validate_sample(sample);
  const std::size_t m = sample.num_perspectives();
  if (models.size() != m) {
    throw ShapeError("score fusion: " + std::to_string(models.size()) + " models for " +
                     std::to_string(m) + " perspectives");
  }
  Vec probs;
  for (std::size_t p = 0; p < m; ++p) {
    if (models[p].spec.num_perspectives != 1) {
      throw ShapeError("score fusion member " + std::to_string(p) +
                       " does not consume exactly one perspective");
    }
    SequenceSample single;
    single.label = sample.label;
    single.perspectives.push_back(sample.perspectives[p]);
    const Vec pp = forward(models[p], single).probs;
    if (p == 0) probs = Vec(pp.size());
    axpy(1.0 / static_cast<double>(m), pp.span(), probs.span());
  }
  return probs;
}

Vec predict(const Model& model, const SequenceSample& sample) {
  if (model.config.fusion == FusionMode::Score) {
    validate_sample(sample, model.config.num_perspectives, model.config.input_dim);
    return score_fusion_predict(model.members, sample);
  }
  return forward(model.members.front(), adapt_input(model.config, sample, 0)).probs;
}

std::size_t argmax(const Vec& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace mplstm
