#include "mplstm/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mplstm {

namespace {

template <typename Tensor, typename Params>
void collect_cell(Params& cell, const std::string& prefix, std::vector<Tensor>& out) {
  for (std::size_t p = 0; p < cell.perspectives.size(); ++p) {
    auto& pp = cell.perspectives[p];
    const std::string base = prefix + ".p" + std::to_string(p) + ".";
    auto gate = [&](auto& g, const char* name) {
      out.push_back({base + name + ".w_s", g.w_s.span()});
      out.push_back({base + name + ".w_h", g.w_h.span()});
      out.push_back({base + name + ".w_c", g.w_c.span()});
      out.push_back({base + name + ".b", g.b.span()});
    };
    gate(pp.input, "input");
    gate(pp.forget, "forget");
    gate(pp.output, "output");
    gate(pp.candidate, "candidate");
  }
}

template <typename Params, typename Tensor>
std::vector<Tensor> collect(Params& params) {
  std::vector<Tensor> out;
  collect_cell<Tensor>(params.forward, "fwd", out);
  collect_cell<Tensor>(params.backward, "bwd", out);
  auto& h = params.head;
  if (h.w_a.size() != 0) {
    out.push_back({"head.w_a", h.w_a.span()});
    out.push_back({"head.v_a", h.v_a.span()});
    out.push_back({"head.b_a", h.b_a.span()});
  }
  out.push_back({"head.w_out", h.w_out.span()});
  out.push_back({"head.b_out", h.b_out.span()});
  return out;
}

void add_into(NetworkParams& acc, const NetworkParams& g, double scale = 1.0) {
  auto dst = named_tensors(acc);
  const auto src = named_tensors(g);
  for (std::size_t t = 0; t < dst.size(); ++t) axpy(scale, src[t].data, dst[t].data);
}

void scale_all(NetworkParams& params, double scale) {
  for (auto& t : named_tensors(params)) {
    for (auto& v : t.data) v *= scale;
  }
}

// Reverse pass through one direction. external[j] is the adjoint of the
// output of processing step j.
void backprop_direction(const CellParams& params, const UnrollTrace& trace,
                        const std::vector<Vec>& external, CellParams& grads,
                        std::vector<std::vector<Vec>>* d_inputs, bool reversed) {
  const std::size_t n = trace.steps.size();
  if (n == 0) return;
  const std::size_t m = params.num_perspectives();
  const std::size_t hd = params.hidden_dim;
  const bool model_b = trace.steps.front().kind == AblationKind::ModelB;
  StateGrad next = StateGrad::zeros(model_b ? m : 0, hd);
  std::vector<Vec> step_inputs;
  Vec d_h(hd);
  for (std::size_t j = n; j-- > 0;) {
    for (std::size_t k = 0; k < hd; ++k) d_h[k] = external[j][k] + next.h[k];
    step_inputs.clear();
    next = cell_step_backward(params, trace.steps[j], d_h.span(), next, grads,
                              d_inputs ? &step_inputs : nullptr);
    if (d_inputs != nullptr) {
      const std::size_t i = reversed ? n - 1 - j : j;
      for (std::size_t p = 0; p < m; ++p) axpy(1.0, step_inputs[p].span(), (*d_inputs)[p][i].span());
    }
  }
}

}  // namespace

std::vector<NamedTensor> named_tensors(NetworkParams& params) {
  return collect<NetworkParams, NamedTensor>(params);
}

std::vector<ConstNamedTensor> named_tensors(const NetworkParams& params) {
  return collect<const NetworkParams, ConstNamedTensor>(params);
}

std::size_t parameter_count(const NetworkParams& params) {
  std::size_t total = 0;
  for (const auto& t : named_tensors(params)) total += t.data.size();
  return total;
}

BackwardResult backward(const Network& net, const ForwardTrace& trace, std::size_t label,
                        bool want_input_grads) {
  const CoreSpec& spec = net.spec;
  const HeadParams& head = net.params.head;
  const std::size_t n = trace.length;
  const std::size_t hd = spec.hidden_dim;
  const std::size_t out_dim = spec.output_dim();
  if (n == 0 || trace.outputs.size() != n || trace.pooled_inputs.size() != n ||
      trace.context.size() != out_dim || trace.probs.size() != spec.num_classes ||
      trace.forward.steps.size() != n ||
      trace.backward.steps.size() != (spec.bidirectional ? n : 0)) {
    throw ShapeError("backward: trace does not match the network");
  }
  if (label >= spec.num_classes) {
    throw LabelError("backward: label " + std::to_string(label) + " out of range");
  }

  BackwardResult r;
  r.grads = NetworkParams::zeros(spec);
  r.loss = cross_entropy(trace.probs, label);
  HeadParams& gh = r.grads.head;

  // softmax + cross-entropy
  Vec d_logits = trace.probs;
  d_logits[label] -= 1.0;
  outer_acc(d_logits.span(), trace.context.span(), gh.w_out);
  axpy(1.0, d_logits.span(), gh.b_out.span());
  Vec d_context(out_dim);
  matvec_t_acc(head.w_out, d_logits.span(), d_context.span());

  std::vector<Vec> d_pooled(n, Vec(out_dim));
  if (spec.attention) {
    const auto& att = trace.attention;
    Vec d_alpha(n);
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      axpy(att.weights[i], d_context.span(), d_pooled[i].span());
      d_alpha[i] = dot(d_context.span(), trace.pooled_inputs[i].span());
      weighted += att.weights[i] * d_alpha[i];
    }
    Vec dz(hd);
    for (std::size_t i = 0; i < n; ++i) {
      const double d_score = att.weights[i] * (d_alpha[i] - weighted);
      const Vec& u = att.hidden[i];
      axpy(d_score, u.span(), gh.v_a.span());
      for (std::size_t k = 0; k < u.size(); ++k) dz[k] = d_score * head.v_a[k] * (1.0 - u[k] * u[k]);
      outer_acc(dz.span(), trace.pooled_inputs[i].span(), gh.w_a);
      axpy(1.0, dz.span(), gh.b_a.span());
      matvec_t_acc(head.w_a, dz.span(), d_pooled[i].span());
    }
  } else {
    for (std::size_t k = 0; k < hd; ++k) d_pooled[n - 1][k] += d_context[k];
    if (spec.bidirectional) {
      for (std::size_t k = hd; k < out_dim; ++k) d_pooled[0][k] += d_context[k];
    }
  }

  if (!trace.dropout_mask.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < out_dim; ++k) d_pooled[i][k] *= trace.dropout_mask[i][k];
    }
  }

  const std::size_t m = spec.num_perspectives;
  std::vector<std::vector<Vec>>* d_inputs = nullptr;
  if (want_input_grads) {
    r.d_inputs.assign(m, std::vector<Vec>(n, Vec(spec.input_dim)));
    d_inputs = &r.d_inputs;
  }

  std::vector<Vec> ext_fwd(n, Vec(hd));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(d_pooled[i].begin(), d_pooled[i].begin() + static_cast<std::ptrdiff_t>(hd),
              ext_fwd[i].begin());
  }
  backprop_direction(net.params.forward, trace.forward, ext_fwd, r.grads.forward, d_inputs, false);

  if (spec.bidirectional) {
    // Processing step j of the backward direction sits at instance n-1-j.
    std::vector<Vec> ext_bwd(n, Vec(hd));
    for (std::size_t j = 0; j < n; ++j) {
      const Vec& src = d_pooled[n - 1 - j];
      std::copy(src.begin() + static_cast<std::ptrdiff_t>(hd), src.end(), ext_bwd[j].begin());
    }
    backprop_direction(net.params.backward, trace.backward, ext_bwd, r.grads.backward, d_inputs,
                       true);
  }
  return r;
}

BatchResult batch_gradient(const Network& net, std::span<const SequenceSample> samples,
                           std::span<const std::size_t> indices, double dropout_rate, Rng* rng) {
  if (indices.empty()) throw ValidationError("batch_gradient: empty batch");
  BatchResult r;
  r.grads = NetworkParams::zeros(net.spec);
  r.losses.reserve(indices.size());
  for (const std::size_t idx : indices) {
    const SequenceSample& sample = samples[idx];
    DropoutSpec dropout;
    Rng sample_rng(0);
    if (rng != nullptr && dropout_rate > 0.0) {
      sample_rng = Rng(rng->next_u64());
      dropout = {dropout_rate, &sample_rng};
    }
    const ForwardTrace trace = forward(net, sample, dropout);
    const BackwardResult b = backward(net, trace, sample.label);
    add_into(r.grads, b.grads);
    r.loss_sum += b.loss;
    r.losses.push_back(b.loss);
    if (argmax(trace.probs) == sample.label) ++r.correct;
  }
  scale_all(r.grads, 1.0 / static_cast<double>(indices.size()));
  return r;
}

OptimizerState OptimizerState::for_params(const NetworkParams& params, RmsPropConfig config) {
  OptimizerState s;
  s.config = config;
  for (const auto& t : named_tensors(params)) s.v.emplace_back(t.data.size(), 0.0);
  return s;
}

void rmsprop_update(std::span<double> theta, std::span<double> v, std::span<const double> g,
                    const RmsPropConfig& c) {
  if (theta.size() != v.size() || theta.size() != g.size()) {
    throw ShapeError("rmsprop_update: parameter, accumulator and gradient sizes differ");
  }
  for (std::size_t k = 0; k < theta.size(); ++k) {
    v[k] = c.rho * v[k] + (1.0 - c.rho) * g[k] * g[k];
    theta[k] -= c.lr * g[k] / (std::sqrt(v[k]) + c.epsilon);
  }
}

void rmsprop_step(OptimizerState& state, NetworkParams& params, const ParamGrads& grads) {
  auto theta = named_tensors(params);
  const auto g = named_tensors(grads);
  if (theta.size() != g.size() || theta.size() != state.v.size()) {
    throw ShapeError("rmsprop_step: parameter, gradient and optimizer layouts differ");
  }
  for (std::size_t t = 0; t < theta.size(); ++t) {
    rmsprop_update(theta[t].data, state.v[t], g[t].data, state.config);
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(optimizer.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(optimizer.rho >= 0.0 && optimizer.rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (!(optimizer.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (metrics_every == 0) throw ConfigError("metrics cadence must be >= 1");
}

EpochMetrics train_epoch(Network& net, OptimizerState& opt, std::span<const SequenceSample> samples,
                         const TrainConfig& config, Rng& rng) {
  if (samples.empty()) throw ValidationError("train_epoch: empty dataset");
  const auto batches = split_batches(samples.size(), config.batch_size, rng);
  std::vector<double> losses(samples.size(), 0.0);
  std::size_t correct = 0;
  for (const auto& batch : batches) {
    const BatchResult r = batch_gradient(net, samples, batch, config.dropout_rate, &rng);
    for (std::size_t k = 0; k < batch.size(); ++k) losses[batch[k]] = r.losses[k];
    correct += r.correct;
    rmsprop_step(opt, net.params, r.grads);
  }
  double total = 0.0;
  for (double l : losses) total += l;
  const double count = static_cast<double>(samples.size());
  return {total / count, static_cast<double>(correct) / count};
}

EvalResult evaluate(const Model& model, const Dataset& data) {
  if (data.empty()) throw ValidationError("evaluate: empty dataset");
  const std::size_t k = model.config.num_classes;
  EvalResult r;
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  double total = 0.0;
  std::size_t correct = 0;
  for (const auto& sample : data.samples) {
    const Vec probs = predict(model, sample);
    total += cross_entropy(probs, sample.label);
    const std::size_t guess = argmax(probs);
    if (guess == sample.label) ++correct;
    ++r.confusion[sample.label][guess];
  }
  r.total = data.size();
  r.loss = total / static_cast<double>(r.total);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  return r;
}

NetworkConfig with_dataset_dims(NetworkConfig config, const Dataset& data) {
  config.num_perspectives = data.num_perspectives;
  config.input_dim = data.feature_dim;
  config.num_classes = data.num_classes;
  return config;
}

ModelTrainer::ModelTrainer(const NetworkConfig& config, const TrainConfig& train)
    : model_{config, {}}, train_(train) {
  train_.validate();
  const auto specs = core_specs(config);
  for (std::size_t p = 0; p < specs.size(); ++p) {
    rngs_.emplace_back(train_.seed + p);
    model_.members.push_back({specs[p], NetworkParams::glorot(specs[p], rngs_.back())});
    optimizers_.push_back(
        OptimizerState::for_params(model_.members.back().params, train_.optimizer));
  }
}

EpochMetrics ModelTrainer::train_epoch(const Dataset& data) {
  if (data.empty()) throw ValidationError("train_epoch: empty dataset");
  EpochMetrics mean;
  const std::size_t members = model_.members.size();
  for (std::size_t p = 0; p < members; ++p) {
    EpochMetrics e;
    if (model_.config.fusion == FusionMode::Joint) {
      for (const auto& s : data.samples) validate_sample(s, model_.config.num_perspectives,
                                                         model_.config.input_dim);
      e = mplstm::train_epoch(model_.members[p], optimizers_[p], data.samples, train_, rngs_[p]);
    } else {
      std::vector<SequenceSample> adapted;
      adapted.reserve(data.size());
      for (const auto& s : data.samples) adapted.push_back(adapt_input(model_.config, s, p));
      e = mplstm::train_epoch(model_.members[p], optimizers_[p], adapted, train_, rngs_[p]);
    }
    mean.loss += e.loss / static_cast<double>(members);
    mean.accuracy += e.accuracy / static_cast<double>(members);
  }
  return mean;
}

std::string GradcheckCase::describe() const {
  std::string s = "m=" + std::to_string(perspectives) + " hidden=" + std::to_string(hidden_dim) +
                  " n=" + std::to_string(length) + " d=" + std::to_string(input_dim) +
                  " K=" + std::to_string(num_classes) + (bidirectional ? " bi" : " uni") + " " +
                  std::string(to_string(kind)) + (attention ? " attn" : " no-attn");
  if (zero_params) s += " zero-params";
  return s;
}

bool GradcheckReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const GradcheckRow& r) { return r.pass; });
}

double GradcheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.max_rel_error);
  return worst;
}

std::vector<GradcheckCase> default_gradcheck_grid() {
  std::vector<GradcheckCase> grid;
  for (std::size_t m : {1, 2, 3}) {
    for (std::size_t hidden : {1, 4}) {
      for (std::size_t n : {1, 5}) {
        for (bool bi : {false, true}) {
          for (AblationKind kind : {AblationKind::Full, AblationKind::ModelA, AblationKind::ModelB,
                                    AblationKind::ModelC}) {
            GradcheckCase c;
            c.perspectives = m;
            c.hidden_dim = hidden;
            c.length = n;
            c.bidirectional = bi;
            c.kind = kind;
            grid.push_back(c);
          }
        }
      }
    }
  }
  GradcheckCase sanity;
  sanity.perspectives = 2;
  sanity.hidden_dim = 4;
  sanity.length = 5;
  sanity.bidirectional = true;
  sanity.zero_params = true;
  grid.push_back(sanity);
  return grid;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(std::uint64_t seed, std::span<const GradcheckCase> grid, double step,
                          double tolerance) {
  GradcheckReport report;
  report.step = step;
  report.tolerance = tolerance;
  Rng rng(seed);
  for (const auto& c : grid) {
    CoreSpec spec;
    spec.kind = c.kind;
    spec.num_perspectives = c.perspectives;
    spec.input_dim = c.input_dim;
    spec.hidden_dim = c.hidden_dim;
    spec.num_classes = c.num_classes;
    spec.bidirectional = c.bidirectional;
    spec.attention = c.attention;

    Network net{spec, c.zero_params ? NetworkParams::zeros(spec) : NetworkParams::glorot(spec, rng)};
    if (!c.zero_params) {
      // Non-zero biases so every bias path is exercised.
      for (auto& t : named_tensors(net.params)) {
        const bool is_bias = t.name.ends_with(".b") || t.name.ends_with("b_a") ||
                             t.name.ends_with("b_out");
        if (is_bias) {
          for (auto& v : t.data) v = rng.uniform() - 0.5;
        }
      }
    }

    SequenceSample sample;
    sample.perspectives.assign(c.perspectives, std::vector<Vec>(c.length, Vec(c.input_dim)));
    for (auto& seq : sample.perspectives) {
      for (auto& inst : seq) {
        for (auto& v : inst) v = rng.normal();
      }
    }
    sample.label = rng.below(c.num_classes);

    const BackwardResult analytic = backward(net, forward(net, sample), sample.label);
    const auto grads = named_tensors(analytic.grads);
    auto params = named_tensors(net.params);

    GradcheckRow row;
    row.config = c;
    for (std::size_t t = 0; t < params.size(); ++t) {
      TensorCheck check{params[t].name, 0.0, 0, 0.0};
      for (std::size_t k = 0; k < params[t].data.size(); ++k) {
        double& theta = params[t].data[k];
        const double saved = theta;
        theta = saved + step;
        const double up = cross_entropy(forward(net, sample).probs, sample.label);
        theta = saved - step;
        const double down = cross_entropy(forward(net, sample).probs, sample.label);
        theta = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double rel = relative_error(grads[t].data[k], numeric);
        check.max_rel_error = std::max(check.max_rel_error, rel);
        if (!(rel < tolerance)) {
          ++check.failing;
          check.failing_abs_error =
              std::max(check.failing_abs_error, std::abs(grads[t].data[k] - numeric));
        }
      }
      row.max_rel_error = std::max(row.max_rel_error, check.max_rel_error);
      row.failing += check.failing;
      row.failing_abs_error = std::max(row.failing_abs_error, check.failing_abs_error);
      row.tensors.push_back(std::move(check));
    }
    row.pass = row.max_rel_error < tolerance;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace mplstm
