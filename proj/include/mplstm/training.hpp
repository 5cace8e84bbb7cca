#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mplstm/data.hpp"
#include "mplstm/network.hpp"

namespace mplstm {

/// Gradients share the parameter layout.
using ParamGrads = NetworkParams;

struct NamedTensor {
  std::string name;
  std::span<double> data;
};
struct ConstNamedTensor {
  std::string name;
  std::span<const double> data;
};

/// Every parameter tensor in a fixed order: forward cell, backward cell (if
/// present), head. Within a cell: perspectives in order; per perspective the
/// input, forget, output and candidate gates; per gate w_s, w_h, w_c, b.
/// Head: w_a, v_a, b_a (when attention is on), w_out, b_out.
std::vector<NamedTensor> named_tensors(NetworkParams& params);
std::vector<ConstNamedTensor> named_tensors(const NetworkParams& params);
std::size_t parameter_count(const NetworkParams& params);

// -- reverse mode -----------------------------------------------------------------

struct BackwardResult {
  ParamGrads grads;
  double loss = 0.0;
  /// Adjoint of every input vector, indexed like SequenceSample::perspectives.
  std::vector<std::vector<Vec>> d_inputs;
};

/// Exact gradients of cross-entropy through the head, attention, dropout and
/// both recurrent directions. The logits adjoint is probs - onehot(label).
BackwardResult backward(const Network& net, const ForwardTrace& trace, std::size_t label,
                        bool want_input_grads = false);

/// Mean gradient over samples[indices] (samples already adapted to the
/// network). Dropout masks come from per-sample seeds drawn from rng in batch
/// order; a null rng disables dropout.
struct BatchResult {
  ParamGrads grads;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<double> losses;  // per sample, in batch order
};
BatchResult batch_gradient(const Network& net, std::span<const SequenceSample> samples,
                           std::span<const std::size_t> indices, double dropout_rate, Rng* rng);

// -- optimizer -------------------------------------------------------------------------

struct RmsPropConfig {
  double lr = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-8;
};

struct OptimizerState {
  RmsPropConfig config;
  /// One accumulator per parameter tensor, in named_tensors order.
  std::vector<std::vector<double>> v;

  static OptimizerState for_params(const NetworkParams& params, RmsPropConfig config);
};

/// v <- rho v + (1 - rho) g^2; theta <- theta - lr g / (sqrt(v) + eps).
void rmsprop_update(std::span<double> theta, std::span<double> v, std::span<const double> g,
                    const RmsPropConfig& config);
void rmsprop_step(OptimizerState& state, NetworkParams& params, const ParamGrads& grads);

// -- epochs --------------------------------------------------------------------------------

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t num_epochs = 50;
  RmsPropConfig optimizer;
  double dropout_rate = 0.1;
  std::uint64_t seed = 1;
  /// Evaluate validation metrics every this many epochs (the last epoch is
  /// always evaluated).
  std::size_t metrics_every = 1;

  void validate() const;
};

struct EpochMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// One pass over samples (already adapted to the network): shuffle, mean
/// gradient per mini-batch, one RMSprop step per batch. Metrics come from the
/// training pass itself and are reduced in sample-index order.
EpochMetrics train_epoch(Network& net, OptimizerState& opt, std::span<const SequenceSample> samples,
                         const TrainConfig& config, Rng& rng);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t total = 0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

/// Dropout off; ties in the prediction go to the lowest class index.
EvalResult evaluate(const Model& model, const Dataset& data);

/// Builds the model from the config and trains it epoch by epoch. Score
/// fusion members are initialized and trained from their own generators
/// seeded with seed + p, so they evolve exactly as if trained one after the
/// other.
class ModelTrainer {
public:
  ModelTrainer(const NetworkConfig& config, const TrainConfig& train);

  /// Mean of the members' training-pass metrics.
  EpochMetrics train_epoch(const Dataset& data);

  const Model& model() const { return model_; }
  Model& model() { return model_; }

private:
  Model model_;
  TrainConfig train_;
  std::vector<Rng> rngs_;
  std::vector<OptimizerState> optimizers_;
};

/// NetworkConfig dims taken from a dataset.
NetworkConfig with_dataset_dims(NetworkConfig config, const Dataset& data);

// -- finite-difference verification -------------------------------------------------------

struct GradcheckCase {
  std::size_t perspectives = 1;
  std::size_t hidden_dim = 1;
  std::size_t length = 1;
  std::size_t input_dim = 2;
  std::size_t num_classes = 3;
  bool bidirectional = false;
  AblationKind kind = AblationKind::Full;
  bool attention = true;
  bool zero_params = false;

  std::string describe() const;
};

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  /// Elements over the relative tolerance and their worst |a - f|.
  std::size_t failing = 0;
  double failing_abs_error = 0.0;
};

struct GradcheckRow {
  GradcheckCase config;
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  std::size_t failing = 0;
  double failing_abs_error = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::vector<GradcheckRow> rows;

  bool all_pass() const;
  double max_rel_error() const;
};

/// m in {1,2,3} x hidden in {1,4} x n in {1,5} x {uni, bi} x {Full, A, B, C},
/// d = 2, K = 3, attention on; followed by a zero-parameter sanity row.
std::vector<GradcheckCase> default_gradcheck_grid();

/// |a - f| / max(|a|, |f|, 1e-8) with f the central difference at step h.
double relative_error(double analytic, double numeric);

GradcheckReport gradcheck(std::uint64_t seed, std::span<const GradcheckCase> grid,
                          double step = 1e-5, double tolerance = 1e-4);

}  // namespace mplstm
