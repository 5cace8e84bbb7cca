#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mplstm/cells.hpp"
#include "mplstm/math.hpp"
#include "mplstm/sample.hpp"

namespace mplstm {

enum class CellKind { Mp, Vanilla, AblationA, AblationB, AblationC };
enum class FusionMode { Joint, FeatureConcatDim, FeatureConcatTime, Score };

std::string_view to_string(CellKind kind);
std::string_view to_string(FusionMode mode);

/// Raised for configurations that break the NetworkConfig invariants.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct NetworkConfig {
  CellKind cell = CellKind::Mp;
  FusionMode fusion = FusionMode::Joint;
  bool bidirectional = true;
  std::size_t hidden_dim = 32;
  std::size_t num_perspectives = 2;
  std::size_t input_dim = 1;
  std::size_t num_classes = 2;
  bool attention = true;
  double dropout_rate = 0.1;

  /// Joint fusion needs an mp or ablation cell; feature and score fusion need
  /// vanilla cells. Throws ConfigError.
  void validate() const;
};

/// Shape of one recurrent stack plus head, as it sees its (possibly fused)
/// input. Joint and feature fusion build one of these, score fusion one per
/// perspective.
struct CoreSpec {
  AblationKind kind = AblationKind::Full;
  std::size_t num_perspectives = 1;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 1;
  std::size_t num_classes = 2;
  bool bidirectional = false;
  bool attention = true;

  std::size_t output_dim() const { return hidden_dim * (bidirectional ? 2 : 1); }
};

/// Additive attention (score_i = v_a . tanh(W_a y_i + b_a)) and the softmax
/// classifier. The attention tensors are empty when attention is disabled.
struct HeadParams {
  Mat w_a;
  Vec v_a;
  Vec b_a;
  Mat w_out;
  Vec b_out;

  bool has_attention() const { return w_a.size() != 0; }

  static HeadParams zeros(const CoreSpec& spec);
  static HeadParams glorot(const CoreSpec& spec, Rng& rng);
};

struct NetworkParams {
  CellParams forward;
  CellParams backward;  // empty unless bidirectional
  HeadParams head;

  static NetworkParams zeros(const CoreSpec& spec);
  static NetworkParams glorot(const CoreSpec& spec, Rng& rng);
};

struct Network {
  CoreSpec spec;
  NetworkParams params;

  /// Throws ShapeError when params disagree with spec.
  void check() const;
};

/// Top-level model: the experiment config plus one network (joint and
/// feature fusion) or one per perspective (score fusion).
struct Model {
  NetworkConfig config;
  std::vector<Network> members;

  static Model create(const NetworkConfig& config, Rng& rng);
  static Model zeros(const NetworkConfig& config);
};

std::vector<CoreSpec> core_specs(const NetworkConfig& config);

/// Rewrites a raw sample into what member `member` consumes: identity for
/// joint fusion, per-instance concatenation or end-to-end appending for
/// feature fusion, a single perspective for score fusion.
SequenceSample adapt_input(const NetworkConfig& config, const SequenceSample& sample,
                           std::size_t member);

AblationKind ablation_kind(CellKind kind);

// -- recurrent stack --------------------------------------------------------

struct UnrollTrace {
  std::vector<StepTrace> steps;  // in processing order
  std::vector<Vec> outputs;      // H of each processed instance, in processing order
};

/// Runs the cell over instances in the given order from a zero state.
/// ModelB threads per-perspective cell states in addition to (H, C).
UnrollTrace unroll_traced(const CellParams& params, AblationKind kind,
                          const SequenceSample& sample, bool reverse = false);

/// [H_1 .. H_n] from a zero initial state.
std::vector<Vec> unroll(const CellParams& params, AblationKind kind, const SequenceSample& sample);

/// Forward pass over 1..n and an independent backward pass over n..1;
/// output i is [H^fwd_i ; H^bwd_i].
std::vector<Vec> bidirectional_unroll(const CellParams& params_fwd, const CellParams& params_bwd,
                                      AblationKind kind, const SequenceSample& sample);

// -- head ---------------------------------------------------------------------

struct AttentionResult {
  Vec context;
  Vec weights;
  Vec scores;
  std::vector<Vec> hidden;  // tanh(W_a y_i + b_a)
};

AttentionResult attention_pool(const HeadParams& head, std::span<const Vec> hs);

std::pair<Vec, Vec> classify(const HeadParams& head, const Vec& context);

/// -ln(max(probs[label], 1e-12)).
double cross_entropy(const Vec& probs, std::size_t label);

// -- full forward ---------------------------------------------------------------

/// Inverted dropout on per-instance recurrent outputs. A null rng or a zero
/// rate disables it.
struct DropoutSpec {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
};

struct ForwardTrace {
  std::size_t length = 0;
  UnrollTrace forward;
  UnrollTrace backward;  // empty unless bidirectional
  std::vector<Vec> outputs;       // y_i, aligned to instances, before dropout
  std::vector<Vec> dropout_mask;  // empty when dropout was inactive
  std::vector<Vec> pooled_inputs; // y_i after dropout
  AttentionResult attention;      // weights/scores empty without attention
  Vec context;
  Vec logits;
  Vec probs;
};

/// Full forward pass of one network on an already adapted sample.
ForwardTrace forward(const Network& net, const SequenceSample& sample, DropoutSpec dropout = {});

/// Feature-level fusion forward: adapts the sample and runs the vanilla network.
ForwardTrace feature_fusion_forward(const Model& model, const SequenceSample& sample);

/// Unweighted mean of the per-perspective networks' class distributions.
Vec score_fusion_predict(std::span<const Network> models, const SequenceSample& sample);

/// Class distribution of any model on a raw sample (dropout disabled).
Vec predict(const Model& model, const SequenceSample& sample);

/// Lowest index among maximal entries.
std::size_t argmax(const Vec& v);

}  // namespace mplstm
