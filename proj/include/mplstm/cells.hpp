#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "mplstm/math.hpp"

namespace mplstm {

/// Raised when a caller breaks a documented precondition that is not a shape
/// mismatch (for example, ModelB stepping without per-perspective memories).
class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Weights of one gate (or the candidate) of one perspective.
///
/// w_s multiplies the perspective's input, w_h the previous joint hidden
/// output and w_c the previous joint cell state. All three peepholes are full
/// matrices.
struct GateParams {
  Mat w_s;  // hidden x input
  Mat w_h;  // hidden x hidden
  Mat w_c;  // hidden x hidden
  Vec b;    // hidden

  static GateParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  static GateParams glorot(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
};

struct PerspectiveParams {
  GateParams input;
  GateParams forget;
  GateParams output;
  GateParams candidate;
};

/// One parameter family per perspective, all sharing (input_dim, hidden_dim).
struct CellParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::vector<PerspectiveParams> perspectives;

  std::size_t num_perspectives() const { return perspectives.size(); }

  static CellParams zeros(std::size_t m, std::size_t input_dim, std::size_t hidden_dim);
  /// Glorot-uniform weights, zero biases.
  static CellParams glorot(std::size_t m, std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

  /// Throws ShapeError unless every record matches (input_dim, hidden_dim).
  void check() const;
};

/// Recurrent state between cells: joint hidden output H and joint cell state C.
struct StepState {
  Vec h;
  Vec c;

  static StepState zeros(std::size_t hidden_dim) { return {Vec(hidden_dim), Vec(hidden_dim)}; }
};

enum class AblationKind { ModelA, ModelB, ModelC, Full };

std::string_view to_string(AblationKind kind);

/// Everything one step computed, retained for the backward pass.
struct StepTrace {
  AblationKind kind = AblationKind::Full;
  std::vector<Vec> inputs;
  StepState prev;
  /// ModelB only: each perspective's intermediate state from the previous instance.
  std::vector<Vec> prev_per_perspective;
  /// C_{i-1} as seen by peepholes and the first state update (zero for ModelC).
  Vec peep;

  std::vector<Vec> input_gate;
  std::vector<Vec> forget_gate;
  std::vector<Vec> output_gate;
  std::vector<Vec> candidate;
  /// Intermediate cell states c^1..c^m; the last one is the new joint state.
  std::vector<Vec> cell;
  /// Per-perspective hidden vectors h^p.
  std::vector<Vec> hidden;
  Vec tanh_c;
  Vec out_h;
};

/// One joint step: gates for every perspective read (H_{i-1}, C_{i-1}); the
/// cell state is then folded through perspectives 1..m in order and the new
/// hidden output is the sum of the per-perspective hidden vectors.
std::pair<StepState, StepTrace> mp_cell_step(const CellParams& params,
                                             std::span<const Vec> inputs,
                                             const StepState& prev);

/// Single-stream peephole LSTM; exactly mp_cell_step with one perspective.
std::pair<StepState, StepTrace> vanilla_cell_step(const CellParams& params, const Vec& input,
                                                  const StepState& prev);

/// Ablated step.
///   ModelA: the first state update drops F^1 * C_{i-1}.
///   ModelB: perspective p >= 2 chains from its own previous-instance state
///           instead of c^{p-1} of this instance; needs prev_per_perspective.
///   ModelC: C_{i-1} is replaced by zeros everywhere.
///   Full:   identical to mp_cell_step.
std::pair<StepState, StepTrace> ablation_cell_step(AblationKind kind, const CellParams& params,
                                                   std::span<const Vec> inputs,
                                                   const StepState& prev,
                                                   std::span<const Vec> prev_per_perspective = {});

/// Adjoint of the carried state. per_perspective is used by ModelB only.
struct StateGrad {
  Vec h;
  Vec c;
  std::vector<Vec> per_perspective;

  static StateGrad zeros(std::size_t m, std::size_t hidden_dim);
};

/// Reverse-mode step.
///
/// d_h_out is the total adjoint of H_i (downstream use plus the next step);
/// next carries the adjoint of C_i (and, for ModelB, of every c^p_i) coming
/// from the next step. Parameter adjoints accumulate into grads. Returns the
/// adjoint of the previous state. If d_inputs is non-null the adjoint of each
/// input vector is accumulated there.
StateGrad cell_step_backward(const CellParams& params, const StepTrace& trace,
                             std::span<const double> d_h_out, const StateGrad& next,
                             CellParams& grads, std::vector<Vec>* d_inputs = nullptr);

}  // namespace mplstm
