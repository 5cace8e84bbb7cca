#include "mplstm/cells.hpp"

#include <string>

namespace mplstm {

namespace {

void check_gate(const GateParams& g, std::size_t input_dim, std::size_t hidden_dim) {
  auto expect = [](const Mat& w, std::size_t r, std::size_t c, const char* name) {
    if (w.rows() != r || w.cols() != c) {
      throw ShapeError(std::string("cell parameter ") + name + " is " + shape_string(w) +
                       ", expected Mat(" + std::to_string(r) + "x" + std::to_string(c) + ")");
    }
  };
  expect(g.w_s, hidden_dim, input_dim, "w_s");
  expect(g.w_h, hidden_dim, hidden_dim, "w_h");
  expect(g.w_c, hidden_dim, hidden_dim, "w_c");
  if (g.b.size() != hidden_dim) {
    throw ShapeError("cell parameter b is " + shape_string(g.b) + ", expected Vec(" +
                     std::to_string(hidden_dim) + ")");
  }
}

// z = W_s x + W_h h + W_c c + b
Vec preactivation(const GateParams& g, const Vec& x, const Vec& h, const Vec& c) {
  Vec z = g.b;
  matvec_acc(g.w_s, x.span(), z.span());
  matvec_acc(g.w_h, h.span(), z.span());
  matvec_acc(g.w_c, c.span(), z.span());
  return z;
}

void check_step_args(const CellParams& params, std::span<const Vec> inputs, const StepState& prev) {
  if (inputs.size() != params.num_perspectives()) {
    throw ShapeError("cell step: got " + std::to_string(inputs.size()) +
                     " perspective inputs for a cell with " +
                     std::to_string(params.num_perspectives()) + " perspectives");
  }
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    if (inputs[p].size() != params.input_dim) {
      throw ShapeError("cell step: input " + std::to_string(p) + " is " +
                       shape_string(inputs[p]) + ", cell expects input_dim " +
                       std::to_string(params.input_dim));
    }
  }
  if (prev.h.size() != params.hidden_dim || prev.c.size() != params.hidden_dim) {
    throw ShapeError("cell step: previous state h " + shape_string(prev.h) + " / c " +
                     shape_string(prev.c) + " does not match hidden_dim " +
                     std::to_string(params.hidden_dim));
  }
}

// Adjoint of one gate given the pre-activation adjoint dz.
void gate_backward(const GateParams& g, const StepTrace& t, std::size_t p,
                   std::span<const double> dz, GateParams& grad, StateGrad& d_prev,
                   std::vector<Vec>* d_inputs, bool peep_live) {
  outer_acc(dz, t.inputs[p].span(), grad.w_s);
  outer_acc(dz, t.prev.h.span(), grad.w_h);
  outer_acc(dz, t.peep.span(), grad.w_c);
  axpy(1.0, dz, grad.b.span());
  matvec_t_acc(g.w_h, dz, d_prev.h.span());
  if (peep_live) matvec_t_acc(g.w_c, dz, d_prev.c.span());
  if (d_inputs != nullptr) matvec_t_acc(g.w_s, dz, (*d_inputs)[p].span());
}

}  // namespace

std::string_view to_string(AblationKind kind) {
  switch (kind) {
    case AblationKind::ModelA: return "ModelA";
    case AblationKind::ModelB: return "ModelB";
    case AblationKind::ModelC: return "ModelC";
    case AblationKind::Full: return "Full";
  }
  return "?";
}

GateParams GateParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  return {Mat(hidden_dim, input_dim), Mat(hidden_dim, hidden_dim), Mat(hidden_dim, hidden_dim),
          Vec(hidden_dim)};
}

GateParams GateParams::glorot(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  GateParams g;
  g.w_s = init_glorot(rng, hidden_dim, input_dim);
  g.w_h = init_glorot(rng, hidden_dim, hidden_dim);
  g.w_c = init_glorot(rng, hidden_dim, hidden_dim);
  g.b = Vec(hidden_dim);
  return g;
}

CellParams CellParams::zeros(std::size_t m, std::size_t input_dim, std::size_t hidden_dim) {
  CellParams params{input_dim, hidden_dim, {}};
  for (std::size_t p = 0; p < m; ++p) {
    params.perspectives.push_back({GateParams::zeros(input_dim, hidden_dim),
                                   GateParams::zeros(input_dim, hidden_dim),
                                   GateParams::zeros(input_dim, hidden_dim),
                                   GateParams::zeros(input_dim, hidden_dim)});
  }
  return params;
}

CellParams CellParams::glorot(std::size_t m, std::size_t input_dim, std::size_t hidden_dim,
                              Rng& rng) {
  CellParams params{input_dim, hidden_dim, {}};
  for (std::size_t p = 0; p < m; ++p) {
    PerspectiveParams pp;
    pp.input = GateParams::glorot(input_dim, hidden_dim, rng);
    pp.forget = GateParams::glorot(input_dim, hidden_dim, rng);
    pp.output = GateParams::glorot(input_dim, hidden_dim, rng);
    pp.candidate = GateParams::glorot(input_dim, hidden_dim, rng);
    params.perspectives.push_back(std::move(pp));
  }
  return params;
}

void CellParams::check() const {
  if (perspectives.empty()) throw ShapeError("cell parameters have zero perspectives");
  for (const auto& pp : perspectives) {
    check_gate(pp.input, input_dim, hidden_dim);
    check_gate(pp.forget, input_dim, hidden_dim);
    check_gate(pp.output, input_dim, hidden_dim);
    check_gate(pp.candidate, input_dim, hidden_dim);
  }
}

StateGrad StateGrad::zeros(std::size_t m, std::size_t hidden_dim) {
  return {Vec(hidden_dim), Vec(hidden_dim), std::vector<Vec>(m, Vec(hidden_dim))};
}

std::pair<StepState, StepTrace> ablation_cell_step(AblationKind kind, const CellParams& params,
                                                   std::span<const Vec> inputs,
                                                   const StepState& prev,
                                                   std::span<const Vec> prev_per_perspective) {
  check_step_args(params, inputs, prev);
  const std::size_t m = params.num_perspectives();
  const std::size_t hd = params.hidden_dim;
  if (kind == AblationKind::ModelB) {
    if (prev_per_perspective.size() != m) {
      throw ContractError("ModelB step requires " + std::to_string(m) +
                          " per-perspective cell states, got " +
                          std::to_string(prev_per_perspective.size()));
    }
    for (const auto& c : prev_per_perspective) {
      if (c.size() != hd) {
        throw ShapeError("ModelB per-perspective state " + shape_string(c) +
                         " does not match hidden_dim " + std::to_string(hd));
      }
    }
  }

  StepTrace t;
  t.kind = kind;
  t.inputs.assign(inputs.begin(), inputs.end());
  t.prev = prev;
  if (kind == AblationKind::ModelB) {
    t.prev_per_perspective.assign(prev_per_perspective.begin(), prev_per_perspective.end());
  }
  t.peep = kind == AblationKind::ModelC ? Vec(hd) : prev.c;

  // All gates for all perspectives first, then the state chain.
  for (std::size_t p = 0; p < m; ++p) {
    const auto& pp = params.perspectives[p];
    t.input_gate.push_back(sigmoid(preactivation(pp.input, inputs[p], prev.h, t.peep)));
    t.candidate.push_back(tanh_act(preactivation(pp.candidate, inputs[p], prev.h, t.peep)));
    t.forget_gate.push_back(sigmoid(preactivation(pp.forget, inputs[p], prev.h, t.peep)));
    t.output_gate.push_back(sigmoid(preactivation(pp.output, inputs[p], prev.h, t.peep)));
  }

  for (std::size_t p = 0; p < m; ++p) {
    Vec c(hd);
    const Vec* carry = nullptr;
    if (p == 0) {
      if (kind != AblationKind::ModelA) carry = &t.peep;
    } else if (kind == AblationKind::ModelB) {
      carry = &t.prev_per_perspective[p];
    } else {
      carry = &t.cell[p - 1];
    }
    const Vec& f = t.forget_gate[p];
    const Vec& in = t.input_gate[p];
    const Vec& g = t.candidate[p];
    for (std::size_t k = 0; k < hd; ++k) {
      c[k] = (carry ? f[k] * (*carry)[k] : 0.0) + in[k] * g[k];
    }
    t.cell.push_back(std::move(c));
  }

  t.tanh_c = tanh_act(t.cell.back());
  t.out_h = Vec(hd);
  for (std::size_t p = 0; p < m; ++p) {
    Vec h(hd);
    for (std::size_t k = 0; k < hd; ++k) h[k] = t.output_gate[p][k] * t.tanh_c[k];
    axpy(1.0, h.span(), t.out_h.span());
    t.hidden.push_back(std::move(h));
  }

  StepState next{t.out_h, t.cell.back()};
  return {std::move(next), std::move(t)};
}

std::pair<StepState, StepTrace> mp_cell_step(const CellParams& params,
                                             std::span<const Vec> inputs,
                                             const StepState& prev) {
  return ablation_cell_step(AblationKind::Full, params, inputs, prev);
}

std::pair<StepState, StepTrace> vanilla_cell_step(const CellParams& params, const Vec& input,
                                                  const StepState& prev) {
  if (params.num_perspectives() != 1) {
    throw ShapeError("vanilla_cell_step: parameters have " +
                     std::to_string(params.num_perspectives()) + " perspectives, expected 1");
  }
  return mp_cell_step(params, std::span<const Vec>(&input, 1), prev);
}

StateGrad cell_step_backward(const CellParams& params, const StepTrace& t,
                             std::span<const double> d_h_out, const StateGrad& next,
                             CellParams& grads, std::vector<Vec>* d_inputs) {
  const std::size_t m = params.num_perspectives();
  const std::size_t hd = params.hidden_dim;
  if (t.cell.size() != m || d_h_out.size() != hd || next.c.size() != hd ||
      grads.num_perspectives() != m) {
    throw ShapeError("cell_step_backward: trace, adjoints and parameters disagree in shape");
  }
  const bool model_b = t.kind == AblationKind::ModelB;
  if (model_b && next.per_perspective.size() != m) {
    throw ContractError("cell_step_backward: ModelB needs per-perspective adjoints");
  }
  if (d_inputs != nullptr && d_inputs->size() != m) d_inputs->assign(m, Vec(params.input_dim));

  StateGrad d_prev = StateGrad::zeros(model_b ? m : 0, hd);

  // H = sum_p O^p * tanh(C)
  Vec d_tanh(hd);
  std::vector<Vec> d_out_gate(m, Vec(hd));
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t k = 0; k < hd; ++k) {
      d_out_gate[p][k] = d_h_out[k] * t.tanh_c[k];
      d_tanh[k] += d_h_out[k] * t.output_gate[p][k];
    }
  }

  std::vector<Vec> d_cell(m, Vec(hd));
  for (std::size_t k = 0; k < hd; ++k) {
    d_cell[m - 1][k] = next.c[k] + d_tanh[k] * (1.0 - t.tanh_c[k] * t.tanh_c[k]);
  }
  if (model_b) {
    for (std::size_t p = 0; p < m; ++p) axpy(1.0, next.per_perspective[p].span(), d_cell[p].span());
  }

  const bool peep_live = t.kind != AblationKind::ModelC;
  Vec dz(hd);
  for (std::size_t pi = m; pi-- > 0;) {
    const auto& pp = params.perspectives[pi];
    auto& gp = grads.perspectives[pi];
    const Vec& dc = d_cell[pi];
    const Vec& f = t.forget_gate[pi];
    const Vec& in = t.input_gate[pi];
    const Vec& g = t.candidate[pi];

    const Vec* carry = nullptr;
    Vec* d_carry = nullptr;
    if (pi == 0) {
      if (t.kind != AblationKind::ModelA) {
        carry = &t.peep;
        if (peep_live) d_carry = &d_prev.c;
      }
    } else if (model_b) {
      carry = &t.prev_per_perspective[pi];
      d_carry = &d_prev.per_perspective[pi];
    } else {
      carry = &t.cell[pi - 1];
      d_carry = &d_cell[pi - 1];
    }

    // forget gate
    if (carry != nullptr) {
      for (std::size_t k = 0; k < hd; ++k) dz[k] = dc[k] * (*carry)[k] * f[k] * (1.0 - f[k]);
      gate_backward(pp.forget, t, pi, dz.span(), gp.forget, d_prev, d_inputs, peep_live);
      if (d_carry != nullptr) {
        for (std::size_t k = 0; k < hd; ++k) (*d_carry)[k] += dc[k] * f[k];
      }
    }
    // input gate
    for (std::size_t k = 0; k < hd; ++k) dz[k] = dc[k] * g[k] * in[k] * (1.0 - in[k]);
    gate_backward(pp.input, t, pi, dz.span(), gp.input, d_prev, d_inputs, peep_live);
    // candidate
    for (std::size_t k = 0; k < hd; ++k) dz[k] = dc[k] * in[k] * (1.0 - g[k] * g[k]);
    gate_backward(pp.candidate, t, pi, dz.span(), gp.candidate, d_prev, d_inputs, peep_live);
    // output gate
    const Vec& o = t.output_gate[pi];
    for (std::size_t k = 0; k < hd; ++k) dz[k] = d_out_gate[pi][k] * o[k] * (1.0 - o[k]);
    gate_backward(pp.output, t, pi, dz.span(), gp.output, d_prev, d_inputs, peep_live);
  }
  return d_prev;
}

}  // namespace mplstm
