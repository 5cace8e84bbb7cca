#pragma once

#include <cstddef>
#include <vector>

#include "mplstm/cells.hpp"
#include "mplstm/network.hpp"
#include "mplstm/training.hpp"

namespace mplstm::test {

inline void fill_cell(CellParams& params, double weight, double bias) {
  for (auto& pp : params.perspectives) {
    for (GateParams* g : {&pp.input, &pp.forget, &pp.output, &pp.candidate}) {
      g->w_s.fill(weight);
      g->w_h.fill(weight);
      g->w_c.fill(weight);
      g->b.fill(bias);
    }
  }
}

/// Glorot weights with N(0, 0.5^2) biases, so bias paths are non-trivial.
inline CellParams random_cell(Rng& rng, std::size_t m, std::size_t d, std::size_t h) {
  CellParams p = CellParams::glorot(m, d, h, rng);
  for (auto& pp : p.perspectives) {
    for (GateParams* g : {&pp.input, &pp.forget, &pp.output, &pp.candidate}) {
      for (auto& v : g->b) v = 0.5 * rng.normal();
    }
  }
  return p;
}

inline Vec random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  Vec v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

inline std::vector<Vec> random_inputs(Rng& rng, std::size_t m, std::size_t d, double scale = 1.0) {
  std::vector<Vec> xs;
  for (std::size_t p = 0; p < m; ++p) xs.push_back(random_vec(rng, d, scale));
  return xs;
}

inline SequenceSample random_sample(Rng& rng, std::size_t m, std::size_t n, std::size_t d,
                                    std::size_t k) {
  SequenceSample s;
  s.perspectives.assign(m, std::vector<Vec>(n));
  for (auto& seq : s.perspectives) {
    for (auto& inst : seq) inst = random_vec(rng, d);
  }
  s.label = rng.below(k);
  return s;
}

inline CoreSpec core(AblationKind kind, std::size_t m, std::size_t d, std::size_t h, std::size_t k,
                     bool bi, bool attention = true) {
  CoreSpec spec;
  spec.kind = kind;
  spec.num_perspectives = m;
  spec.input_dim = d;
  spec.hidden_dim = h;
  spec.num_classes = k;
  spec.bidirectional = bi;
  spec.attention = attention;
  return spec;
}

inline Network random_network(Rng& rng, const CoreSpec& spec) {
  Network net{spec, NetworkParams::glorot(spec, rng)};
  for (auto& t : named_tensors(net.params)) {
    if (t.name.ends_with(".b") || t.name.ends_with("b_a") || t.name.ends_with("b_out")) {
      for (auto& v : t.data) v = 0.5 * rng.normal();
    }
  }
  return net;
}

}  // namespace mplstm::test
