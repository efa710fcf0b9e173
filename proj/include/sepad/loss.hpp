// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <vector>

#include "sepad/graph.hpp"
#include "sepad/tensor.hpp"

namespace sepad {

struct LossWeights {
  double alpha = 0.5;  // time-domain L1 term
  double beta = 6.0;   // real-plane term
  double gamma = 1.0;  // imaginary-plane term
  // The spectral terms compare absolute values of the real/imag planes;
  // setting literal_abs=false switches to signed components.
  bool literal_abs = true;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0)
      throw InvalidConfig("loss: weights must be non-negative");
    if (alpha == 0 && beta == 0 && gamma == 0)
      throw InvalidConfig("loss: at least one weight must be positive");
  }
};

/// alpha * mean_t |tw - y| + beta * mean_tf (|Tr| - |Yr|)^2
///                         + gamma * mean_tf (|Ti| - |Yi|)^2
/// as graph nodes; targets are expected to already include the mixing scale.
template <typename S>
int separation_loss_node(Graph<S>& g, int y, int yr, int yi, int tgt_wave, int tgt_r, int tgt_i,
                         const LossWeights& w) {
  w.validate();
  int l_time = g.mean_all(g.abs(g.sub(tgt_wave, y)));
  int dr = w.literal_abs ? g.sub(g.abs(tgt_r), g.abs(yr)) : g.sub(tgt_r, yr);
  int di = w.literal_abs ? g.sub(g.abs(tgt_i), g.abs(yi)) : g.sub(tgt_i, yi);
  int l_real = g.mean_all(g.mul(dr, dr));
  int l_imag = g.mean_all(g.mul(di, di));
  return g.add(g.add(g.scale(l_time, S(w.alpha)), g.scale(l_real, S(w.beta))),
               g.scale(l_imag, S(w.gamma)));
}

/// Value-only form over plain tensors.
template <typename S>
S separation_loss(const std::vector<S>& y, const Tensor<S>& yr, const Tensor<S>& yi,
                  const std::vector<S>& target_wave, const Tensor<S>& target_r,
                  const Tensor<S>& target_i, const LossWeights& w) {
  if (y.size() != target_wave.size()) throw ShapeMismatch("loss: waveform length mismatch");
  for (S v : y)
    if (!std::isfinite(double(v))) throw InvalidInput("loss: non-finite waveform");
  for (S v : target_wave)
    if (!std::isfinite(double(v))) throw InvalidInput("loss: non-finite target waveform");
  auto check = [](const Tensor<S>& t) {
    for (S v : t.v)
      if (!std::isfinite(double(v))) throw InvalidInput("loss: non-finite spectrogram");
  };
  check(yr);
  check(yi);
  check(target_r);
  check(target_i);

  Graph<S> g;
  Tensor<S> yw({long(y.size())}), tw({long(target_wave.size())});
  yw.v.assign(y.begin(), y.end());
  tw.v.assign(target_wave.begin(), target_wave.end());
  int loss = separation_loss_node(g, g.input(yw), g.input(yr), g.input(yi), g.input(tw),
                                  g.input(target_r), g.input(target_i), w);
  return g.val(loss).v[0];
}

}  // namespace sepad
