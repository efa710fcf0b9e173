// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <vector>

#include "sepad/errors.hpp"
#include "sepad/stft.hpp"
#include "sepad/tensor.hpp"
#include "sepad/util.hpp"

namespace sepad {

struct MixConfig {
  double delta_db = -5.0;   // non-target level relative to the target, in dB
  double rms_floor = 1e-6;  // below this RMS a signal counts as silent

  void validate() const {
    if (!(rms_floor > 0)) throw InvalidConfig("mix: rms_floor must be > 0");
  }
};

inline double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double ss = 0.0;
  for (double v : x) ss += v * v;
  return std::sqrt(ss / double(x.size()));
}

/// Scaling factor s with 20*log10(rms(s*n)/rms(d)) == delta_db.
inline double match_db_scale(const std::vector<double>& d, const std::vector<double>& n,
                             const MixConfig& cfg) {
  cfg.validate();
  const double rd = rms(d), rn = rms(n);
  if (rd < cfg.rms_floor)
    throw SilentSignal(strfmt("target RMS %.3g below floor %.3g", rd, cfg.rms_floor));
  if (rn < cfg.rms_floor)
    throw SilentSignal(strfmt("non-target RMS %.3g below floor %.3g", rn, cfg.rms_floor));
  return std::pow(10.0, cfg.delta_db / 20.0) * rd / rn;
}

struct MixResult {
  std::vector<double> wave;
  Spectrogram spec;
};

/// m(t) = d(t) + s*n(t), plus its spectrogram. No clipping or renormalization
/// is applied; the sum may exceed [-1, 1].
inline MixResult mix(const std::vector<double>& d, const std::vector<double>& n, double s,
                     const StftConfig& cfg) {
  if (d.size() != n.size())
    throw ShapeMismatch(strfmt("mix: length mismatch (%zu vs %zu)", d.size(), n.size()));
  MixResult r;
  if (s == 0.0) {
    r.wave = d;
  } else {
    r.wave.resize(d.size());
    for (size_t i = 0; i < d.size(); ++i) r.wave[i] = d[i] + s * n[i];
  }
  r.spec = stft(r.wave, cfg);
  return r;
}

/// Stacks the network input planes: 0 = real, 1 = imag, 2 = magnitude.
inline Tensor<double> make_input_features(const Spectrogram& S) {
  const long T = S.frames(), F = S.bins();
  if (S.imag.rows() != T || S.imag.cols() != F)
    throw ShapeMismatch("features: real/imag shape mismatch");
  Tensor<double> t({3, T, F});
  for (long i = 0; i < T; ++i)
    for (long j = 0; j < F; ++j) {
      const double re = S.real(i, j), im = S.imag(i, j);
      t.at(0, i, j) = re;
      t.at(1, i, j) = im;
      t.at(2, i, j) = std::sqrt(re * re + im * im);
    }
  return t;
}

}  // namespace sepad
