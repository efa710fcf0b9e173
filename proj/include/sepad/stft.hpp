// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include "sepad/errors.hpp"
#include "sepad/util.hpp"

namespace sepad {

struct StftConfig {
  int n_fft = 400;
  int hop = 100;
  std::string window = "hann";  // hann | rect
  bool center = true;

  int bins() const { return n_fft / 2 + 1; }
  int pad() const { return center ? n_fft / 2 : 0; }

  long frames_for(long len) const {
    long total = len + 2 * pad();
    if (total < n_fft) return 0;
    return 1 + (total - n_fft) / hop;
  }

  void validate() const {
    if (n_fft < 2 || n_fft % 2 != 0) throw InvalidConfig("stft: n_fft must be even and >= 2");
    if (hop < 1 || hop > n_fft) throw InvalidConfig("stft: need 0 < hop <= n_fft");
    if (window != "hann" && window != "rect")
      throw InvalidConfig(strfmt("stft: unknown window \"%s\"", window.c_str()));
  }

  bool operator==(const StftConfig&) const = default;
};

inline Eigen::VectorXd make_window(const StftConfig& cfg) {
  Eigen::VectorXd w(cfg.n_fft);
  if (cfg.window == "rect") {
    w.setOnes();
  } else {  // periodic hann
    for (int j = 0; j < cfg.n_fft; ++j)
      w[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * j / cfg.n_fft);
  }
  return w;
}

/// Complex time-frequency representation, frames x bins, bins = n_fft/2 + 1.
struct Spectrogram {
  Eigen::MatrixXd real;
  Eigen::MatrixXd imag;

  long frames() const { return real.rows(); }
  long bins() const { return real.cols(); }
  Eigen::MatrixXd magnitude() const {
    return (real.array().square() + imag.array().square()).sqrt().matrix();
  }
};

namespace dsp_detail {

// Real-DFT analysis/synthesis expressed as dense matrices. n_fft=400 is far
// from a power of two and the per-clip cost is dominated by the network, so
// a GEMM against cached tables keeps this exact, portable, and trivially
// adjointable for backprop.
struct DftTables {
  Eigen::MatrixXd fwd_cos, fwd_sin;  // n_fft x bins
  Eigen::MatrixXd inv_cos, inv_sin;  // bins x n_fft (includes 1/N and bin weights)
};

inline const DftTables& dft_tables(int n_fft) {
  static std::map<int, DftTables> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n_fft);
  if (it != cache.end()) return it->second;

  const int bins = n_fft / 2 + 1;
  DftTables t;
  t.fwd_cos.resize(n_fft, bins);
  t.fwd_sin.resize(n_fft, bins);
  t.inv_cos.resize(bins, n_fft);
  t.inv_sin.resize(bins, n_fft);
  for (int f = 0; f < bins; ++f) {
    const double bin_weight = (f == 0 || f == n_fft / 2) ? 1.0 : 2.0;
    for (int j = 0; j < n_fft; ++j) {
      const double ang = 2.0 * std::numbers::pi * double(j) * double(f) / double(n_fft);
      t.fwd_cos(j, f) = std::cos(ang);
      t.fwd_sin(j, f) = -std::sin(ang);
      t.inv_cos(f, j) = bin_weight * std::cos(ang) / n_fft;
      t.inv_sin(f, j) = -bin_weight * std::sin(ang) / n_fft;
    }
  }
  return cache.emplace(n_fft, std::move(t)).first->second;
}

// Windowed frame matrix (frames x n_fft) with reflect padding when centered.
inline Eigen::MatrixXd frame_signal(const std::vector<double>& x, const StftConfig& cfg) {
  const long len = long(x.size());
  const long pad = cfg.pad();
  const long frames = cfg.frames_for(len);
  const Eigen::VectorXd w = make_window(cfg);

  auto sample = [&](long i) -> double {
    i -= pad;  // padded index -> signal index
    if (i < 0) i = -i;
    if (i >= len) i = 2 * (len - 1) - i;
    return x[size_t(i)];
  };

  Eigen::MatrixXd F(frames, cfg.n_fft);
  for (long t = 0; t < frames; ++t)
    for (int j = 0; j < cfg.n_fft; ++j) F(t, j) = sample(t * cfg.hop + j) * w[j];
  return F;
}

}  // namespace dsp_detail

inline Spectrogram stft(const std::vector<double>& x, const StftConfig& cfg) {
  cfg.validate();
  if (x.empty()) throw InvalidInput("stft: empty input");
  for (double v : x)
    if (!std::isfinite(v)) throw InvalidInput("stft: non-finite input sample");
  if (cfg.center) {
    if (long(x.size()) < cfg.pad() + 1)
      throw InvalidInput("stft: input shorter than n_fft/2 with center=true");
  } else if (long(x.size()) < cfg.n_fft) {
    throw InvalidInput("stft: input shorter than n_fft with center=false");
  }

  const auto& tab = dsp_detail::dft_tables(cfg.n_fft);
  Eigen::MatrixXd F = dsp_detail::frame_signal(x, cfg);
  Spectrogram s;
  s.real = F * tab.fwd_cos;
  s.imag = F * tab.fwd_sin;
  return s;
}

/// Weighted overlap-add inverse. Exact (up to rounding) for any window/hop
/// whose squared-window envelope stays positive over the output region;
/// otherwise throws ColaViolation.
inline std::vector<double> istft(const Spectrogram& S, const StftConfig& cfg, long length) {
  cfg.validate();
  if (length <= 0) throw InvalidInput("istft: non-positive length");
  if (S.real.rows() != S.imag.rows() || S.real.cols() != S.imag.cols())
    throw ShapeMismatch("istft: real/imag shape mismatch");
  if (S.bins() != cfg.bins())
    throw ShapeMismatch(strfmt("istft: %ld bins, config expects %d", S.bins(), cfg.bins()));
  if (S.frames() != cfg.frames_for(length))
    throw ShapeMismatch(strfmt("istft: %ld frames inconsistent with length %ld (want %ld)",
                               S.frames(), length, cfg.frames_for(length)));

  const auto& tab = dsp_detail::dft_tables(cfg.n_fft);
  const Eigen::VectorXd w = make_window(cfg);
  const long frames = S.frames();
  const long pad = cfg.pad();
  const long padded = (frames - 1) * cfg.hop + cfg.n_fft;
  if (padded < pad + length)
    throw ColaViolation("istft: frames do not cover the output range for this hop");

  Eigen::MatrixXd Ft = S.real * tab.inv_cos + S.imag * tab.inv_sin;  // frames x n_fft

  std::vector<double> buf(size_t(padded), 0.0), env(size_t(padded), 0.0);
  for (long t = 0; t < frames; ++t) {
    const long off = t * cfg.hop;
    for (int j = 0; j < cfg.n_fft; ++j) {
      buf[size_t(off + j)] += Ft(t, j) * w[j];
      env[size_t(off + j)] += w[j] * w[j];
    }
  }
  std::vector<double> out(static_cast<size_t>(length));
  for (long i = 0; i < length; ++i) {
    const double e = env[size_t(i + pad)];
    if (e < 1e-10) throw ColaViolation("istft: zero window envelope inside the output range");
    out[size_t(i)] = buf[size_t(i + pad)] / e;
  }
  return out;
}

}  // namespace sepad
