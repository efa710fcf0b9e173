// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "sepad/mix.hpp"
#include "sepad/stft.hpp"
#include "test_util.hpp"

using namespace sepad;
using namespace sepad_test;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("stft: frame count for the 400/100 configuration", "[dsp]") {
  StftConfig cfg;
  auto x = random_wave(32000, 1);
  Spectrogram s = stft(x, cfg);
  CHECK(s.frames() == 321);
  CHECK(s.bins() == 201);

  StftConfig nc = cfg;
  nc.center = false;
  Spectrogram s2 = stft(x, nc);
  CHECK(s2.frames() == 1 + (32000 - 400) / 100);
}

TEST_CASE("stft: DC input concentrates in bin 0", "[dsp]") {
  StftConfig cfg;
  cfg.window = "rect";  // hann smears DC into bins +-1 by construction
  std::vector<double> x(8000, 0.25);
  Spectrogram s = stft(x, cfg);
  for (long t = 0; t < s.frames(); ++t) {
    double dc = std::abs(s.real(t, 0));
    REQUIRE(dc > 0);
    for (long f = 1; f < s.bins(); ++f) {
      double m = std::hypot(s.real(t, f), s.imag(t, f));
      REQUIRE(m / dc < 1e-10);
    }
  }
}

TEST_CASE("stft: Parseval identity per frame set", "[dsp][oracle]") {
  StftConfig cfg;
  auto x = random_wave(16000, 42);

  // independent time-domain side: reflect-pad and window by hand
  const long pad = cfg.n_fft / 2;
  auto sample = [&](long i) {
    i -= pad;
    if (i < 0) i = -i;
    if (i >= long(x.size())) i = 2 * (long(x.size()) - 1) - i;
    return x[size_t(i)];
  };
  Eigen::VectorXd w = make_window(cfg);
  const long frames = cfg.frames_for(long(x.size()));
  double time_energy = 0;
  for (long t = 0; t < frames; ++t)
    for (int j = 0; j < cfg.n_fft; ++j) {
      double v = sample(t * cfg.hop + j) * w[j];
      time_energy += v * v;
    }

  Spectrogram s = stft(x, cfg);
  double freq_energy = 0;
  for (long t = 0; t < s.frames(); ++t)
    for (long f = 0; f < s.bins(); ++f) {
      double weight = (f == 0 || f == s.bins() - 1) ? 1.0 : 2.0;
      freq_energy += weight * (s.real(t, f) * s.real(t, f) + s.imag(t, f) * s.imag(t, f));
    }
  freq_energy /= cfg.n_fft;

  CHECK(std::abs(freq_energy - time_energy) / time_energy < 1e-6);
}

TEST_CASE("stft: linearity", "[dsp]") {
  StftConfig cfg;
  auto x = random_wave(9000, 7), z = random_wave(9000, 8);
  const double a = 0.7, b = -1.3;
  std::vector<double> mixv(x.size());
  for (size_t i = 0; i < x.size(); ++i) mixv[i] = a * x[i] + b * z[i];
  Spectrogram sm = stft(mixv, cfg), sx = stft(x, cfg), sz = stft(z, cfg);
  double scale = sm.real.cwiseAbs().maxCoeff() + sm.imag.cwiseAbs().maxCoeff();
  CHECK((sm.real - a * sx.real - b * sz.real).cwiseAbs().maxCoeff() / scale < 1e-7);
  CHECK((sm.imag - a * sx.imag - b * sz.imag).cwiseAbs().maxCoeff() / scale < 1e-7);
}

TEST_CASE("stft: input validation", "[dsp]") {
  StftConfig cfg;
  CHECK_THROWS_AS(stft(std::vector<double>{}, cfg), InvalidInput);
  std::vector<double> bad(1000, 0.0);
  bad[10] = std::nan("");
  CHECK_THROWS_AS(stft(bad, cfg), InvalidInput);
  StftConfig badcfg;
  badcfg.hop = 0;
  CHECK_THROWS_AS(stft(random_wave(1000, 1), badcfg), InvalidConfig);
}

TEST_CASE("istft: round trips", "[dsp][oracle]") {
  StftConfig cfg;

  SECTION("white noise, 2 s") {
    auto x = random_wave(32000, 99);
    auto y = istft(stft(x, cfg), cfg, long(x.size()));
    CHECK(max_abs_diff(x, y) < 1e-6);
  }
  SECTION("pure 1 kHz sine, 2 s, relative L2") {
    auto x = sine_wave(32000, 1000.0);
    auto y = istft(stft(x, cfg), cfg, long(x.size()));
    double num = 0, den = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      num += (x[i] - y[i]) * (x[i] - y[i]);
      den += x[i] * x[i];
    }
    CHECK(std::sqrt(num / den) < 1e-6);
  }
  SECTION("ragged length not divisible by hop") {
    auto x = random_wave(32321, 5);
    auto y = istft(stft(x, cfg), cfg, long(x.size()));
    CHECK(max_abs_diff(x, y) < 1e-6);
  }
  SECTION("all-zero spectrogram gives silence") {
    Spectrogram s;
    s.real = Eigen::MatrixXd::Zero(321, 201);
    s.imag = Eigen::MatrixXd::Zero(321, 201);
    auto y = istft(s, cfg, 32000);
    for (double v : y) REQUIRE(v == 0.0);
  }
}

TEST_CASE("istft: shape and COLA errors", "[dsp]") {
  StftConfig cfg;
  auto x = random_wave(32000, 1);
  Spectrogram s = stft(x, cfg);

  SECTION("frame count inconsistent with length") {
    CHECK_THROWS_AS(istft(s, cfg, 16000), ShapeMismatch);
  }
  SECTION("bins inconsistent with config") {
    Spectrogram t;
    t.real = Eigen::MatrixXd::Zero(321, 101);
    t.imag = Eigen::MatrixXd::Zero(321, 101);
    CHECK_THROWS_AS(istft(t, cfg, 32000), ShapeMismatch);
  }
  SECTION("hann with hop == n_fft has a zero envelope") {
    StftConfig bad;
    bad.hop = bad.n_fft;  // non-overlapping hann frames
    Spectrogram t = stft(x, bad);
    CHECK_THROWS_AS(istft(t, bad, 32000), ColaViolation);
  }
}

TEST_CASE("match_db_scale: closed forms", "[dsp]") {
  MixConfig cfg;

  SECTION("equal RMS at -5 dB") {
    auto d = sine_wave(16000, 440.0, 0.3);
    auto n = sine_wave(16000, 440.0, 0.3, 16000.0, 0.4);  // same amplitude, shifted phase
    double s = match_db_scale(d, n, cfg);
    CHECK(s == Catch::Approx(std::pow(10.0, -0.25)).epsilon(1e-9));
  }
  SECTION("non-target twice as loud at 0 dB gives s = 0.5") {
    auto d = random_wave(8000, 3);
    std::vector<double> n(d.size());
    for (size_t i = 0; i < d.size(); ++i) n[i] = 2.0 * d[i];
    MixConfig zero = cfg;
    zero.delta_db = 0.0;
    CHECK(match_db_scale(d, n, zero) == Catch::Approx(0.5).epsilon(1e-12));
  }
  SECTION("realized level difference equals delta_db to 1e-9 dB") {
    auto d = random_wave(16000, 10, 0.4);
    auto n = random_wave(16000, 11, 0.2);
    double s = match_db_scale(d, n, cfg);
    std::vector<double> sn(n.size());
    for (size_t i = 0; i < n.size(); ++i) sn[i] = s * n[i];
    double realized = 20.0 * std::log10(rms(sn) / rms(d));
    CHECK(std::abs(realized - cfg.delta_db) < 1e-9);
  }
  SECTION("scale equivariance in the target") {
    auto d = random_wave(4000, 1, 0.3);
    auto n = random_wave(4000, 2, 0.3);
    double base = match_db_scale(d, n, cfg);
    for (double k : {0.5, 2.0, 7.25}) {
      std::vector<double> kd(d.size());
      for (size_t i = 0; i < d.size(); ++i) kd[i] = k * d[i];
      CHECK(match_db_scale(kd, n, cfg) == Catch::Approx(k * base).epsilon(1e-12));
    }
  }
  SECTION("silent inputs are rejected") {
    std::vector<double> quiet(1000, 1e-9), ok(1000, 0.1);
    CHECK_THROWS_AS(match_db_scale(quiet, ok, cfg), SilentSignal);
    CHECK_THROWS_AS(match_db_scale(ok, quiet, cfg), SilentSignal);
  }
}

TEST_CASE("mix: algebraic cases", "[dsp]") {
  StftConfig cfg;
  auto d = random_wave(32000, 21, 0.4);

  SECTION("s = 0 returns stft(d) bit-for-bit") {
    auto r = mix(d, random_wave(32000, 22), 0.0, cfg);
    Spectrogram ref = stft(d, cfg);
    REQUIRE(r.wave == d);
    CHECK(std::memcmp(r.spec.real.data(), ref.real.data(),
                      sizeof(double) * size_t(ref.real.size())) == 0);
    CHECK(std::memcmp(r.spec.imag.data(), ref.imag.data(),
                      sizeof(double) * size_t(ref.imag.size())) == 0);
  }
  SECTION("n = -d/s cancels exactly") {
    const double s = 0.5;
    std::vector<double> n(d.size());
    for (size_t i = 0; i < d.size(); ++i) n[i] = -d[i] / s;
    auto r = mix(d, n, s, cfg);
    for (double v : r.wave) REQUIRE(v == 0.0);
  }
  SECTION("matched mixture hits -5 dB to 1e-9") {
    auto n = random_wave(32000, 23, 0.2);
    MixConfig mc;
    double s = match_db_scale(d, n, mc);
    auto r = mix(d, n, s, cfg);
    std::vector<double> part(d.size());
    for (size_t i = 0; i < d.size(); ++i) part[i] = r.wave[i] - d[i];  // = s*n
    CHECK(std::abs(20.0 * std::log10(rms(part) / rms(d)) - mc.delta_db) < 1e-9);
  }
  SECTION("length mismatch") {
    CHECK_THROWS_AS(mix(d, random_wave(1000, 2), 1.0, cfg), ShapeMismatch);
  }
}

TEST_CASE("make_input_features: planes", "[dsp]") {
  SECTION("3-4-5 magnitude") {
    Spectrogram s;
    s.real = Eigen::MatrixXd::Zero(4, 5);
    s.imag = Eigen::MatrixXd::Zero(4, 5);
    s.real(2, 3) = 3.0;
    s.imag(2, 3) = 4.0;
    Tensor<double> f = make_input_features(s);
    REQUIRE(f.rank == 3);
    CHECK(f.d0() == 3);
    CHECK(f.d1() == 4);
    CHECK(f.d2() == 5);
    CHECK(f.at(0, 2, 3) == 3.0);
    CHECK(f.at(1, 2, 3) == 4.0);
    CHECK(f.at(2, 2, 3) == 5.0);
    CHECK(f.at(2, 0, 0) == 0.0);
  }
  SECTION("all-zero spectrogram maps to all-zero features") {
    Spectrogram s;
    s.real = Eigen::MatrixXd::Zero(3, 3);
    s.imag = Eigen::MatrixXd::Zero(3, 3);
    Tensor<double> f = make_input_features(s);
    for (double v : f.v) REQUIRE(v == 0.0);
  }
  SECTION("magnitude plane matches an independent modulus computation") {
    StftConfig cfg;
    Spectrogram s = stft(random_wave(8000, 31), cfg);
    Tensor<double> f = make_input_features(s);
    double worst = 0;
    for (long t = 0; t < s.frames(); ++t)
      for (long b = 0; b < s.bins(); ++b) {
        double m = std::sqrt(s.real(t, b) * s.real(t, b) + s.imag(t, b) * s.imag(t, b));
        double denom = std::max(1e-30, m);
        worst = std::max(worst, std::abs(f.at(2, t, b) - m) / denom);
      }
    CHECK(worst < 1e-7);
  }
}
