// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sepad/errors.hpp"
#include "sepad/manifest.hpp"
#include "sepad/util.hpp"
#include "sepad/wav.hpp"

namespace sepad {

// Desk-scale stand-in for a real machine-sound corpus. Every machine type
// gets a fixed random signature (a handful of stable sinusoids over a
// band-limited noise floor); anomalous test clips perturb one generator
// parameter so normal/anomalous are separable by construction.
struct SynthSpec {
  enum class AnomalyKind { kToneShift, kBandNoise, kAmplitudeMod };

  std::vector<std::string> machine_types = {"fan", "pump", "slider",
                                            "valve", "gearbox", "compressor"};
  int clips_per_type = 40;  // train clips per machine; the test split gets the same count
  double clip_seconds = 3.0;
  int tones_per_machine = 4;
  double tone_band_lo_hz = 300.0;
  double tone_band_hi_hz = 6500.0;
  double noise_level = 0.02;  // linear RMS of the noise floor
  AnomalyKind anomaly_kind = AnomalyKind::kToneShift;
  double anomaly_strength = 0.1;
  uint64_t seed = 0;

  void validate() const {
    if (machine_types.empty()) throw InvalidConfig("synth: no machine types");
    if (clips_per_type < 1) throw InvalidConfig("synth: clips_per_type must be >= 1");
    if (clip_seconds < 2.0) throw InvalidConfig("synth: clip_seconds must be >= 2");
    if (tones_per_machine < 1) throw InvalidConfig("synth: tones_per_machine must be >= 1");
    if (!(tone_band_lo_hz > 0.0 && tone_band_lo_hz < tone_band_hi_hz &&
          tone_band_hi_hz < kSampleRate / 2.0))
      throw InvalidConfig("synth: tone_band must lie within (0, 8000) Hz");
    if (!(anomaly_strength > 0.0)) throw InvalidConfig("synth: anomaly_strength must be > 0");
    if (noise_level < 0.0) throw InvalidConfig("synth: noise_level must be >= 0");
  }
};

inline const char* to_string(SynthSpec::AnomalyKind k) {
  switch (k) {
    case SynthSpec::AnomalyKind::kToneShift: return "tone_shift";
    case SynthSpec::AnomalyKind::kBandNoise: return "band_noise";
    default: return "amplitude_mod";
  }
}
inline SynthSpec::AnomalyKind anomaly_kind_from_string(const std::string& s) {
  if (s == "tone_shift") return SynthSpec::AnomalyKind::kToneShift;
  if (s == "band_noise") return SynthSpec::AnomalyKind::kBandNoise;
  if (s == "amplitude_mod") return SynthSpec::AnomalyKind::kAmplitudeMod;
  throw InvalidConfig(strfmt("unknown anomaly kind \"%s\"", s.c_str()));
}

struct MachineSignature {
  std::vector<double> tone_freqs;
  std::vector<double> tone_amps;
  double noise_center_hz = 0;
  double noise_q = 1;
  double target_detune = 1;  // multiplicative, applied in the target domain
  double target_gain = 1;
};

inline MachineSignature machine_signature(const SynthSpec& spec, const std::string& machine) {
  std::mt19937_64 rng(sub_seed(spec.seed, "signature/" + machine));
  std::uniform_real_distribution<double> freq(spec.tone_band_lo_hz, spec.tone_band_hi_hz);
  std::uniform_real_distribution<double> amp(0.4, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  MachineSignature sig;
  for (int k = 0; k < spec.tones_per_machine; ++k) {
    sig.tone_freqs.push_back(freq(rng));
    sig.tone_amps.push_back(amp(rng));
  }
  sig.noise_center_hz = freq(rng);
  sig.noise_q = 1.0 + 2.0 * u01(rng);
  sig.target_detune = 1.0 + 0.004 * (u01(rng) - 0.5);           // ~±0.2% pitch shift
  sig.target_gain = std::pow(10.0, (u01(rng) - 0.5) * 2 / 20);  // ±1 dB
  return sig;
}

namespace synth_detail {

// RBJ constant-peak-gain bandpass; shapes white noise into a noise floor.
inline std::vector<double> bandpass_noise(size_t n, double center_hz, double q,
                                          std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double w0 = 2.0 * std::numbers::pi * center_hz / kSampleRate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  std::vector<double> y(n);
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (size_t i = 0; i < n; ++i) {
    double x = gauss(rng);
    double yi = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = yi;
    y[i] = yi;
  }
  double ss = 0;
  for (double v : y) ss += v * v;
  double r = std::sqrt(ss / double(n));
  if (r > 0)
    for (double& v : y) v /= r;
  return y;
}

}  // namespace synth_detail

constexpr double kSynthToneRms = 0.1;

/// Render one clip of a machine. `anomalous` applies the spec's anomaly kind.
inline std::vector<double> synth_clip(const SynthSpec& spec, const MachineSignature& sig,
                                      Domain domain, bool anomalous, std::mt19937_64& rng) {
  const size_t n = size_t(std::lround(spec.clip_seconds * kSampleRate));
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  std::vector<double> freqs = sig.tone_freqs;
  std::vector<double> amps = sig.tone_amps;
  double gain = 1.0;
  if (domain == Domain::kTarget) {
    for (double& f : freqs) f *= sig.target_detune;
    gain *= sig.target_gain;
  }
  if (anomalous && spec.anomaly_kind == SynthSpec::AnomalyKind::kToneShift) {
    for (double& f : freqs) f = std::min(f * (1.0 + spec.anomaly_strength), 0.975 * kSampleRate / 2);
  }

  // per-clip phase and mild amplitude jitter
  std::vector<double> phases(freqs.size());
  for (size_t k = 0; k < freqs.size(); ++k) {
    phases[k] = 2.0 * std::numbers::pi * u01(rng);
    amps[k] *= 1.0 + 0.04 * (u01(rng) - 0.5);
  }

  std::vector<double> x(n, 0.0);
  for (size_t k = 0; k < freqs.size(); ++k) {
    const double w = 2.0 * std::numbers::pi * freqs[k] / kSampleRate;
    for (size_t i = 0; i < n; ++i) x[i] += amps[k] * std::sin(w * double(i) + phases[k]);
  }
  // normalize the tonal part to a fixed reference level
  double ss = 0;
  for (double v : x) ss += v * v;
  double r = std::sqrt(ss / double(n));
  if (r > 0)
    for (double& v : x) v *= kSynthToneRms / r;

  if (spec.noise_level > 0) {
    auto noise = synth_detail::bandpass_noise(n, sig.noise_center_hz, sig.noise_q, rng);
    for (size_t i = 0; i < n; ++i) x[i] += spec.noise_level * noise[i];
  }

  if (anomalous && spec.anomaly_kind == SynthSpec::AnomalyKind::kBandNoise) {
    std::uniform_real_distribution<double> fc(spec.tone_band_lo_hz, spec.tone_band_hi_hz);
    auto extra = synth_detail::bandpass_noise(n, fc(rng), 4.0, rng);
    const double level = spec.anomaly_strength * kSynthToneRms;
    for (size_t i = 0; i < n; ++i) x[i] += level * extra[i];
  }
  if (anomalous && spec.anomaly_kind == SynthSpec::AnomalyKind::kAmplitudeMod) {
    const double fm = 2.0 + 6.0 * u01(rng);
    const double w = 2.0 * std::numbers::pi * fm / kSampleRate;
    for (size_t i = 0; i < n; ++i) x[i] *= 1.0 + spec.anomaly_strength * std::sin(w * double(i));
  }

  for (double& v : x) v *= gain;
  return x;
}

/// Write the WAV tree plus manifest.csv under out_dir. Fully reproducible
/// from spec.seed: every clip draws from its own derived RNG stream, so the
/// output is byte-identical across runs.
inline Manifest synth_generate(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw IoError(strfmt("cannot create output directory: %s", out_dir.c_str()));

  Manifest m;
  m.root = out_dir;

  auto emit = [&](const std::string& machine, Split split, int index, Domain domain,
                  Label label, const MachineSignature& sig) {
    std::string id = strfmt("%s_%s_%04d", machine.c_str(), to_string(split), index);
    std::string rel = machine + "/" + to_string(split) + "/" + id + ".wav";
    fs::create_directories(fs::path(out_dir) / machine / to_string(split), ec);
    if (ec) throw IoError(strfmt("cannot create directory for %s", rel.c_str()));
    std::mt19937_64 rng(sub_seed(spec.seed, machine + "/" + to_string(split), uint64_t(index)));
    auto x = synth_clip(spec, sig, domain, label == Label::kAnomalous, rng);
    write_wav((fs::path(out_dir) / rel).string(), x, kSampleRate);
    m.entries.push_back({id, rel, machine, domain, split, label});
  };

  for (const auto& machine : spec.machine_types) {
    const auto sig = machine_signature(spec, machine);
    const int n = spec.clips_per_type;
    // train: all normal; ~10% of clips come from the shifted target domain
    const int n_target = n >= 10 ? n / 10 : 0;
    for (int i = 0; i < n; ++i) {
      Domain d = i < n - n_target ? Domain::kSource : Domain::kTarget;
      emit(machine, Split::kTrain, i, d, Label::kNormal, sig);
    }
    // test: 50% normal / 50% anomalous, each half split across domains
    const int n_anom = n / 2;
    for (int i = 0; i < n; ++i) {
      Label l = i < n - n_anom ? Label::kNormal : Label::kAnomalous;
      Domain d = i % 2 == 0 ? Domain::kSource : Domain::kTarget;
      emit(machine, Split::kTest, i, d, l, sig);
    }
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.csv").string());
  return m;
}

}  // namespace sepad
