// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sepad/csv.hpp"
#include "sepad/errors.hpp"
#include "sepad/util.hpp"
#include "sepad/wav.hpp"

namespace sepad {

constexpr int kSampleRate = 16000;

enum class Domain { kSource, kTarget };
enum class Split { kTrain, kTest };
enum class Label { kNormal, kAnomalous, kUnknown };

inline const char* to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }
inline const char* to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }
inline const char* to_string(Label l) {
  switch (l) {
    case Label::kNormal: return "normal";
    case Label::kAnomalous: return "anomalous";
    default: return "unknown";
  }
}

inline Domain domain_from_string(const std::string& s, const std::string& where) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw InvalidDomain(strfmt("%s: invalid domain \"%s\"", where.c_str(), s.c_str()));
}
inline Split split_from_string(const std::string& s, const std::string& where) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw InvalidSplit(strfmt("%s: invalid split \"%s\"", where.c_str(), s.c_str()));
}
inline Label label_from_string(const std::string& s, const std::string& where) {
  if (s == "normal") return Label::kNormal;
  if (s == "anomalous") return Label::kAnomalous;
  if (s == "unknown") return Label::kUnknown;
  throw InvalidLabel(strfmt("%s: invalid label \"%s\"", where.c_str(), s.c_str()));
}

/// Metadata row of one recording.
struct ClipMeta {
  std::string id;
  std::string path;  // as written in the manifest, relative to the root
  std::string machine_type;
  Domain domain = Domain::kSource;
  Split split = Split::kTrain;
  Label label = Label::kNormal;

  bool operator==(const ClipMeta&) const = default;
};

/// One decoded recording: metadata plus the mono 16 kHz waveform.
struct Clip {
  ClipMeta meta;
  std::vector<double> samples;
};

struct Manifest {
  std::string root;  // directory the entry paths resolve against
  std::vector<ClipMeta> entries;

  std::string resolve(const ClipMeta& e) const {
    std::filesystem::path p(e.path);
    if (p.is_absolute()) return e.path;
    return (std::filesystem::path(root) / p).string();
  }

  std::vector<std::string> machine_types() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& e : entries)
      if (seen.insert(e.machine_type).second) out.push_back(e.machine_type);
    return out;
  }
};

inline const std::string kManifestHeader = "id,path,machine_type,domain,split,label";

inline void validate_entry(const ClipMeta& e, const std::string& where) {
  if (e.split == Split::kTrain && e.label == Label::kAnomalous)
    throw AnomalousInTrain(strfmt("%s: clip \"%s\" is anomalous inside split=train",
                                  where.c_str(), e.id.c_str()));
  if (e.split == Split::kTrain && e.label == Label::kUnknown)
    throw InvalidLabel(strfmt("%s: clip \"%s\": label unknown allowed only in split=test",
                              where.c_str(), e.id.c_str()));
  if (e.id.empty()) throw ParseError(strfmt("%s: empty id", where.c_str()));
  if (e.path.empty()) throw ParseError(strfmt("%s: empty path", where.c_str()));
}

inline Manifest load_manifest(const std::string& path) {
  auto t = csv::read_file(path);
  if (csv::join_row(t.header) != kManifestHeader + "\n")
    throw ParseError(strfmt("%s: manifest header must be exactly \"%s\"", path.c_str(),
                            kManifestHeader.c_str()));
  Manifest m;
  m.root = std::filesystem::path(path).parent_path().string();
  if (m.root.empty()) m.root = ".";
  std::set<std::string> ids;
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    std::string where = strfmt("%s:row %zu", path.c_str(), i + 1);
    ClipMeta e;
    e.id = r[0];
    e.path = r[1];
    e.machine_type = r[2];
    e.domain = domain_from_string(r[3], where);
    e.split = split_from_string(r[4], where);
    e.label = label_from_string(r[5], where);
    validate_entry(e, where);
    if (!ids.insert(e.id).second)
      throw DuplicateId(strfmt("%s: duplicate id \"%s\"", where.c_str(), e.id.c_str()));
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(strfmt("cannot write manifest: %s", path.c_str()));
  out << kManifestHeader << "\n";
  for (const auto& e : m.entries)
    out << csv::join_row({e.id, e.path, e.machine_type, to_string(e.domain),
                          to_string(e.split), to_string(e.label)});
  if (!out) throw IoError(strfmt("short write: %s", path.c_str()));
}

/// Decode one manifest entry. The file must be 16-bit PCM at exactly 16 kHz;
/// there is no silent resampling.
inline Clip read_clip(const Manifest& m, const ClipMeta& e) {
  WavData w = read_wav(m.resolve(e));
  if (w.sample_rate != kSampleRate)
    throw SampleRateMismatch(strfmt("%s: sample rate %d, expected %d", e.path.c_str(),
                                    w.sample_rate, kSampleRate));
  for (double x : w.samples)
    if (!std::isfinite(x)) throw InvalidInput(strfmt("%s: non-finite sample", e.path.c_str()));
  Clip c;
  c.meta = e;
  c.samples = std::move(w.samples);
  return c;
}

/// Contiguous window of seconds*16000 samples at a uniformly random offset.
inline std::vector<double> random_trim(const std::vector<double>& samples, double seconds,
                                       std::mt19937_64& rng) {
  const long n = std::lround(seconds * kSampleRate);
  if (n <= 0) throw InvalidInput("random_trim: non-positive window");
  if (long(samples.size()) < n)
    throw ClipTooShort(strfmt("clip of %zu samples shorter than requested %ld", samples.size(), n));
  const long max_off = long(samples.size()) - n;
  long off = 0;
  if (max_off > 0) off = long(std::uniform_int_distribution<long>(0, max_off)(rng));
  return std::vector<double>(samples.begin() + off, samples.begin() + off + n);
}

inline std::vector<double> random_trim(const Clip& clip, double seconds, std::mt19937_64& rng) {
  return random_trim(clip.samples, seconds, rng);
}

}  // namespace sepad
