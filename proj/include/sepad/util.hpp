// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <string>
#include <vector>

namespace sepad {

inline std::string strfmt(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  va_list ap2;
  va_copy(ap2, ap);
  int n = std::vsnprintf(nullptr, 0, fmt, ap);
  va_end(ap);
  std::string s(n > 0 ? static_cast<size_t>(n) : 0, '\0');
  if (n > 0) std::vsnprintf(s.data(), s.size() + 1, fmt, ap2);
  va_end(ap2);
  return s;
}

// splitmix64: used to derive independent sub-seeds from a master seed.
inline uint64_t mix_seed(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t hash_str(const std::string& s) {
  // FNV-1a
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t sub_seed(uint64_t master, const std::string& tag) {
  return mix_seed(master ^ hash_str(tag));
}

inline uint64_t sub_seed(uint64_t master, const std::string& tag, uint64_t k) {
  return mix_seed(mix_seed(master ^ hash_str(tag)) + k);
}

// ---- logging -------------------------------------------------------------

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

inline LogLevel& log_level() {
  static LogLevel lvl = [] {
    const char* env = std::getenv("SEPAD_LOG");
    if (!env) return LogLevel::kInfo;
    std::string v(env);
    if (v == "quiet" || v == "0") return LogLevel::kQuiet;
    if (v == "debug" || v == "2") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return lvl;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo) std::fprintf(stderr, "[sepad] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::kDebug) std::fprintf(stderr, "[sepad:debug] %s\n", msg.c_str());
}

}  // namespace sepad
