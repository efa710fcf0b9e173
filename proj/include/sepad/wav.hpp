// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sepad/errors.hpp"
#include "sepad/util.hpp"

namespace sepad {

// RIFF PCM, 16-bit signed little-endian. Multichannel input is collapsed to
// mono by channel mean; samples are scaled by the int16 full-scale constant
// 32768 so the result lies in [-1, 1).
struct WavData {
  std::vector<double> samples;  // mono
  int sample_rate = 0;
  int channels = 0;
};

namespace wav_detail {

inline uint32_t rd_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
inline uint16_t rd_u16(const unsigned char* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

inline void wr_u32(std::string& s, uint32_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
  s.push_back(char((v >> 16) & 0xff));
  s.push_back(char((v >> 24) & 0xff));
}
inline void wr_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
}

}  // namespace wav_detail

inline WavData read_wav(const std::string& path) {
  using namespace wav_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(strfmt("cannot open WAV file: %s", path.c_str()));
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw ParseError(strfmt("not a RIFF/WAVE file: %s", path.c_str()));

  int channels = 0, bits = 0, rate = 0, fmt_tag = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* hdr = buf.data() + pos;
    uint32_t chunk_len = rd_u32(hdr + 4);
    size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (body + 16 > buf.size()) throw ParseError(strfmt("truncated fmt chunk: %s", path.c_str()));
      fmt_tag = rd_u16(&buf[body]);
      channels = rd_u16(&buf[body + 2]);
      rate = int(rd_u32(&buf[body + 4]));
      bits = rd_u16(&buf[body + 14]);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (fmt_tag != 1 || bits != 16)
    throw ParseError(strfmt("%s: only 16-bit PCM supported (fmt=%d bits=%d)", path.c_str(),
                            fmt_tag, bits));
  if (channels < 1) throw ParseError(strfmt("%s: bad channel count", path.c_str()));
  if (data_off == 0 || data_off + data_len > buf.size())
    throw ParseError(strfmt("%s: missing or truncated data chunk", path.c_str()));

  size_t n_frames = data_len / (2 * size_t(channels));
  if (n_frames == 0) throw EmptyAudio(strfmt("%s: no audio samples", path.c_str()));

  WavData w;
  w.sample_rate = rate;
  w.channels = channels;
  w.samples.resize(n_frames);
  const unsigned char* d = buf.data() + data_off;
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      uint16_t u = rd_u16(d + 2 * (i * channels + c));
      acc += double(int16_t(u));
    }
    w.samples[i] = acc / (channels * 32768.0);
  }
  return w;
}

inline void write_wav(const std::string& path, const std::vector<double>& samples,
                      int sample_rate) {
  using namespace wav_detail;
  if (samples.empty()) throw EmptyAudio("refusing to write empty WAV");
  std::string out;
  out.reserve(44 + samples.size() * 2);
  uint32_t data_len = uint32_t(samples.size() * 2);
  out += "RIFF";
  wr_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  wr_u32(out, 16);
  wr_u16(out, 1);  // PCM
  wr_u16(out, 1);  // mono
  wr_u32(out, uint32_t(sample_rate));
  wr_u32(out, uint32_t(sample_rate) * 2);
  wr_u16(out, 2);
  wr_u16(out, 16);
  out += "data";
  wr_u32(out, data_len);
  for (double x : samples) {
    double v = std::lround(x * 32767.0);
    if (v > 32767.0) v = 32767.0;
    if (v < -32768.0) v = -32768.0;
    wr_u16(out, uint16_t(int16_t(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(strfmt("cannot write WAV file: %s", path.c_str()));
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw IoError(strfmt("short write: %s", path.c_str()));
}

}  // namespace sepad
