// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <fstream>
#include <random>

#include "sepad/loss.hpp"
#include "sepad/mix.hpp"
#include "sepad/model.hpp"
#include "test_util.hpp"

using namespace sepad;
using namespace sepad_test;

namespace {

SeparatorConfig desk_config() {
  SeparatorConfig c;
  c.channels = 8;
  c.num_blocks = 2;
  c.attention_heads = 2;
  c.freq_downsample = 4;
  c.ffn_expansion = 2;
  c.conv_kernel = 7;
  c.dense_layers = 2;
  return c;
}

// width-8 single-block net over a miniature STFT, cheap enough for FD
SeparatorConfig tiny_config() {
  SeparatorConfig c;
  c.channels = 8;
  c.num_blocks = 1;
  c.tap_blocks = {1, 1};
  c.attention_heads = 2;
  c.freq_downsample = 2;
  c.ffn_expansion = 2;
  c.conv_kernel = 3;
  c.dense_layers = 1;
  return c;
}

StftConfig tiny_stft() {
  StftConfig s;
  s.n_fft = 16;
  s.hop = 4;
  return s;
}

template <typename S>
Tensor<S> features_for(const std::vector<double>& wave, const StftConfig& cfg) {
  return make_input_features(stft(wave, cfg)).template cast<S>();
}

}  // namespace

TEST_CASE("model: desk forward shapes and istft consistency", "[model]") {
  SeparatorNet<float> net(desk_config(), StftConfig{});
  auto wave = random_wave(32000, 1);
  auto feats = features_for<float>(wave, net.stft_config());
  REQUIRE(feats.d1() == 321);
  REQUIRE(feats.d2() == 201);

  auto r = net.forward(feats, 32000);
  CHECK(r.y.size() == 32000);
  CHECK(r.yr.d0() == 321);
  CHECK(r.yr.d1() == 201);
  CHECK(r.taps.encoder_vec.size() == 8);
  CHECK(r.taps.mid_vec.size() == 8);
  CHECK(r.taps.last_vec.size() == 8);
  CHECK(pooled_embedding(r.taps).size() == 24);

  // y must be the istft of the decoded spectrogram
  Spectrogram y_spec;
  y_spec.real.resize(321, 201);
  y_spec.imag.resize(321, 201);
  for (long t = 0; t < 321; ++t)
    for (long f = 0; f < 201; ++f) {
      y_spec.real(t, f) = double(r.yr.at(t, f));
      y_spec.imag(t, f) = double(r.yi.at(t, f));
    }
  auto y_ref = istft(y_spec, net.stft_config(), 32000);
  double worst = 0;
  for (size_t i = 0; i < y_ref.size(); ++i)
    worst = std::max(worst, std::abs(y_ref[i] - double(r.y[i])));
  CHECK(worst < 1e-4);  // float forward vs double reference
}

TEST_CASE("model: inference is deterministic", "[model]") {
  SeparatorNet<float> net(desk_config(), StftConfig{});
  auto feats = features_for<float>(random_wave(32000, 2), net.stft_config());
  auto a = net.forward(feats, 32000);
  auto b = net.forward(feats, 32000);
  CHECK(a.y == b.y);
  CHECK(a.taps.encoder_vec == b.taps.encoder_vec);
  CHECK(a.taps.mid_vec == b.taps.mid_vec);
  CHECK(a.taps.last_vec == b.taps.last_vec);
}

TEST_CASE("model: fresh net output stays in a sane envelope", "[model]") {
  SeparatorNet<float> net(desk_config(), StftConfig{});
  auto wave = sine_wave(32000, 250.0, std::sqrt(2.0));  // unit RMS
  auto r = net.forward(features_for<float>(wave, net.stft_config()), 32000);
  double ss = 0;
  for (float v : r.y) {
    REQUIRE(std::isfinite(double(v)));
    ss += double(v) * double(v);
  }
  double out_rms = std::sqrt(ss / double(r.y.size()));
  CHECK(out_rms > 1e-8);
  CHECK(out_rms < 1e3);
}

TEST_CASE("model: embedding dimension is 3x channels across configs", "[model]") {
  StftConfig scfg = tiny_stft();
  auto wave = random_wave(128, 3);
  struct Case {
    int channels, blocks, heads;
  };
  for (auto [channels, blocks, heads] : {Case{4, 2, 2}, Case{6, 3, 3}, Case{8, 2, 4},
                                         Case{12, 4, 4}, Case{16, 2, 2}}) {
    SeparatorConfig c = tiny_config();
    c.channels = channels;
    c.num_blocks = blocks;
    c.tap_blocks = {blocks >= 2 ? 2 : 1, 0};
    c.attention_heads = heads;
    SeparatorNet<float> net(c, scfg);
    auto r = net.forward(features_for<float>(wave, scfg), long(wave.size()));
    CHECK(pooled_embedding(r.taps).size() == size_t(3 * channels));
  }
}

TEST_CASE("model: pooling is constant- and permutation-consistent", "[model]") {
  SECTION("constant taps give a constant embedding") {
    PooledTaps<float> taps;
    taps.encoder_vec.assign(8, 0.75f);
    taps.mid_vec.assign(8, 0.75f);
    taps.last_vec.assign(8, 0.75f);
    for (float v : pooled_embedding(taps)) REQUIRE(v == 0.75f);
  }
  SECTION("per-channel mean is invariant to permuting frames") {
    Graph<double> g;
    Tensor<double> x({3, 5, 4});
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : x.v) v = u(rng);
    std::vector<long> perm{3, 0, 4, 2, 1};
    Tensor<double> xp({3, 5, 4});
    for (long c = 0; c < 3; ++c)
      for (long t = 0; t < 5; ++t)
        for (long f = 0; f < 4; ++f) xp.at(c, t, f) = x.at(c, perm[size_t(t)], f);
    int m1 = g.mean_per_channel(g.input(x));
    int m2 = g.mean_per_channel(g.input(xp));
    for (long c = 0; c < 3; ++c)
      CHECK(g.val(m1).v[size_t(c)] == Catch::Approx(g.val(m2).v[size_t(c)]).margin(1e-12));
  }
}

TEST_CASE("model: decoder style changes outputs but not tap shapes", "[model]") {
  StftConfig scfg = tiny_stft();
  auto wave = random_wave(128, 5);
  SeparatorConfig a = tiny_config();
  SeparatorConfig b = tiny_config();
  b.decoder_style = DecoderStyle::kComplexOnly;
  SeparatorNet<float> na(a, scfg), nb(b, scfg);
  auto ra = na.forward(features_for<float>(wave, scfg), long(wave.size()));
  auto rb = nb.forward(features_for<float>(wave, scfg), long(wave.size()));
  CHECK(ra.taps.encoder_vec.size() == rb.taps.encoder_vec.size());
  CHECK(ra.taps.mid_vec.size() == rb.taps.mid_vec.size());
  CHECK(ra.taps.last_vec.size() == rb.taps.last_vec.size());
  CHECK(ra.yr.same_shape(rb.yr));
}

TEST_CASE("model: analytic parameter gradients match finite differences", "[model][fd]") {
  const StftConfig scfg = tiny_stft();
  const long length = 64;
  SeparatorNet<double> net(tiny_config(), scfg);

  auto d = random_wave(size_t(length), 6, 0.4);
  auto n = random_wave(size_t(length), 7, 0.3);
  auto feats = features_for<double>(d, scfg);
  Spectrogram tgt = stft(n, scfg);
  Tensor<double> tr({tgt.frames(), tgt.bins()}), ti({tgt.frames(), tgt.bins()});
  for (long t = 0; t < tgt.frames(); ++t)
    for (long f = 0; f < tgt.bins(); ++f) {
      tr.at(t, f) = tgt.real(t, f);
      ti.at(t, f) = tgt.imag(t, f);
    }
  Tensor<double> tw({length});
  for (long i = 0; i < length; ++i) tw.v[size_t(i)] = n[size_t(i)];
  LossWeights w;

  auto loss_value = [&]() {
    Graph<double> g;
    auto pid = net.bind(g, false);
    auto fwd = net.build_forward(g, pid, g.input(feats), length);
    int loss = separation_loss_node(g, fwd.y, fwd.yr, fwd.yi, g.input(tw), g.input(tr),
                                    g.input(ti), w);
    return g.val(loss).v[0];
  };

  Graph<double> g;
  auto pid = net.bind(g, true);
  auto fwd = net.build_forward(g, pid, g.input(feats), length);
  int loss = separation_loss_node(g, fwd.y, fwd.yr, fwd.yi, g.input(tw), g.input(tr),
                                  g.input(ti), w);
  g.backward(loss);

  // every parameter must have a finite gradient
  auto& ps = net.params();
  for (size_t i = 0; i < ps.tensors.size(); ++i) {
    const auto& grad = g.grad(pid[i]);
    REQUIRE(grad.numel() == ps.tensors[i].numel());
    for (double v : grad.v) REQUIRE(std::isfinite(v));
  }

  // 20 random parameters vs central differences
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    size_t ti_idx = rng() % ps.tensors.size();
    long ei = long(rng() % uint64_t(ps.tensors[ti_idx].numel()));
    const double orig = ps.tensors[ti_idx].v[size_t(ei)];
    const double h = 1e-5 * std::max(1.0, std::abs(orig));
    ps.tensors[ti_idx].v[size_t(ei)] = orig + h;
    const double fplus = loss_value();
    ps.tensors[ti_idx].v[size_t(ei)] = orig - h;
    const double fminus = loss_value();
    ps.tensors[ti_idx].v[size_t(ei)] = orig;
    const double fd = (fplus - fminus) / (2 * h);
    const double an = g.grad(pid[ti_idx]).v[size_t(ei)];
    if (std::abs(fd - an) < 1e-9) continue;
    const double denom = std::max({1e-7, std::abs(fd), std::abs(an)});
    INFO("param " << ps.names[ti_idx] << "[" << ei << "] fd " << fd << " analytic " << an);
    CHECK(std::abs(fd - an) / denom < 1e-4);
  }
}

TEST_CASE("model: checkpoint round trip and error paths", "[model]") {
  TempDir td("ckpt");
  StftConfig scfg = tiny_stft();
  SeparatorNet<float> net(tiny_config(), scfg);
  auto wave = random_wave(128, 8);
  auto feats = features_for<float>(wave, scfg);
  auto before = net.forward(feats, long(wave.size()));

  save_params(net, td.file("net.ckpt"));

  SECTION("round trip restores bitwise-identical forward outputs") {
    auto loaded = load_params<float>(td.file("net.ckpt"));
    auto after = loaded.forward(feats, long(wave.size()));
    REQUIRE(after.y.size() == before.y.size());
    CHECK(std::memcmp(after.y.data(), before.y.data(), sizeof(float) * before.y.size()) == 0);
    CHECK(after.taps.last_vec == before.taps.last_vec);
  }
  SECTION("config expectation mismatch") {
    SeparatorConfig other = tiny_config();
    other.channels = 16;
    CHECK_THROWS_AS(load_params<float>(td.file("net.ckpt"), &other), ConfigMismatch);
  }
  SECTION("truncated file") {
    auto bytes = read_bytes(td.file("net.ckpt"));
    write_text(td.file("trunc.ckpt"), bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_params<float>(td.file("trunc.ckpt")), CorruptCheckpoint);
  }
  SECTION("flipped byte fails the checksum") {
    auto bytes = read_bytes(td.file("net.ckpt"));
    bytes[bytes.size() / 3] = char(bytes[bytes.size() / 3] ^ 0x40);
    std::ofstream(td.file("bad.ckpt"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_params<float>(td.file("bad.ckpt")), CorruptCheckpoint);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(load_params<float>(td.file("gone.ckpt")), CheckpointNotFound);
  }
}

TEST_CASE("model: input validation", "[model]") {
  StftConfig scfg = tiny_stft();
  SeparatorNet<float> net(tiny_config(), scfg);
  auto wave = random_wave(128, 9);
  auto feats = features_for<float>(wave, scfg);

  SECTION("frames/length mismatch") {
    CHECK_THROWS_AS(net.forward(feats, 999), ShapeMismatch);
  }
  SECTION("non-finite features") {
    feats.at(0, 0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(net.forward(feats, long(wave.size())), InvalidInput);
  }
  SECTION("config validation") {
    SeparatorConfig bad = tiny_config();
    bad.attention_heads = 3;  // does not divide 8
    CHECK_THROWS_AS(SeparatorNet<float>(bad, scfg), InvalidConfig);
    SeparatorConfig bad2 = tiny_config();
    bad2.tap_blocks = {5, 0};
    CHECK_THROWS_AS(SeparatorNet<float>(bad2, scfg), InvalidConfig);
  }
  SECTION("describe reports parameters") {
    CHECK(net.describe().find("parameters") != std::string::npos);
    CHECK(net.params().count() > 0);
  }
}
