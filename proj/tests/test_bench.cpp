// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Manual timing probes, excluded from the default run (tag [.bench]).

#include <catch2/catch_amalgamated.hpp>

#include <chrono>

#include "sepad/loss.hpp"
#include "sepad/mix.hpp"
#include "sepad/model.hpp"
#include "test_util.hpp"

using namespace sepad;
using namespace sepad_test;

namespace {

SeparatorConfig desk8() {
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

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TEST_CASE("bench: desk forward/backward cost", "[.bench]") {
  for (long crop : {16000L, 32000L}) {
    SeparatorNet<float> net(desk8(), StftConfig{});
    auto d = random_wave(size_t(crop), 1, 0.4);
    auto n = random_wave(size_t(crop), 2, 0.3);
    auto feats = make_input_features(stft(d, net.stft_config())).cast<float>();
    Spectrogram tgt = stft(n, net.stft_config());
    Tensor<float> tr({tgt.frames(), tgt.bins()}), ti({tgt.frames(), tgt.bins()});
    for (long t = 0; t < tgt.frames(); ++t)
      for (long f = 0; f < tgt.bins(); ++f) {
        tr.at(t, f) = float(tgt.real(t, f));
        ti.at(t, f) = float(tgt.imag(t, f));
      }
    Tensor<float> tw({crop});
    for (long i = 0; i < crop; ++i) tw.v[size_t(i)] = float(n[size_t(i)]);

    auto t0 = std::chrono::steady_clock::now();
    net.forward(feats, crop);
    double fwd = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    {
      Graph<float> g;
      auto pid = net.bind(g, true);
      auto fn = net.build_forward(g, pid, g.input(feats), crop);
      int loss = separation_loss_node(g, fn.y, fn.yr, fn.yi, g.input(tw), g.input(tr),
                                      g.input(ti), LossWeights{});
      g.backward(loss);
    }
    double fwdbwd = seconds_since(t0);
    WARN("crop " << crop << ": forward " << fwd << " s, forward+backward " << fwdbwd << " s");
  }
}
