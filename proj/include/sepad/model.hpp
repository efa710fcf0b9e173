// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sepad/graph.hpp"
#include "sepad/stft.hpp"
#include "sepad/tensor.hpp"
#include "sepad/util.hpp"

namespace sepad {

enum class DecoderStyle { kMaskPlusComplex, kComplexOnly };

inline const char* to_string(DecoderStyle d) {
  return d == DecoderStyle::kMaskPlusComplex ? "mask_plus_complex" : "complex_only";
}
inline DecoderStyle decoder_style_from_string(const std::string& s) {
  if (s == "mask_plus_complex") return DecoderStyle::kMaskPlusComplex;
  if (s == "complex_only") return DecoderStyle::kComplexOnly;
  throw InvalidConfig(strfmt("unknown decoder style \"%s\"", s.c_str()));
}

struct SeparatorConfig {
  int channels = 64;
  int num_blocks = 4;
  // conformer tap indices (1-based); 0 in the second slot means "last block"
  std::array<int, 2> tap_blocks = {2, 0};
  int attention_heads = 4;
  int freq_downsample = 2;
  DecoderStyle decoder_style = DecoderStyle::kMaskPlusComplex;
  int ffn_expansion = 4;
  int conv_kernel = 15;  // depthwise kernel inside the conformer conv module
  int dense_layers = 2;  // encoder dense block depth
  uint64_t init_seed = 1;

  int tap(int i) const { return tap_blocks[size_t(i)] == 0 ? num_blocks : tap_blocks[size_t(i)]; }

  void validate() const {
    if (channels < 1) throw InvalidConfig("model: channels must be positive");
    // both named taps exist from 2 blocks up; 1 block is allowed for desk-scale
    // runs when the taps are set explicitly
    if (num_blocks < 1) throw InvalidConfig("model: num_blocks must be >= 1");
    for (int i = 0; i < 2; ++i)
      if (tap(i) < 1 || tap(i) > num_blocks)
        throw InvalidConfig(strfmt("model: tap %d out of [1, %d]", tap(i), num_blocks));
    if (attention_heads < 1 || channels % attention_heads != 0)
      throw InvalidConfig("model: channels must divide evenly into attention heads");
    if (freq_downsample < 1) throw InvalidConfig("model: freq_downsample must be >= 1");
    if (ffn_expansion < 1) throw InvalidConfig("model: ffn_expansion must be >= 1");
    if (conv_kernel < 1 || conv_kernel % 2 == 0)
      throw InvalidConfig("model: conv_kernel must be odd");
    if (dense_layers < 1 || dense_layers > 4)
      throw InvalidConfig("model: dense_layers out of [1, 4]");
  }

  bool operator==(const SeparatorConfig&) const = default;
};

template <typename S>
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor<S>> tensors;
  std::map<std::string, int> index;

  int add(const std::string& name, Tensor<S> t) {
    index[name] = int(names.size());
    names.push_back(name);
    tensors.push_back(std::move(t));
    return int(names.size()) - 1;
  }
  int find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
  }
  long count() const {
    long n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
  }
};

template <typename S>
struct PooledTaps {
  std::vector<S> encoder_vec, mid_vec, last_vec;
};

/// [encoder || mid || last], dimension 3*channels.
template <typename S>
std::vector<S> pooled_embedding(const PooledTaps<S>& taps) {
  std::vector<S> out;
  out.reserve(taps.encoder_vec.size() + taps.mid_vec.size() + taps.last_vec.size());
  out.insert(out.end(), taps.encoder_vec.begin(), taps.encoder_vec.end());
  out.insert(out.end(), taps.mid_vec.begin(), taps.mid_vec.end());
  out.insert(out.end(), taps.last_vec.begin(), taps.last_vec.end());
  return out;
}

/// The separator: convolutional encoder, two-stage conformer blocks along
/// time then frequency, and a masking + complex-refinement decoder, with
/// average-pooling taps at the encoder output and two conformer blocks.
template <typename S>
class SeparatorNet {
 public:
  using T = Tensor<S>;

  SeparatorNet(SeparatorConfig cfg, StftConfig stft_cfg)
      : cfg_(cfg), stft_(stft_cfg) {
    cfg_.validate();
    stft_.validate();
    build_params();
  }

  const SeparatorConfig& config() const { return cfg_; }
  const StftConfig& stft_config() const { return stft_; }
  ParamSet<S>& params() { return params_; }
  const ParamSet<S>& params() const { return params_; }

  std::string describe() const {
    return strfmt("separator: %d channels, %d conformer blocks, taps {%d, %d}, %ld parameters",
                  cfg_.channels, cfg_.num_blocks, cfg_.tap(0), cfg_.tap(1), params_.count());
  }

  /// Bind the parameter tensors into a graph; trainable=true makes them
  /// gradient leaves, otherwise constants.
  std::vector<int> bind(Graph<S>& g, bool trainable) const {
    std::vector<int> ids;
    ids.reserve(params_.tensors.size());
    for (const auto& t : params_.tensors) ids.push_back(trainable ? g.leaf(t) : g.input(t));
    return ids;
  }

  struct ForwardNodes {
    int y = -1;        // (length)
    int yr = -1;       // (T, F)
    int yi = -1;       // (T, F)
    int enc_tap = -1;  // (C)
    int mid_tap = -1;
    int last_tap = -1;
  };

  /// Assemble the forward graph. `features` is a (3, T, F) node from
  /// make_input_features; `length` is the waveform length the decoder output
  /// is inverted to. When with_decoder=false only the taps are computed.
  ForwardNodes build_forward(Graph<S>& g, const std::vector<int>& pid, int features,
                             long length, bool with_decoder = true) const {
    const T& X = g.val(features);
    if (X.rank != 3 || X.d0() != 3) throw ShapeMismatch("forward: features must be (3,T,F)");
    const long Tt = X.d1(), F = X.d2();
    if (F != stft_.bins())
      throw ShapeMismatch(strfmt("forward: %ld bins, stft expects %d", F, stft_.bins()));
    if (Tt != stft_.frames_for(length))
      throw ShapeMismatch(strfmt("forward: %ld frames inconsistent with length %ld", Tt, length));
    if ((F - 1) % cfg_.freq_downsample != 0)
      throw ShapeMismatch("forward: (bins-1) must be divisible by freq_downsample");
    for (S v : X.v)
      if (!std::isfinite(double(v))) throw InvalidInput("forward: non-finite feature");

    const bool inference = !g.needs_grad(pid[0]);
    const long C = cfg_.channels;
    const long F2 = (F - 1) / cfg_.freq_downsample + 1;
    ForwardNodes out;

    // encoder
    int h = conv(g, pid, "enc.in", features, {});
    h = act_norm(g, pid, "enc.in", h);
    {
      typename Graph<S>::Conv2dSpec sp;
      sp.stride_f = cfg_.freq_downsample;
      sp.pad_f = cfg_.freq_downsample - 1;
      h = conv(g, pid, "enc.down", h, sp);
      h = act_norm(g, pid, "enc.down", h);
    }
    std::vector<int> dense_feats{h};
    for (int i = 0; i < cfg_.dense_layers; ++i) {
      int cat = dense_feats[0];
      for (size_t j = 1; j < dense_feats.size(); ++j) cat = g.concat0(cat, dense_feats[j]);
      typename Graph<S>::Conv2dSpec sp;
      sp.dil_t = 1 << i;
      sp.pad_t = sp.dil_t;
      sp.pad_f = 1;
      int d = conv(g, pid, strfmt("enc.dense%d", i), cat, sp);
      d = act_norm(g, pid, strfmt("enc.dense%d", i), d);
      dense_feats.push_back(d);
    }
    h = dense_feats.back();
    out.enc_tap = g.mean_per_channel(h);

    // conformer stack
    int graph_mark = h;
    for (int b = 1; b <= cfg_.num_blocks; ++b) {
      int from = int(g.nodes_.size());
      h = conformer_block(g, pid, strfmt("blk%d", b - 1), h, Tt, F2);
      if (b == cfg_.tap(0)) out.mid_tap = g.mean_per_channel(h);
      if (b == cfg_.tap(1)) out.last_tap = g.mean_per_channel(h);
      if (inference) release_range(g, from, int(g.nodes_.size()) - 1,
                                   {h, out.mid_tap, out.last_tap});
    }
    (void)graph_mark;

    if (!with_decoder) return out;

    // decoder: frequency upsample back to F, then the output heads
    int comp = dec_head(g, pid, "dec.cplx", h);
    int comp_r = g.reshape(g.slice_axis(comp, 0, 0, 1), {Tt, F});
    int comp_i = g.reshape(g.slice_axis(comp, 0, 1, 1), {Tt, F});
    if (cfg_.decoder_style == DecoderStyle::kMaskPlusComplex) {
      int mask = dec_head(g, pid, "dec.mask", h);
      int mask_tf = g.scale(g.sigmoid(g.reshape(mask, {Tt, F})), S(2));
      int xr = g.reshape(g.slice_axis(features, 0, 0, 1), {Tt, F});
      int xi = g.reshape(g.slice_axis(features, 0, 1, 1), {Tt, F});
      out.yr = g.add(g.mul(mask_tf, xr), comp_r);
      out.yi = g.add(g.mul(mask_tf, xi), comp_i);
    } else {
      out.yr = comp_r;
      out.yi = comp_i;
    }
    out.y = g.istft_wave(out.yr, out.yi, stft_, length);
    (void)C;
    (void)F2;
    return out;
  }

  struct ForwardResult {
    std::vector<S> y;
    Tensor<S> yr, yi;
    PooledTaps<S> taps;
  };

  /// Inference-mode forward on a plain feature tensor.
  ForwardResult forward(const Tensor<S>& features, long length, bool with_decoder = true) const {
    Graph<S> g;
    auto pid = bind(g, false);
    int f = g.input(features);
    ForwardNodes n = build_forward(g, pid, f, length, with_decoder);
    ForwardResult r;
    auto to_plain = [](const T& t) { return std::vector<S>(t.v.begin(), t.v.end()); };
    r.taps.encoder_vec = to_plain(g.val(n.enc_tap));
    r.taps.mid_vec = to_plain(g.val(n.mid_tap));
    r.taps.last_vec = to_plain(g.val(n.last_tap));
    if (with_decoder) {
      r.yr = g.val(n.yr);
      r.yi = g.val(n.yi);
      r.y = to_plain(g.val(n.y));
      for (S v : r.y)
        if (!std::isfinite(double(v))) throw Diverged("forward: non-finite output");
    }
    return r;
  }

 private:
  SeparatorConfig cfg_;
  StftConfig stft_;
  ParamSet<S> params_;

  // ---- parameter construction ---------------------------------------------

  void add_tensor(const std::string& name, std::initializer_list<long> dims, double fan_in,
                  double constant = 0.0, bool uniform = false) {
    T t(dims);
    if (uniform) {
      std::mt19937_64 rng(sub_seed(cfg_.init_seed, name));
      t.fill_uniform(rng, std::sqrt(1.0 / fan_in));
    } else if (constant != 0.0) {
      for (auto& v : t.v) v = S(constant);
    }
    params_.add(name, std::move(t));
  }

  void add_conv(const std::string& name, long cout, long cin, long kh, long kw) {
    add_tensor(name + ".w", {cout, cin, kh, kw}, double(cin * kh * kw), 0.0, true);
    add_tensor(name + ".b", {cout}, 1.0);
  }
  void add_linear(const std::string& name, long in, long outd) {
    add_tensor(name + ".w", {in, outd}, double(in), 0.0, true);
    add_tensor(name + ".b", {outd}, 1.0);
  }
  void add_norm(const std::string& name, long n) {
    add_tensor(name + ".g", {n}, 1.0, 1.0);
    add_tensor(name + ".b", {n}, 1.0);
  }
  void add_map_stage(const std::string& name, long c) {  // norm + prelu after a conv
    add_norm(name + ".norm", c);
    add_tensor(name + ".act", {c}, 1.0, 0.25);
  }

  void build_params() {
    const long C = cfg_.channels;
    add_conv("enc.in", C, 3, 1, 1);
    add_map_stage("enc.in", C);
    add_conv("enc.down", C, C, 1, 2 * cfg_.freq_downsample - 1);
    add_map_stage("enc.down", C);
    for (int i = 0; i < cfg_.dense_layers; ++i) {
      add_conv(strfmt("enc.dense%d", i), C, C * (i + 1), 3, 3);
      add_map_stage(strfmt("enc.dense%d", i), C);
    }
    for (int b = 0; b < cfg_.num_blocks; ++b)
      for (const char* st : {"t", "f"}) {
        const std::string p = strfmt("blk%d.%s", b, st);
        for (const char* ffn : {"ffn1", "ffn2"}) {
          add_norm(p + "." + ffn + ".ln", C);
          add_linear(p + "." + ffn + ".l1", C, C * cfg_.ffn_expansion);
          add_linear(p + "." + ffn + ".l2", C * cfg_.ffn_expansion, C);
        }
        add_norm(p + ".attn.ln", C);
        for (const char* m : {"q", "k", "v", "o"}) add_linear(p + ".attn." + m, C, C);
        add_norm(p + ".conv.ln", C);
        add_linear(p + ".conv.pw1", C, 2 * C);
        add_tensor(p + ".conv.dw.w", {long(cfg_.conv_kernel), C}, double(cfg_.conv_kernel), 0.0,
                   true);
        add_tensor(p + ".conv.dw.b", {C}, 1.0);
        add_linear(p + ".conv.pw2", C, C);
        add_norm(p + ".out_ln", C);
      }
    auto add_head = [&](const std::string& p, long outc) {
      add_conv(p + ".up", C, C, 1, 2 * cfg_.freq_downsample - 1);
      add_map_stage(p + ".up", C);
      add_conv(p + ".out", outc, C, 3, 3);
    };
    add_head("dec.cplx", 2);
    if (cfg_.decoder_style == DecoderStyle::kMaskPlusComplex) add_head("dec.mask", 1);
  }

  // ---- graph assembly helpers ----------------------------------------------

  int p(const std::vector<int>& pid, const std::string& name) const {
    int i = params_.find(name);
    if (i < 0) throw InvalidConfig(strfmt("model: unknown parameter %s", name.c_str()));
    return pid[size_t(i)];
  }

  int conv(Graph<S>& g, const std::vector<int>& pid, const std::string& name, int x,
           typename Graph<S>::Conv2dSpec sp) const {
    return g.conv2d(x, p(pid, name + ".w"), p(pid, name + ".b"), sp);
  }

  int act_norm(Graph<S>& g, const std::vector<int>& pid, const std::string& name, int x) const {
    int n = g.instnorm(x, p(pid, name + ".norm.g"), p(pid, name + ".norm.b"));
    return g.prelu(n, p(pid, name + ".act"));
  }

  int linear(Graph<S>& g, const std::vector<int>& pid, const std::string& name, int x) const {
    return g.add_rows(g.matmul(x, p(pid, name + ".w")), p(pid, name + ".b"));
  }

  int ffn(Graph<S>& g, const std::vector<int>& pid, const std::string& p_, int x) const {
    int h = g.layernorm(x, p(pid, p_ + ".ln.g"), p(pid, p_ + ".ln.b"));
    h = g.silu(linear(g, pid, p_ + ".l1", h));
    return linear(g, pid, p_ + ".l2", h);
  }

  int attention(Graph<S>& g, const std::vector<int>& pid, const std::string& p_, int x, long B,
                long L) const {
    const long H = cfg_.attention_heads;
    const long Dh = cfg_.channels / H;
    int h = g.layernorm(x, p(pid, p_ + ".ln.g"), p(pid, p_ + ".ln.b"));
    int q = g.split_heads(linear(g, pid, p_ + ".q", h), B, L, H);
    int k = g.split_heads(linear(g, pid, p_ + ".k", h), B, L, H);
    int v = g.split_heads(linear(g, pid, p_ + ".v", h), B, L, H);
    int scores = g.scale(g.bmm(q, k, true), S(1.0 / std::sqrt(double(Dh))));
    int probs = g.softmax_lastdim(scores);
    int ctx = g.merge_heads(g.bmm(probs, v, false), B, L, H);
    return linear(g, pid, p_ + ".o", ctx);
  }

  int conv_module(Graph<S>& g, const std::vector<int>& pid, const std::string& p_, int x, long B,
                  long L) const {
    const long C = cfg_.channels;
    int h = g.layernorm(x, p(pid, p_ + ".ln.g"), p(pid, p_ + ".ln.b"));
    h = linear(g, pid, p_ + ".pw1", h);
    int a = g.slice_axis(h, 1, 0, C);
    int gate = g.sigmoid(g.slice_axis(h, 1, C, C));
    h = g.mul(a, gate);
    h = g.dwconv_seq(h, p(pid, p_ + ".dw.w"), p(pid, p_ + ".dw.b"), B, L);
    h = g.silu(h);
    return linear(g, pid, p_ + ".pw2", h);
  }

  int conformer_layer(Graph<S>& g, const std::vector<int>& pid, const std::string& p_, int x,
                      long B, long L) const {
    x = g.add(x, g.scale(ffn(g, pid, p_ + ".ffn1", x), S(0.5)));
    x = g.add(x, attention(g, pid, p_ + ".attn", x, B, L));
    x = g.add(x, conv_module(g, pid, p_ + ".conv", x, B, L));
    x = g.add(x, g.scale(ffn(g, pid, p_ + ".ffn2", x), S(0.5)));
    return g.layernorm(x, p(pid, p_ + ".out_ln.g"), p(pid, p_ + ".out_ln.b"));
  }

  /// Two-stage block: conformer along time (each frequency a sequence), then
  /// along frequency (each frame a sequence).
  int conformer_block(Graph<S>& g, const std::vector<int>& pid, const std::string& p_, int h,
                      long Tt, long F2) const {
    const long C = cfg_.channels;
    int t3 = g.permute3(h, 2, 1, 0);  // (C,T,F2) -> (F2,T,C)
    int tok = g.reshape(t3, {F2 * Tt, C});
    tok = conformer_layer(g, pid, p_ + ".t", tok, F2, Tt);
    int back = g.permute3(g.reshape(tok, {F2, Tt, C}), 2, 1, 0);  // -> (C,T,F2)

    int f3 = g.permute3(back, 1, 2, 0);  // (C,T,F2) -> (T,F2,C)
    tok = g.reshape(f3, {Tt * F2, C});
    tok = conformer_layer(g, pid, p_ + ".f", tok, Tt, F2);
    return g.permute3(g.reshape(tok, {Tt, F2, C}), 2, 0, 1);  // -> (C,T,F2)
  }

  int dec_head(Graph<S>& g, const std::vector<int>& pid, const std::string& p_, int h) const {
    int u = g.upsample0_freq(h, cfg_.freq_downsample);
    typename Graph<S>::Conv2dSpec sp;
    sp.pad_f = cfg_.freq_downsample - 1;
    u = conv(g, pid, p_ + ".up", u, sp);
    u = act_norm(g, pid, p_ + ".up", u);
    typename Graph<S>::Conv2dSpec so;
    so.pad_t = 1;
    so.pad_f = 1;
    return conv(g, pid, p_ + ".out", u, so);
  }

  static void release_range(Graph<S>& g, int from, int to, std::initializer_list<int> keep) {
    auto kept = [&](int id) {
      for (int k : keep)
        if (k == id) return true;
      return false;
    };
    for (int i = from; i <= to; ++i)
      if (!kept(i)) g.release(i);
  }
};

// ---- checkpoint I/O ---------------------------------------------------------

namespace ckpt_detail {

constexpr char kMagic[8] = {'S', 'E', 'P', 'A', 'D', 'C', 'K', '1'};

inline void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& s, uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_i32(std::string& s, int32_t v) { put_u32(s, uint32_t(v)); }

struct Reader {
  const unsigned char* p;
  size_t len, pos = 0;
  void need(size_t n) const {
    if (pos + n > len) throw CorruptCheckpoint("checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + size_t(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + size_t(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  int32_t i32() { return int32_t(u32()); }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace ckpt_detail

template <typename S>
void save_params(const SeparatorNet<S>& net, const std::string& path) {
  using namespace ckpt_detail;
  const SeparatorConfig& c = net.config();
  const StftConfig& st = net.stft_config();
  std::string buf(kMagic, sizeof(kMagic));
  put_u32(buf, uint32_t(sizeof(S)));
  put_i32(buf, c.channels);
  put_i32(buf, c.num_blocks);
  put_i32(buf, c.tap_blocks[0]);
  put_i32(buf, c.tap_blocks[1]);
  put_i32(buf, c.attention_heads);
  put_i32(buf, c.freq_downsample);
  put_i32(buf, c.decoder_style == DecoderStyle::kMaskPlusComplex ? 0 : 1);
  put_i32(buf, c.ffn_expansion);
  put_i32(buf, c.conv_kernel);
  put_i32(buf, c.dense_layers);
  put_u64(buf, c.init_seed);
  put_i32(buf, st.n_fft);
  put_i32(buf, st.hop);
  put_i32(buf, st.window == "hann" ? 0 : 1);
  put_i32(buf, st.center ? 1 : 0);

  const auto& ps = net.params();
  put_u32(buf, uint32_t(ps.names.size()));
  for (size_t i = 0; i < ps.names.size(); ++i) {
    put_u32(buf, uint32_t(ps.names[i].size()));
    buf += ps.names[i];
    const auto& t = ps.tensors[i];
    put_u32(buf, uint32_t(t.rank));
    for (int d = 0; d < t.rank; ++d) put_u64(buf, uint64_t(t.dim[size_t(d)]));
    const char* raw = reinterpret_cast<const char*>(t.data());
    buf.append(raw, sizeof(S) * size_t(t.numel()));
  }
  put_u64(buf, fnv1a(buf.substr(0, buf.size())));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(strfmt("cannot write checkpoint: %s", path.c_str()));
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw IoError(strfmt("short write: %s", path.c_str()));
}

/// Load a checkpoint. When `expected` is non-null the embedded model config
/// must match it exactly.
template <typename S>
SeparatorNet<S> load_params(const std::string& path, const SeparatorConfig* expected = nullptr) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointNotFound(strfmt("checkpoint not found: %s", path.c_str()));
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 8 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw CorruptCheckpoint(strfmt("bad checkpoint header: %s", path.c_str()));
  {
    const std::string body = buf.substr(0, buf.size() - 8);
    Reader tail{reinterpret_cast<const unsigned char*>(buf.data()), buf.size(),
                buf.size() - 8};
    if (tail.u64() != fnv1a(body))
      throw CorruptCheckpoint(strfmt("checkpoint checksum mismatch: %s", path.c_str()));
  }

  Reader r{reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 8, sizeof(kMagic)};
  if (r.u32() != sizeof(S))
    throw ConfigMismatch("checkpoint scalar width differs from this build's scalar type");
  SeparatorConfig c;
  c.channels = r.i32();
  c.num_blocks = r.i32();
  c.tap_blocks[0] = r.i32();
  c.tap_blocks[1] = r.i32();
  c.attention_heads = r.i32();
  c.freq_downsample = r.i32();
  c.decoder_style = r.i32() == 0 ? DecoderStyle::kMaskPlusComplex : DecoderStyle::kComplexOnly;
  c.ffn_expansion = r.i32();
  c.conv_kernel = r.i32();
  c.dense_layers = r.i32();
  c.init_seed = r.u64();
  StftConfig st;
  st.n_fft = r.i32();
  st.hop = r.i32();
  st.window = r.i32() == 0 ? "hann" : "rect";
  st.center = r.i32() != 0;

  if (expected && !(c == *expected))
    throw ConfigMismatch(strfmt("checkpoint config does not match the expected model: %s",
                                path.c_str()));

  SeparatorNet<S> net(c, st);
  const uint32_t n = r.u32();
  if (n != net.params().names.size())
    throw CorruptCheckpoint(strfmt("checkpoint tensor count mismatch: %s", path.c_str()));
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    int idx = net.params().find(name);
    if (idx < 0)
      throw CorruptCheckpoint(strfmt("checkpoint names unknown tensor \"%s\"", name.c_str()));
    Tensor<S>& t = net.params().tensors[size_t(idx)];
    const uint32_t rank = r.u32();
    if (int(rank) != t.rank)
      throw CorruptCheckpoint(strfmt("checkpoint rank mismatch for \"%s\"", name.c_str()));
    for (uint32_t d = 0; d < rank; ++d)
      if (long(r.u64()) != t.dim[size_t(d)])
        throw ConfigMismatch(strfmt("checkpoint shape mismatch for \"%s\"", name.c_str()));
    const std::string raw = r.str(sizeof(S) * size_t(t.numel()));
    std::memcpy(t.data(), raw.data(), raw.size());
  }
  return net;
}

}  // namespace sepad
