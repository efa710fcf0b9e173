// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "sepad/stft.hpp"
#include "sepad/tensor.hpp"

namespace sepad {

// Reverse-mode autodiff tape over Tensor<S>. Node ids increase in creation
// order, so the reverse sweep over ids is a valid topological order. Ops are
// coarse (whole-tensor GEMMs, norms, convolutions); gradients are checked
// against central finite differences in the test suite.
template <typename S>
class Graph {
 public:
  using T = Tensor<S>;
  using RowMat = typename T::RowMat;
  using MapMat = typename T::MapMat;
  using CMapMat = typename T::CMapMat;

  struct Node {
    T val;
    T grad;
    std::function<void(Graph&)> back;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;

  const T& val(int id) const { return nodes_[size_t(id)].val; }
  T& grad(int id) { return nodes_[size_t(id)].grad; }
  bool needs_grad(int id) const { return nodes_[size_t(id)].needs_grad; }

  /// Constant leaf; gradients do not flow into it.
  int input(T t) { return new_node(std::move(t), false); }

  /// Trainable leaf.
  int leaf(T t) { return new_node(std::move(t), true); }

  /// Drop a node's stored value (inference-time memory relief). The node must
  /// not be consumed by any later op.
  void release(int id) {
    nodes_[size_t(id)].val.v.clear();
    nodes_[size_t(id)].val.v.shrink_to_fit();
  }

  void backward(int root) {
    Node& r = nodes_[size_t(root)];
    if (r.val.numel() != 1) throw InvalidInput("backward: root must be scalar");
    if (!r.needs_grad) throw InvalidInput("backward: root does not require gradients");
    r.grad = T::zeros_like(r.val);
    r.grad.v[0] = S(1);
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (n.needs_grad && n.back && n.grad.numel() > 0) n.back(*this);
    }
  }

  // ---- elementwise --------------------------------------------------------

  int add(int a, int b) {
    check_same(a, b, "add");
    T out = val(a);
    out.arr() += val(b).arr();
    int id = new_node(std::move(out), needs_grad(a) || needs_grad(b));
    set_back(id, [this, id, a, b](Graph&) {
      accum(a, [&](T& g) { g.arr() += grad(id).arr(); });
      accum(b, [&](T& g) { g.arr() += grad(id).arr(); });
    });
    return id;
  }

  int sub(int a, int b) {
    check_same(a, b, "sub");
    T out = val(a);
    out.arr() -= val(b).arr();
    int id = new_node(std::move(out), needs_grad(a) || needs_grad(b));
    set_back(id, [this, id, a, b](Graph&) {
      accum(a, [&](T& g) { g.arr() += grad(id).arr(); });
      accum(b, [&](T& g) { g.arr() -= grad(id).arr(); });
    });
    return id;
  }

  int mul(int a, int b) {
    check_same(a, b, "mul");
    T out = val(a);
    out.arr() *= val(b).arr();
    int id = new_node(std::move(out), needs_grad(a) || needs_grad(b));
    set_back(id, [this, id, a, b](Graph&) {
      accum(a, [&](T& g) { g.arr() += grad(id).arr() * val(b).arr(); });
      accum(b, [&](T& g) { g.arr() += grad(id).arr() * val(a).arr(); });
    });
    return id;
  }

  int scale(int a, S c) {
    T out = val(a);
    out.arr() *= c;
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a, c](Graph&) {
      accum(a, [&](T& g) { g.arr() += grad(id).arr() * c; });
    });
    return id;
  }

  int abs(int a) {
    T out = val(a);
    out.arr() = out.arr().abs();
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a](Graph&) {
      accum(a, [&](T& g) {
        const auto& x = val(a).v;
        const auto& go = grad(id).v;
        for (size_t i = 0; i < x.size(); ++i)
          g.v[i] += x[i] > S(0) ? go[i] : (x[i] < S(0) ? -go[i] : S(0));
      });
    });
    return id;
  }

  int sigmoid(int a) {
    T out = val(a);
    out.arr() = S(1) / (S(1) + (-out.arr()).exp());
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a](Graph&) {
      accum(a, [&](T& g) {
        auto y = val(id).arr();
        g.arr() += grad(id).arr() * y * (S(1) - y);
      });
    });
    return id;
  }

  int silu(int a) {
    T out = val(a);
    out.arr() = out.arr() / (S(1) + (-out.arr()).exp());
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a](Graph&) {
      accum(a, [&](T& g) {
        auto x = val(a).arr();
        auto sig = S(1) / (S(1) + (-x).exp());
        g.arr() += grad(id).arr() * sig * (S(1) + x * (S(1) - sig));
      });
    });
    return id;
  }

  /// PReLU with one learnable slope per channel; x has shape (C, T, F).
  int prelu(int a, int alpha) {
    const T& x = val(a);
    const T& al = val(alpha);
    if (x.rank != 3 || al.numel() != x.d0()) throw ShapeMismatch("prelu: bad shapes");
    T out = x;
    const long plane = x.d1() * x.d2();
    for (long c = 0; c < x.d0(); ++c) {
      const S s = al.v[size_t(c)];
      S* p = out.data() + c * plane;
      for (long i = 0; i < plane; ++i)
        if (p[i] < S(0)) p[i] *= s;
    }
    int id = new_node(std::move(out), needs_grad(a) || needs_grad(alpha));
    set_back(id, [this, id, a, alpha, plane](Graph&) {
      const T& x2 = val(a);
      const T& al2 = val(alpha);
      const T& go = grad(id);
      accum(a, [&](T& g) {
        for (long c = 0; c < x2.d0(); ++c) {
          const S s = al2.v[size_t(c)];
          const S* xp = x2.data() + c * plane;
          const S* gp = go.data() + c * plane;
          S* dp = g.data() + c * plane;
          for (long i = 0; i < plane; ++i) dp[i] += xp[i] >= S(0) ? gp[i] : s * gp[i];
        }
      });
      accum(alpha, [&](T& g) {
        for (long c = 0; c < x2.d0(); ++c) {
          const S* xp = x2.data() + c * plane;
          const S* gp = go.data() + c * plane;
          S acc = S(0);
          for (long i = 0; i < plane; ++i)
            if (xp[i] < S(0)) acc += gp[i] * xp[i];
          g.v[size_t(c)] += acc;
        }
      });
    });
    return id;
  }

  // ---- shape --------------------------------------------------------------

  int reshape(int a, std::initializer_list<long> dims) {
    T out = val(a);
    long n = 1;
    out.rank = int(dims.size());
    int i = 0;
    for (long d : dims) {
      out.dim[size_t(i++)] = d;
      n *= d;
    }
    for (; i < 4; ++i) out.dim[size_t(i)] = 1;
    if (n != out.numel()) throw ShapeMismatch("reshape: element count mismatch");
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a](Graph&) {
      accum(a, [&](T& g) { g.arr() += grad(id).arr(); });
    });
    return id;
  }

  /// 3-D axis permutation: out[i0,i1,i2] = in at indices placed by perm,
  /// where out dim k comes from input dim perm[k].
  int permute3(int a, int p0, int p1, int p2) {
    const T& x = val(a);
    if (x.rank != 3) throw ShapeMismatch("permute3: rank 3 required");
    const std::array<int, 3> perm{p0, p1, p2};
    T out({x.dim[size_t(p0)], x.dim[size_t(p1)], x.dim[size_t(p2)]});
    permute_copy(x, out, perm, false);
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a, perm](Graph&) {
      accum(a, [&](T& g) { permute_copy(grad(id), g, perm, true); });
    });
    return id;
  }

  int slice_axis(int a, int axis, long start, long len) {
    const T& x = val(a);
    if (axis < 0 || axis >= x.rank) throw ShapeMismatch("slice_axis: bad axis");
    if (start < 0 || start + len > x.dim[size_t(axis)]) throw ShapeMismatch("slice_axis: range");
    T out;
    out.rank = x.rank;
    out.dim = x.dim;
    out.dim[size_t(axis)] = len;
    long n = 1;
    for (int i = 0; i < x.rank; ++i) n *= out.dim[size_t(i)];
    out.v.assign(size_t(n), S(0));
    slice_gather(x, out, axis, start);
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a, axis, start](Graph&) {
      accum(a, [&](T& g) { slice_scatter_add(grad(id), g, axis, start); });
    });
    return id;
  }

  /// Concatenate two rank-3 tensors along dim 0.
  int concat0(int a, int b) {
    const T& x = val(a);
    const T& y = val(b);
    if (x.rank != 3 || y.rank != 3 || x.d1() != y.d1() || x.d2() != y.d2())
      throw ShapeMismatch("concat0: incompatible shapes");
    T out({x.d0() + y.d0(), x.d1(), x.d2()});
    std::copy(x.v.begin(), x.v.end(), out.v.begin());
    std::copy(y.v.begin(), y.v.end(), out.v.begin() + x.numel());
    const long na = x.numel();
    int id = new_node(std::move(out), needs_grad(a) || needs_grad(b));
    set_back(id, [this, id, a, b, na](Graph&) {
      const T& go = grad(id);
      accum(a, [&](T& g) {
        for (long i = 0; i < g.numel(); ++i) g.v[size_t(i)] += go.v[size_t(i)];
      });
      accum(b, [&](T& g) {
        for (long i = 0; i < g.numel(); ++i) g.v[size_t(i)] += go.v[size_t(i + na)];
      });
    });
    return id;
  }

  // ---- linear algebra -----------------------------------------------------

  int matmul(int a, int b) {
    const T& A = val(a);
    const T& B = val(b);
    if (A.rank != 2 || B.rank != 2 || A.d1() != B.d0()) throw ShapeMismatch("matmul: shapes");
    T out({A.d0(), B.d1()});
    out.mat().noalias() = A.mat() * B.mat();
    int id = new_node(std::move(out), needs_grad(a) || needs_grad(b));
    set_back(id, [this, id, a, b](Graph&) {
      const T& G = grad(id);
      accum(a, [&](T& g) { g.mat().noalias() += G.mat() * val(b).mat().transpose(); });
      accum(b, [&](T& g) { g.mat().noalias() += val(a).mat().transpose() * G.mat(); });
    });
    return id;
  }

  /// Batched matmul on rank-3 tensors: (B,M,K) x (B,K,N), or (B,M,K) x
  /// (B,N,K) with trans_b.
  int bmm(int a, int b, bool trans_b) {
    const T& A = val(a);
    const T& B = val(b);
    if (A.rank != 3 || B.rank != 3 || A.d0() != B.d0()) throw ShapeMismatch("bmm: batch");
    const long nb = A.d0(), M = A.d1(), K = A.d2();
    const long N = trans_b ? B.d1() : B.d2();
    if ((trans_b ? B.d2() : B.d1()) != K) throw ShapeMismatch("bmm: inner dim");
    T out({nb, M, N});
    for (long i = 0; i < nb; ++i) {
      CMapMat Ai(A.data() + i * M * K, M, K);
      CMapMat Bi(B.data() + i * (trans_b ? N * K : K * N), trans_b ? N : K, trans_b ? K : N);
      MapMat Oi(out.data() + i * M * N, M, N);
      if (trans_b)
        Oi.noalias() = Ai * Bi.transpose();
      else
        Oi.noalias() = Ai * Bi;
    }
    int id = new_node(std::move(out), needs_grad(a) || needs_grad(b));
    set_back(id, [this, id, a, b, trans_b, nb, M, K, N](Graph&) {
      const T& G = grad(id);
      accum(a, [&](T& g) {
        for (long i = 0; i < nb; ++i) {
          CMapMat Gi(G.data() + i * M * N, M, N);
          CMapMat Bi(val(b).data() + i * (trans_b ? N * K : K * N), trans_b ? N : K,
                     trans_b ? K : N);
          MapMat gi(g.data() + i * M * K, M, K);
          if (trans_b)
            gi.noalias() += Gi * Bi;
          else
            gi.noalias() += Gi * Bi.transpose();
        }
      });
      accum(b, [&](T& g) {
        for (long i = 0; i < nb; ++i) {
          CMapMat Gi(G.data() + i * M * N, M, N);
          CMapMat Ai(val(a).data() + i * M * K, M, K);
          MapMat gi(g.data() + i * (trans_b ? N * K : K * N), trans_b ? N : K, trans_b ? K : N);
          if (trans_b)
            gi.noalias() += Gi.transpose() * Ai;
          else
            gi.noalias() += Ai.transpose() * Gi;
        }
      });
    });
    return id;
  }

  /// (N,C) + bias(C) broadcast over rows.
  int add_rows(int a, int bias) {
    const T& A = val(a);
    const T& B = val(bias);
    if (A.rank != 2 || B.numel() != A.d1()) throw ShapeMismatch("add_rows: shapes");
    T out = A;
    out.mat().rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(B.data(),
                                                                                 B.numel());
    int id = new_node(std::move(out), needs_grad(a) || needs_grad(bias));
    set_back(id, [this, id, a, bias](Graph&) {
      const T& G = grad(id);
      accum(a, [&](T& g) { g.arr() += G.arr(); });
      accum(bias, [&](T& g) {
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(g.data(), g.numel());
        gb += G.mat().colwise().sum();
      });
    });
    return id;
  }

  // ---- normalization ------------------------------------------------------

  /// Layer norm over the last dim of (N,C); gamma/beta have length C.
  int layernorm(int a, int gamma, int beta, S eps = S(1e-5)) {
    return norm_impl(a, gamma, beta, eps, /*per_row_affine=*/false);
  }

  /// Instance norm for (C, T, F) maps: normalizes each channel over T*F;
  /// gamma/beta have length C.
  int instnorm(int a, int gamma, int beta, S eps = S(1e-5)) {
    const T& x = val(a);
    if (x.rank != 3) throw ShapeMismatch("instnorm: rank 3 required");
    const long C = x.d0(), Tt = x.d1(), F = x.d2();
    int flat = reshape(a, {C, Tt * F});
    int y = norm_impl(flat, gamma, beta, eps, /*per_row_affine=*/true);
    return reshape(y, {C, Tt, F});
  }

  // ---- softmax ------------------------------------------------------------

  /// Softmax over the last dimension (any rank).
  int softmax_lastdim(int a) {
    const T& x = val(a);
    const long L = x.dim[size_t(x.rank - 1)];
    const long R = x.numel() / L;
    T out = x;
    {
      MapMat m(out.data(), R, L);
      for (long r = 0; r < R; ++r) {
        auto row = m.row(r).array();
        row -= row.maxCoeff();
        row = row.exp();
        row /= row.sum();
      }
    }
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a, R, L](Graph&) {
      accum(a, [&](T& g) {
        CMapMat P(val(id).data(), R, L);
        CMapMat G(grad(id).data(), R, L);
        MapMat gm(g.data(), R, L);
        for (long r = 0; r < R; ++r) {
          const S dot = (P.row(r).array() * G.row(r).array()).sum();
          gm.row(r).array() += P.row(r).array() * (G.row(r).array() - dot);
        }
      });
    });
    return id;
  }

  // ---- attention head reshuffling ------------------------------------------

  /// (B*T, C) -> (B*H, T, C/H)
  int split_heads(int a, long B, long Tlen, long H) {
    const T& x = val(a);
    if (x.rank != 2 || x.d0() != B * Tlen || x.d1() % H != 0)
      throw ShapeMismatch("split_heads: shapes");
    const long C = x.d1(), Dh = C / H;
    T out({B * H, Tlen, Dh});
    tok_to_heads(x, out, B, Tlen, H, Dh);
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a, B, Tlen, H, Dh](Graph&) {
      accum(a, [&](T& g) { heads_to_tok(grad(id), g, B, Tlen, H, Dh); });
    });
    return id;
  }

  /// (B*H, T, C/H) -> (B*T, C)
  int merge_heads(int a, long B, long Tlen, long H) {
    const T& x = val(a);
    if (x.rank != 3 || x.d0() != B * H || x.d1() != Tlen) throw ShapeMismatch("merge_heads");
    const long Dh = x.d2(), C = Dh * H;
    T out({B * Tlen, C});
    heads_to_tok(x, out, B, Tlen, H, Dh);
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a, B, Tlen, H, Dh](Graph&) {
      accum(a, [&](T& g) { tok_to_heads(grad(id), g, B, Tlen, H, Dh); });
    });
    return id;
  }

  // ---- convolutions -------------------------------------------------------

  struct Conv2dSpec {
    int stride_t = 1, stride_f = 1;
    int pad_t = 0, pad_f = 0;
    int dil_t = 1, dil_f = 1;
  };

  /// x (Cin,T,F) * w (Cout,Cin,kh,kw) + b (Cout) -> (Cout,T',F').
  int conv2d(int x, int w, int b, Conv2dSpec sp) {
    const T& X = val(x);
    const T& W = val(w);
    const T& Bv = val(b);
    if (X.rank != 3 || W.rank != 4 || X.d0() != W.d1()) throw ShapeMismatch("conv2d: shapes");
    if (Bv.numel() != W.d0()) throw ShapeMismatch("conv2d: bias");
    const long Cin = X.d0(), Tt = X.d1(), F = X.d2();
    const long Cout = W.d0(), kh = W.d2(), kw = W.d3();
    const long eff_h = (kh - 1) * sp.dil_t + 1, eff_w = (kw - 1) * sp.dil_f + 1;
    const long To = (Tt + 2 * sp.pad_t - eff_h) / sp.stride_t + 1;
    const long Fo = (F + 2 * sp.pad_f - eff_w) / sp.stride_f + 1;
    if (To < 1 || Fo < 1) throw ShapeMismatch("conv2d: output would be empty");

    T cols = im2col(X, kh, kw, sp, To, Fo);
    T out({Cout, To, Fo});
    {
      // (To*Fo, CinKhKw) x (CinKhKw, Cout)
      RowMat om(To * Fo, Cout);
      om.noalias() = cols.as_mat(To * Fo, Cin * kh * kw) *
                     W.as_mat(Cout, Cin * kh * kw).transpose();
      for (long c = 0; c < Cout; ++c) {
        S* dst = out.data() + c * To * Fo;
        const S bias_c = Bv.v[size_t(c)];
        for (long i = 0; i < To * Fo; ++i) dst[i] = om(i, c) + bias_c;
      }
    }
    int id = new_node(std::move(out), needs_grad(x) || needs_grad(w) || needs_grad(b));
    set_back(id, [this, id, x, w, b, sp, To, Fo, kh, kw](Graph&) {
      const T& X2 = val(x);
      const T& W2 = val(w);
      const long Cin = X2.d0(), Cout = W2.d0();
      const T& G = grad(id);
      // gradient as (To*Fo, Cout)
      RowMat Gm(To * Fo, Cout);
      for (long c = 0; c < Cout; ++c)
        for (long i = 0; i < To * Fo; ++i) Gm(i, c) = G.v[size_t(c * To * Fo + i)];
      T cols = im2col(X2, kh, kw, sp, To, Fo);
      accum(w, [&](T& g) {
        g.as_mat(Cout, Cin * kh * kw).noalias() +=
            Gm.transpose() * cols.as_mat(To * Fo, Cin * kh * kw);
      });
      accum(b, [&](T& g) {
        for (long c = 0; c < Cout; ++c) g.v[size_t(c)] += Gm.col(c).sum();
      });
      accum(x, [&](T& g) {
        RowMat dcols(To * Fo, Cin * kh * kw);
        dcols.noalias() = Gm * W2.as_mat(Cout, Cin * kh * kw);
        col2im_add(dcols, g, kh, kw, sp, To, Fo);
      });
    });
    return id;
  }

  /// Depthwise conv along the sequence axis of (B*L, C) tokens, zero padded
  /// to the same length. w has shape (k, C), bias (C); k must be odd.
  int dwconv_seq(int x, int w, int b, long B, long L) {
    const T& X = val(x);
    const T& W = val(w);
    const T& Bv = val(b);
    if (X.rank != 2 || X.d0() != B * L) throw ShapeMismatch("dwconv_seq: tokens");
    const long C = X.d1(), k = W.d0();
    if (W.rank != 2 || W.d1() != C || k % 2 == 0 || Bv.numel() != C)
      throw ShapeMismatch("dwconv_seq: weights");
    const long pad = k / 2;
    // For tap offset j, output rows [t0, t0+len) read input rows shifted by
    // j-pad within each sequence.
    auto valid = [L, pad](long j, long& t0, long& len) {
      const long shift = j - pad;
      t0 = std::max(0L, -shift);
      const long t1 = std::min(L, L - shift);
      len = t1 - t0;
    };
    T out({B * L, C});
    {
      CMapMat Xm(X.data(), B * L, C);
      CMapMat Wm(W.data(), k, C);
      MapMat Om(out.data(), B * L, C);
      Om.rowwise() = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(Bv.data(), C);
      for (long s = 0; s < B; ++s)
        for (long j = 0; j < k; ++j) {
          long t0, len;
          valid(j, t0, len);
          if (len <= 0) continue;
          Om.middleRows(s * L + t0, len).array() +=
              Xm.middleRows(s * L + t0 + j - pad, len).array().rowwise() *
              Wm.row(j).array();
        }
    }
    int id = new_node(std::move(out), needs_grad(x) || needs_grad(w) || needs_grad(b));
    set_back(id, [this, id, x, w, b, B, L, k = long(W.d0()), C, pad, valid](Graph&) {
      const T& G = grad(id);
      CMapMat Gm(G.data(), B * L, C);
      CMapMat Xm(val(x).data(), B * L, C);
      CMapMat Wm(val(w).data(), k, C);
      accum(x, [&](T& g) {
        MapMat gm(g.data(), B * L, C);
        for (long s = 0; s < B; ++s)
          for (long j = 0; j < k; ++j) {
            long t0, len;
            valid(j, t0, len);
            if (len <= 0) continue;
            gm.middleRows(s * L + t0 + j - pad, len).array() +=
                Gm.middleRows(s * L + t0, len).array().rowwise() *
                Wm.row(j).array();
          }
      });
      accum(w, [&](T& g) {
        MapMat gw(g.data(), k, C);
        for (long s = 0; s < B; ++s)
          for (long j = 0; j < k; ++j) {
            long t0, len;
            valid(j, t0, len);
            if (len <= 0) continue;
            gw.row(j).array() += (Gm.middleRows(s * L + t0, len).array() *
                                  Xm.middleRows(s * L + t0 + j - pad, len).array())
                                     .colwise()
                                     .sum();
          }
      });
      accum(b, [&](T& g) {
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(g.data(), C);
        gb += Gm.colwise().sum();
      });
    });
    return id;
  }

  /// Zero-stuffing frequency upsample: (C,T,F) -> (C,T,(F-1)*factor+1).
  int upsample0_freq(int a, int factor) {
    const T& x = val(a);
    if (x.rank != 3 || factor < 1) throw ShapeMismatch("upsample0_freq");
    const long C = x.d0(), Tt = x.d1(), F = x.d2();
    const long Fo = (F - 1) * factor + 1;
    T out({C, Tt, Fo});
    for (long c = 0; c < C; ++c)
      for (long t = 0; t < Tt; ++t)
        for (long f = 0; f < F; ++f) out.at(c, t, f * factor) = x.at(c, t, f);
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a, factor](Graph&) {
      accum(a, [&](T& g) {
        const T& G = grad(id);
        for (long c = 0; c < g.d0(); ++c)
          for (long t = 0; t < g.d1(); ++t)
            for (long f = 0; f < g.d2(); ++f) g.at(c, t, f) += G.at(c, t, f * factor);
      });
    });
    return id;
  }

  // ---- reductions ---------------------------------------------------------

  /// Mean over (T,F) of each channel map: (C,T,F) -> (C).
  int mean_per_channel(int a) {
    const T& x = val(a);
    if (x.rank != 3) throw ShapeMismatch("mean_per_channel: rank 3 required");
    const long C = x.d0(), plane = x.d1() * x.d2();
    T out({C});
    for (long c = 0; c < C; ++c) {
      typename T::CMapArr p(x.data() + c * plane, plane);
      out.v[size_t(c)] = p.sum() / S(plane);
    }
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a, C, plane](Graph&) {
      accum(a, [&](T& g) {
        for (long c = 0; c < C; ++c) {
          const S gc = grad(id).v[size_t(c)] / S(plane);
          typename T::MapArr p(g.data() + c * plane, plane);
          p += gc;
        }
      });
    });
    return id;
  }

  int mean_all(int a) {
    const T& x = val(a);
    T out({1});
    out.v[0] = x.arr().sum() / S(x.numel());
    int id = new_node(std::move(out), needs_grad(a));
    set_back(id, [this, id, a](Graph&) {
      accum(a, [&](T& g) { g.arr() += grad(id).v[0] / S(g.numel()); });
    });
    return id;
  }

  // ---- inverse STFT -------------------------------------------------------

  /// Envelope-normalized weighted overlap-add inverse of a (frames x bins)
  /// pair of real/imag planes. Linear; backward applies the exact adjoint.
  int istft_wave(int re, int im, const StftConfig& cfg, long length) {
    const T& R = val(re);
    const T& I = val(im);
    if (R.rank != 2 || !R.same_shape(I)) throw ShapeMismatch("istft_wave: planes");
    if (R.d1() != cfg.bins()) throw ShapeMismatch("istft_wave: bins");
    const long frames = R.d0();
    if (frames != cfg.frames_for(length)) throw ShapeMismatch("istft_wave: frames vs length");
    const long pad = cfg.pad();
    const long padded = (frames - 1) * cfg.hop + cfg.n_fft;
    if (padded < pad + length) throw ColaViolation("istft_wave: hop does not cover the output");

    const auto& tab = stables(cfg.n_fft);
    auto env = std::make_shared<std::vector<S>>(size_t(padded), S(0));
    {
      for (long t = 0; t < frames; ++t)
        for (int j = 0; j < cfg.n_fft; ++j)
          (*env)[size_t(t * cfg.hop + j)] += tab.win[size_t(j)] * tab.win[size_t(j)];
      for (long i = 0; i < length; ++i)
        if ((*env)[size_t(i + pad)] < S(1e-10))
          throw ColaViolation("istft_wave: zero window envelope in the output range");
    }

    T out({length});
    {
      RowMat Ft(frames, cfg.n_fft);
      Ft.noalias() = R.mat() * tab.inv_cos;
      Ft.noalias() += I.mat() * tab.inv_sin;
      std::vector<S> buf(size_t(padded), S(0));
      for (long t = 0; t < frames; ++t)
        for (int j = 0; j < cfg.n_fft; ++j)
          buf[size_t(t * cfg.hop + j)] += Ft(t, j) * tab.win[size_t(j)];
      for (long i = 0; i < length; ++i)
        out.v[size_t(i)] = buf[size_t(i + pad)] / (*env)[size_t(i + pad)];
    }
    int id = new_node(std::move(out), needs_grad(re) || needs_grad(im));
    set_back(id, [this, id, re, im, cfg, length, frames, pad, padded, env](Graph&) {
      const auto& tab2 = stables(cfg.n_fft);
      const T& G = grad(id);
      std::vector<S> gpad(size_t(padded), S(0));
      for (long i = 0; i < length; ++i)
        gpad[size_t(i + pad)] = G.v[size_t(i)] / (*env)[size_t(i + pad)];
      RowMat Gf(frames, cfg.n_fft);
      for (long t = 0; t < frames; ++t)
        for (int j = 0; j < cfg.n_fft; ++j)
          Gf(t, j) = gpad[size_t(t * cfg.hop + j)] * tab2.win[size_t(j)];
      accum(re, [&](T& g) { g.mat().noalias() += Gf * tab2.inv_cos.transpose(); });
      accum(im, [&](T& g) { g.mat().noalias() += Gf * tab2.inv_sin.transpose(); });
    });
    return id;
  }

 private:
  struct STables {
    RowMat inv_cos, inv_sin;  // bins x n_fft
    std::vector<S> win;
  };

  const STables& stables(int n_fft) {
    static std::map<int, STables> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n_fft);
    if (it != cache.end()) return it->second;
    const auto& d = dsp_detail::dft_tables(n_fft);
    STables t;
    t.inv_cos = d.inv_cos.cast<S>();
    t.inv_sin = d.inv_sin.cast<S>();
    StftConfig wcfg;
    wcfg.n_fft = n_fft;
    Eigen::VectorXd w = make_window(wcfg);
    t.win.resize(size_t(n_fft));
    for (int j = 0; j < n_fft; ++j) t.win[size_t(j)] = S(w[j]);
    return cache.emplace(n_fft, std::move(t)).first->second;
  }

  int new_node(T val, bool needs) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  void set_back(int id, std::function<void(Graph&)> f) {
    if (nodes_[size_t(id)].needs_grad) nodes_[size_t(id)].back = std::move(f);
  }

  template <typename Fn>
  void accum(int id, Fn&& fn) {
    Node& n = nodes_[size_t(id)];
    if (!n.needs_grad) return;
    if (n.grad.numel() == 0) n.grad = T::zeros_like(n.val);
    fn(n.grad);
  }

  T& ensure_grad(int id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.numel() == 0) n.grad = T::zeros_like(n.val);
    return n.grad;
  }

  void check_same(int a, int b, const char* op) {
    if (!val(a).same_shape(val(b))) throw ShapeMismatch(strfmt("%s: shape mismatch", op));
  }

  // out dims are x dims permuted by perm; reverse=true scatters out into x.
  static void permute_copy(const T& from3, T& to3, const std::array<int, 3>& perm,
                           bool reverse) {
    const T& x = reverse ? to3 : from3;
    std::array<long, 3> xi{};
    const long D0 = x.dim[0], D1 = x.dim[1], D2 = x.dim[2];
    for (long i0 = 0; i0 < D0; ++i0)
      for (long i1 = 0; i1 < D1; ++i1)
        for (long i2 = 0; i2 < D2; ++i2) {
          xi = {i0, i1, i2};
          const long o0 = xi[size_t(perm[0])], o1 = xi[size_t(perm[1])],
                     o2 = xi[size_t(perm[2])];
          if (reverse)
            to3.at(i0, i1, i2) += from3.at(o0, o1, o2);
          else
            to3.at(o0, o1, o2) = from3.at(i0, i1, i2);
        }
  }

  static void slice_bounds(const T& big, int axis, long& outer, long& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= big.dim[size_t(i)];
    for (int i = axis + 1; i < big.rank; ++i) inner *= big.dim[size_t(i)];
  }

  static void slice_gather(const T& big, T& small, int axis, long start) {
    long outer, inner;
    slice_bounds(big, axis, outer, inner);
    const long big_ax = big.dim[size_t(axis)], small_ax = small.dim[size_t(axis)];
    for (long o = 0; o < outer; ++o)
      for (long s = 0; s < small_ax; ++s) {
        const S* bp = big.data() + (o * big_ax + start + s) * inner;
        S* sp = small.data() + (o * small_ax + s) * inner;
        std::copy(bp, bp + inner, sp);
      }
  }

  static void slice_scatter_add(const T& small, T& big, int axis, long start) {
    long outer, inner;
    slice_bounds(big, axis, outer, inner);
    const long big_ax = big.dim[size_t(axis)], small_ax = small.dim[size_t(axis)];
    for (long o = 0; o < outer; ++o)
      for (long s = 0; s < small_ax; ++s) {
        S* bp = big.data() + (o * big_ax + start + s) * inner;
        const S* sp = small.data() + (o * small_ax + s) * inner;
        for (long i = 0; i < inner; ++i) bp[i] += sp[i];
      }
  }

  // tok layout is (B*T, H*Dh); heads layout is (B*H, T, Dh). Both directions
  // accumulate into the destination, which all callers zero-initialize.
  static void tok_to_heads(const T& tok, T& heads, long B, long Tlen, long H, long Dh) {
    for (long b = 0; b < B; ++b)
      for (long h = 0; h < H; ++h)
        for (long t = 0; t < Tlen; ++t) {
          const S* tp = tok.data() + (b * Tlen + t) * (H * Dh) + h * Dh;
          S* hp = heads.data() + ((b * H + h) * Tlen + t) * Dh;
          for (long d = 0; d < Dh; ++d) hp[d] += tp[d];
        }
  }
  static void heads_to_tok(const T& heads, T& tok, long B, long Tlen, long H, long Dh) {
    for (long b = 0; b < B; ++b)
      for (long h = 0; h < H; ++h)
        for (long t = 0; t < Tlen; ++t) {
          const S* hp = heads.data() + ((b * H + h) * Tlen + t) * Dh;
          S* tp = tok.data() + (b * Tlen + t) * (H * Dh) + h * Dh;
          for (long d = 0; d < Dh; ++d) tp[d] += hp[d];
        }
  }

  int norm_impl(int a, int gamma, int beta, S eps, bool per_row_affine) {
    const T& x = val(a);
    if (x.rank != 2) throw ShapeMismatch("norm: rank 2 required");
    const long R = x.d0(), C = x.d1();
    const T& G = val(gamma);
    const T& Bt = val(beta);
    const long affine_len = per_row_affine ? R : C;
    if (G.numel() != affine_len || Bt.numel() != affine_len)
      throw ShapeMismatch("norm: gamma/beta length");
    T out({R, C});
    for (long r = 0; r < R; ++r) {
      typename T::CMapArr xr(x.data() + r * C, C);
      typename T::MapArr yr(out.data() + r * C, C);
      const S mu = xr.sum() / S(C);
      const S var = (xr - mu).square().sum() / S(C);
      const S inv = S(1) / std::sqrt(var + eps);
      if (per_row_affine) {
        yr = ((xr - mu) * inv) * G.v[size_t(r)] + Bt.v[size_t(r)];
      } else {
        typename T::CMapArr ga(G.data(), C), ba(Bt.data(), C);
        yr = ((xr - mu) * inv) * ga + ba;
      }
    }
    int id = new_node(std::move(out), needs_grad(a) || needs_grad(gamma) || needs_grad(beta));
    set_back(id, [this, id, a, gamma, beta, eps, per_row_affine, R, C](Graph&) {
      const T& x2 = val(a);
      const T& G2 = val(gamma);
      const T& Gr = grad(id);
      const bool wa = needs_grad(a), wg = needs_grad(gamma), wb = needs_grad(beta);
      T* da = wa ? &ensure_grad(a) : nullptr;
      T* dg = wg ? &ensure_grad(gamma) : nullptr;
      T* db = wb ? &ensure_grad(beta) : nullptr;
      Eigen::Array<S, Eigen::Dynamic, 1> xhat(C), gg(C);
      for (long r = 0; r < R; ++r) {
        typename T::CMapArr xr(x2.data() + r * C, C);
        typename T::CMapArr gr(Gr.data() + r * C, C);
        const S mu = xr.sum() / S(C);
        const S var = (xr - mu).square().sum() / S(C);
        const S inv = S(1) / std::sqrt(var + eps);
        xhat = (xr - mu) * inv;
        if (per_row_affine)
          gg = gr * G2.v[size_t(r)];
        else {
          typename T::CMapArr ga(G2.data(), C);
          gg = gr * ga;
        }
        const S m1 = gg.sum() / S(C);
        const S m2 = (gg * xhat).sum() / S(C);
        if (wa) {
          typename T::MapArr dx(da->data() + r * C, C);
          dx += inv * (gg - m1 - xhat * m2);
        }
        if (wg) {
          if (per_row_affine)
            dg->v[size_t(r)] += (gr * xhat).sum();
          else {
            typename T::MapArr dgm(dg->data(), C);
            dgm += gr * xhat;
          }
        }
        if (wb) {
          if (per_row_affine)
            db->v[size_t(r)] += gr.sum();
          else {
            typename T::MapArr dbm(db->data(), C);
            dbm += gr;
          }
        }
      }
    });
    return id;
  }

  T im2col(const T& X, long kh, long kw, Conv2dSpec sp, long To, long Fo) {
    const long Cin = X.d0(), Tt = X.d1(), F = X.d2();
    T cols({To * Fo, Cin * kh * kw});
    for (long to = 0; to < To; ++to)
      for (long fo = 0; fo < Fo; ++fo) {
        S* row = cols.data() + (to * Fo + fo) * (Cin * kh * kw);
        for (long c = 0; c < Cin; ++c)
          for (long i = 0; i < kh; ++i) {
            const long ti = to * sp.stride_t - sp.pad_t + i * sp.dil_t;
            for (long j = 0; j < kw; ++j) {
              const long fi = fo * sp.stride_f - sp.pad_f + j * sp.dil_f;
              const long col = (c * kh + i) * kw + j;
              row[col] = (ti < 0 || ti >= Tt || fi < 0 || fi >= F) ? S(0) : X.at(c, ti, fi);
            }
          }
      }
    return cols;
  }

  void col2im_add(const RowMat& dcols, T& dX, long kh, long kw, Conv2dSpec sp, long To,
                  long Fo) {
    const long Cin = dX.d0(), Tt = dX.d1(), F = dX.d2();
    for (long to = 0; to < To; ++to)
      for (long fo = 0; fo < Fo; ++fo) {
        const long row = to * Fo + fo;
        for (long c = 0; c < Cin; ++c)
          for (long i = 0; i < kh; ++i) {
            const long ti = to * sp.stride_t - sp.pad_t + i * sp.dil_t;
            if (ti < 0 || ti >= Tt) continue;
            for (long j = 0; j < kw; ++j) {
              const long fi = fo * sp.stride_f - sp.pad_f + j * sp.dil_f;
              if (fi < 0 || fi >= F) continue;
              dX.at(c, ti, fi) += dcols(row, (c * kh + i) * kw + j);
            }
          }
      }
  }
};

}  // namespace sepad
