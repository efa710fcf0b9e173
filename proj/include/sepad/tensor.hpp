// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <random>
#include <vector>

#include "sepad/errors.hpp"

namespace sepad {

// 64-byte aligned storage so Eigen's vectorized kernels see the same
// alignment on every allocation; reduction order (and therefore rounding)
// stays bit-identical across runs.
template <typename T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;
  AlignedAlloc() = default;
  template <typename U>
  AlignedAlloc(const AlignedAlloc<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlign)));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t(kAlign));
  }
  template <typename U>
  bool operator==(const AlignedAlloc<U>&) const {
    return true;
  }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

/// Dense row-major tensor of rank <= 4. The scalar type is a template so the
/// network can train in float and be finite-difference checked in double.
template <typename S>
struct Tensor {
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapMat = Eigen::Map<RowMat>;
  using CMapMat = Eigen::Map<const RowMat>;
  using MapArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
  using CMapArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

  std::array<long, 4> dim{1, 1, 1, 1};
  int rank = 0;
  AlignedVec<S> v;

  Tensor() = default;
  explicit Tensor(std::initializer_list<long> dims) {
    rank = int(dims.size());
    int i = 0;
    long n = 1;
    for (long d : dims) {
      dim[size_t(i++)] = d;
      n *= d;
    }
    v.assign(size_t(n), S(0));
  }

  long numel() const { return long(v.size()); }
  long d0() const { return dim[0]; }
  long d1() const { return dim[1]; }
  long d2() const { return dim[2]; }
  long d3() const { return dim[3]; }

  S* data() { return v.data(); }
  const S* data() const { return v.data(); }

  S& at(long i) { return v[size_t(i)]; }
  S at(long i) const { return v[size_t(i)]; }
  S& at(long i, long j) { return v[size_t(i * dim[1] + j)]; }
  S at(long i, long j) const { return v[size_t(i * dim[1] + j)]; }
  S& at(long i, long j, long k) { return v[size_t((i * dim[1] + j) * dim[2] + k)]; }
  S at(long i, long j, long k) const { return v[size_t((i * dim[1] + j) * dim[2] + k)]; }
  S& at(long i, long j, long k, long l) {
    return v[size_t(((i * dim[1] + j) * dim[2] + k) * dim[3] + l)];
  }

  bool same_shape(const Tensor& o) const { return rank == o.rank && dim == o.dim; }

  /// View the whole buffer as a rows x cols row-major matrix.
  MapMat as_mat(long rows, long cols) {
    if (rows * cols != numel()) throw ShapeMismatch("tensor: bad matrix view");
    return MapMat(v.data(), rows, cols);
  }
  CMapMat as_mat(long rows, long cols) const {
    if (rows * cols != numel()) throw ShapeMismatch("tensor: bad matrix view");
    return CMapMat(v.data(), rows, cols);
  }
  /// 2-D tensors viewed with their own shape.
  MapMat mat() { return as_mat(dim[0], rank >= 2 ? dim[1] : 1); }
  CMapMat mat() const { return as_mat(dim[0], rank >= 2 ? dim[1] : 1); }

  MapArr arr() { return MapArr(v.data(), numel()); }
  CMapArr arr() const { return CMapArr(v.data(), numel()); }

  void set_zero() { std::fill(v.begin(), v.end(), S(0)); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.dim = dim;
    out.rank = rank;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = T(v[i]);
    return out;
  }

  static Tensor zeros_like(const Tensor& o) {
    Tensor t;
    t.dim = o.dim;
    t.rank = o.rank;
    t.v.assign(o.v.size(), S(0));
    return t;
  }

  /// Uniform(-a, a) fill, used for fan-in scaled initialization.
  void fill_uniform(std::mt19937_64& rng, double a) {
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& x : v) x = S(u(rng));
  }
};

}  // namespace sepad
