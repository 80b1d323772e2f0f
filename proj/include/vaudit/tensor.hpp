// tensor.hpp -- dense row-major tensor of a scalar type, plus the gemm
// kernel the autodiff tape is built on. No views, no broadcasting; ops that
// need structure (batch, heads) carry it explicitly.
#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

#include "vaudit/io.hpp"

namespace vaudit {

template <class S = float>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> sh) : shape(std::move(sh)) {
    data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  }
  static Tensor zeros(std::vector<int64_t> sh) { return Tensor(std::move(sh)); }
  static Tensor scalar(S v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }

  static int64_t numel_of(const std::vector<int64_t>& sh) {
    int64_t n = 1;
    for (int64_t d : sh) n *= d;
    return n;
  }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  S& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  S at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  S& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  S at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }

  const S* row_ptr(int64_t i) const { return data.data() + i * cols(); }
  S* row_ptr(int64_t i) { return data.data() + i * cols(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }
  void add_inplace(const Tensor& o) {
    assert(same_shape(o));
    for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
  }
  void scale_inplace(S c) {
    for (auto& v : data) v *= c;
  }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

// C (n,m) += op(A) * op(B) with op controlled by ta/tb. A is (n,k) or (k,n),
// B is (k,m) or (m,k). Row-major, accumulating, sequential (deterministic).
template <class S>
void gemm_acc(bool ta, bool tb, int64_t n, int64_t m, int64_t k,
              const S* __restrict a, const S* __restrict b, S* __restrict c) {
  if (!ta && !tb) {
    for (int64_t i = 0; i < n; ++i) {
      const S* arow = a + i * k;
      S* crow = c + i * m;
      for (int64_t p = 0; p < k; ++p) {
        S av = arow[p];
        if (av == S(0)) continue;
        const S* brow = b + p * m;
        for (int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (int64_t i = 0; i < n; ++i) {
      const S* arow = a + i * k;
      S* crow = c + i * m;
      for (int64_t j = 0; j < m; ++j) {
        const S* brow = b + j * k;
        S acc = S(0);
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  } else if (ta && !tb) {
    for (int64_t p = 0; p < k; ++p) {
      const S* arow = a + p * n;
      const S* brow = b + p * m;
      for (int64_t i = 0; i < n; ++i) {
        S av = arow[i];
        if (av == S(0)) continue;
        S* crow = c + i * m;
        for (int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j) {
        S acc = S(0);
        for (int64_t p = 0; p < k; ++p) acc += a[p * n + i] * b[j * k + p];
        c[i * m + j] += acc;
      }
  }
}

}  // namespace vaudit
