#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace rayzer {

// Dense row-major matrix. The whole numeric stack (tokens, weights, images)
// is 2-D; scalars are 1x1.
template <typename T>
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<T> a;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), a(size_t(r) * size_t(c), T(0)) {}

  size_t size() const { return a.size(); }
  T& operator()(int r, int c) { return a[size_t(r) * cols + c]; }
  const T& operator()(int r, int c) const { return a[size_t(r) * cols + c]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  static Tensor full(int r, int c, T v) {
    Tensor t(r, c);
    for (auto& x : t.a) x = v;
    return t;
  }

  static Tensor scalar(T v) { return full(1, 1, v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(rows, cols);
    for (size_t i = 0; i < a.size(); ++i) t.a[i] = U(a[i]);
    return t;
  }
};

// C += A * B, ikj order so the inner loop is contiguous in B and C.
template <typename T>
void matmul_acc(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C) {
  assert(A.cols == B.rows && C.rows == A.rows && C.cols == B.cols);
  const int n = A.rows, k = A.cols, m = B.cols;
  for (int i = 0; i < n; ++i) {
    const T* arow = &A.a[size_t(i) * k];
    T* crow = &C.a[size_t(i) * m];
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = &B.a[size_t(p) * m];
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& A, const Tensor<T>& B) {
  Tensor<T> C(A.rows, B.cols);
  matmul_acc(A, B, C);
  return C;
}

// C += A * B^T
template <typename T>
void matmul_nt_acc(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C) {
  assert(A.cols == B.cols && C.rows == A.rows && C.cols == B.rows);
  const int n = A.rows, k = A.cols, m = B.rows;
  for (int i = 0; i < n; ++i) {
    const T* arow = &A.a[size_t(i) * k];
    T* crow = &C.a[size_t(i) * m];
    for (int j = 0; j < m; ++j) {
      const T* brow = &B.a[size_t(j) * k];
      T s = T(0);
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& A, const Tensor<T>& B) {
  Tensor<T> C(A.rows, B.rows);
  matmul_nt_acc(A, B, C);
  return C;
}

// C += A^T * B
template <typename T>
void matmul_tn_acc(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C) {
  assert(A.rows == B.rows && C.rows == A.cols && C.cols == B.cols);
  const int n = A.cols, k = A.rows, m = B.cols;
  for (int p = 0; p < k; ++p) {
    const T* arow = &A.a[size_t(p) * n];
    const T* brow = &B.a[size_t(p) * m];
    for (int i = 0; i < n; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = &C.a[size_t(i) * m];
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace rayzer
