#include "cetp/kernels.hpp"

#include <cassert>

namespace cetp::kernels {

namespace {

inline void mm_nn_row(const Tensor& a, const Tensor& b, Tensor& c, int i) {
  const int k = a.cols, m = b.cols;
  const double* arow = a.d.data() + static_cast<size_t>(i) * k;
  double* crow = c.d.data() + static_cast<size_t>(i) * m;
  for (int j = 0; j < m; ++j) crow[j] = 0.0;
  for (int p = 0; p < k; ++p) {
    const double av = arow[p];
    if (av == 0.0) continue;
    const double* brow = b.d.data() + static_cast<size_t>(p) * m;
    for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
  }
}

inline void mm_nt_row(const Tensor& a, const Tensor& b, Tensor& c, int i) {
  const int k = a.cols, m = b.rows;
  const double* arow = a.d.data() + static_cast<size_t>(i) * k;
  double* crow = c.d.data() + static_cast<size_t>(i) * m;
  for (int j = 0; j < m; ++j) {
    const double* brow = b.d.data() + static_cast<size_t>(j) * k;
    double s = 0.0;
    for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
    crow[j] = s;
  }
}

inline void mm_tn_row(const Tensor& a, const Tensor& b, Tensor& c, int i) {
  // c[i][j] = sum_p a[p][i] * b[p][j]
  const int n = a.rows, m = b.cols;
  double* crow = c.d.data() + static_cast<size_t>(i) * m;
  for (int j = 0; j < m; ++j) crow[j] = 0.0;
  for (int p = 0; p < n; ++p) {
    const double av = a.at(p, i);
    if (av == 0.0) continue;
    const double* brow = b.d.data() + static_cast<size_t>(p) * m;
    for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
  }
}

inline long work(long r, long c, long k) { return r * c * k; }

}  // namespace

void mm_nn_serial(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.cols == b.rows);
  c = Tensor(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) mm_nn_row(a, b, c, i);
}

void mm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.cols == b.rows);
  c = Tensor(a.rows, b.cols);
  if (work(a.rows, b.cols, a.cols) < kParallelMinWork) {
    for (int i = 0; i < a.rows; ++i) mm_nn_row(a, b, c, i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) mm_nn_row(a, b, c, i);
}

void mm_nt_serial(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.cols == b.cols);
  c = Tensor(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) mm_nt_row(a, b, c, i);
}

void mm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.cols == b.cols);
  c = Tensor(a.rows, b.rows);
  if (work(a.rows, b.rows, a.cols) < kParallelMinWork) {
    for (int i = 0; i < a.rows; ++i) mm_nt_row(a, b, c, i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) mm_nt_row(a, b, c, i);
}

void mm_tn_serial(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.rows == b.rows);
  c = Tensor(a.cols, b.cols);
  for (int i = 0; i < a.cols; ++i) mm_tn_row(a, b, c, i);
}

void mm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  assert(a.rows == b.rows);
  c = Tensor(a.cols, b.cols);
  if (work(a.cols, b.cols, a.rows) < kParallelMinWork) {
    for (int i = 0; i < a.cols; ++i) mm_tn_row(a, b, c, i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.cols; ++i) mm_tn_row(a, b, c, i);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c;
  mm_nn(a, b, c);
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Tensor c;
  mm_nt(a, b, c);
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  Tensor c;
  mm_tn(a, b, c);
  return c;
}

}  // namespace cetp::kernels
