#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

namespace cetp {

// Dense row-major matrix of doubles. Row vectors are 1 x n.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.d.begin(), t.d.end(), v);
    return t;
  }
  static Tensor row(std::vector<double> v) {
    Tensor t;
    t.rows = 1;
    t.cols = static_cast<int>(v.size());
    t.d = std::move(v);
    return t;
  }

  double& at(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return d.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

inline int argmax_row(const Tensor& t, int r) {
  int best = 0;
  for (int c = 1; c < t.cols; ++c)
    if (t.at(r, c) > t.at(r, best)) best = c;
  return best;
}

}  // namespace cetp
