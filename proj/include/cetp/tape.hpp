#pragma once

#include <functional>
#include <random>
#include <vector>

#include "cetp/tensor.hpp"

namespace cetp {

struct Parameter;

// Collects softmax row sums while enabled; used by the normalization audit.
struct NormProbe {
  bool enabled = false;
  std::vector<double> row_sums;
  void record(double s) {
    if (enabled) row_sums.push_back(s);
  }
};
NormProbe& norm_probe();

struct Var {
  int i = -1;
};

// Reverse-mode tape over Tensor ops. One tape per forward pass; backward()
// accumulates into the bound Parameters' grad tensors.
class Tape {
 public:
  Var leaf(Tensor t);
  Var param(Parameter& p);

  const Tensor& val(Var v) const { return nodes_[v.i].val; }
  Tensor& grad(Var v) { return nodes_[v.i].grad; }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_rowvec(Var a, Var v);  // a[n,m] + v[1,m] broadcast over rows
  Var add_const(Var a, double c);
  Var scale(Var a, double c);
  Var hadamard(Var a, Var b);
  Var mul_rowscalar(Var a, Var s);  // a[n,m] * s[n,1] broadcast over cols
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, int c0, int c1);  // columns [c0, c1)
  Var gather_rows(Var a, std::vector<int> idx);
  // out[i] = sum of table rows listed in lists[i]; empty list -> zero row
  Var sum_rows_multi(Var table, std::vector<std::vector<int>> lists);
  Var stack_rows(const std::vector<Var>& rows);
  Var mean_rows(Var a);
  Var rowwise_dot(Var a, Var b);  // [n,m],[n,m] -> [n,1]
  Var reshape(Var a, int r, int c);
  Var transpose(Var a);
  // mask: nullptr = all allowed; else same shape, entry > 0 means allowed.
  // Fully masked rows yield an all-zero output row.
  Var softmax_rows(Var a, const Tensor* mask = nullptr);
  Var log_softmax_rows(Var a, const Tensor* mask = nullptr);
  Var gelu(Var a);
  Var tanh_(Var a);
  Var sigmoid_(Var a);
  Var softplus(Var a);
  Var log_(Var a);
  Var layer_norm(Var a, Var gain, Var bias);  // rowwise, eps 1e-5
  Var dropout(Var a, double rate, std::mt19937_64& rng, bool training);
  Var pick(Var a, int r, int c);  // [1,1]
  Var sum_all(Var a);             // [1,1]

  void backward(Var loss);
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&, Node&)> back;
    Parameter* bound = nullptr;
  };
  std::vector<Node> nodes_;

  Var push(Tensor val, std::function<void(Tape&, Node&)> back);
  Tensor& g(int i);

  friend struct TapeAccess;
};

}  // namespace cetp
