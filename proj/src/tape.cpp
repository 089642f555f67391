#include "cetp/tape.hpp"

#include <cassert>
#include <cmath>
#include <utility>

#include "cetp/kernels.hpp"
#include "cetp/params.hpp"

namespace cetp {

NormProbe& norm_probe() {
  static NormProbe probe;
  return probe;
}

Var Tape::push(Tensor val, std::function<void(Tape&, Node&)> back) {
  Node n;
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::g(int i) {
  Node& n = nodes_[i];
  if (n.grad.rows == 0) n.grad = Tensor(n.val.rows, n.val.cols);
  return n.grad;
}

Var Tape::leaf(Tensor t) { return push(std::move(t), nullptr); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, nullptr);
  nodes_[v.i].bound = &p;
  return v;
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  assert(ta.same_shape(tb));
  Tensor out = ta;
  for (size_t i = 0; i < out.size(); ++i) out.d[i] += tb.d[i];
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    Tensor& gb = t.g(b.i);
    for (size_t i = 0; i < n.grad.size(); ++i) {
      ga.d[i] += n.grad.d[i];
      gb.d[i] += n.grad.d[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  assert(ta.same_shape(tb));
  Tensor out = ta;
  for (size_t i = 0; i < out.size(); ++i) out.d[i] -= tb.d[i];
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    Tensor& gb = t.g(b.i);
    for (size_t i = 0; i < n.grad.size(); ++i) {
      ga.d[i] += n.grad.d[i];
      gb.d[i] -= n.grad.d[i];
    }
  });
}

Var Tape::add_rowvec(Var a, Var v) {
  const Tensor& ta = val(a);
  const Tensor& tv = val(v);
  assert(tv.rows == 1 && tv.cols == ta.cols);
  Tensor out = ta;
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out.at(r, c) += tv.at(0, c);
  return push(std::move(out), [a, v](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    Tensor& gv = t.g(v.i);
    for (int r = 0; r < n.grad.rows; ++r)
      for (int c = 0; c < n.grad.cols; ++c) {
        ga.at(r, c) += n.grad.at(r, c);
        gv.at(0, c) += n.grad.at(r, c);
      }
  });
}

Var Tape::add_const(Var a, double c) {
  Tensor out = val(a);
  for (double& x : out.d) x += c;
  return push(std::move(out), [a](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (size_t i = 0; i < n.grad.size(); ++i) ga.d[i] += n.grad.d[i];
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = val(a);
  for (double& x : out.d) x *= c;
  return push(std::move(out), [a, c](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (size_t i = 0; i < n.grad.size(); ++i) ga.d[i] += c * n.grad.d[i];
  });
}

Var Tape::hadamard(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  assert(ta.same_shape(tb));
  Tensor out = ta;
  for (size_t i = 0; i < out.size(); ++i) out.d[i] *= tb.d[i];
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    const Tensor& ta = t.val(a);
    const Tensor& tb = t.val(b);
    Tensor& ga = t.g(a.i);
    Tensor& gb = t.g(b.i);
    for (size_t i = 0; i < n.grad.size(); ++i) {
      ga.d[i] += n.grad.d[i] * tb.d[i];
      gb.d[i] += n.grad.d[i] * ta.d[i];
    }
  });
}

Var Tape::mul_rowscalar(Var a, Var s) {
  const Tensor& ta = val(a);
  const Tensor& ts = val(s);
  assert(ts.rows == ta.rows && ts.cols == 1);
  Tensor out = ta;
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out.at(r, c) *= ts.at(r, 0);
  return push(std::move(out), [a, s](Tape& t, Node& n) {
    const Tensor& ta = t.val(a);
    const Tensor& ts = t.val(s);
    Tensor& ga = t.g(a.i);
    Tensor& gs = t.g(s.i);
    for (int r = 0; r < n.grad.rows; ++r) {
      double acc = 0.0;
      for (int c = 0; c < n.grad.cols; ++c) {
        ga.at(r, c) += n.grad.at(r, c) * ts.at(r, 0);
        acc += n.grad.at(r, c) * ta.at(r, c);
      }
      gs.at(r, 0) += acc;
    }
  });
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = kernels::matmul(val(a), val(b));
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    Tensor da = kernels::matmul_nt(n.grad, t.val(b));
    Tensor db = kernels::matmul_tn(t.val(a), n.grad);
    Tensor& ga = t.g(a.i);
    Tensor& gb = t.g(b.i);
    for (size_t i = 0; i < da.size(); ++i) ga.d[i] += da.d[i];
    for (size_t i = 0; i < db.size(); ++i) gb.d[i] += db.d[i];
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  Tensor out = kernels::matmul_nt(val(a), val(b));
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    Tensor da = kernels::matmul(n.grad, t.val(b));
    Tensor db = kernels::matmul_tn(n.grad, t.val(a));
    Tensor& ga = t.g(a.i);
    Tensor& gb = t.g(b.i);
    for (size_t i = 0; i < da.size(); ++i) ga.d[i] += da.d[i];
    for (size_t i = 0; i < db.size(); ++i) gb.d[i] += db.d[i];
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  assert(!parts.empty());
  int rows = val(parts[0]).rows;
  int cols = 0;
  for (Var p : parts) {
    assert(val(p).rows == rows);
    cols += val(p).cols;
  }
  Tensor out(rows, cols);
  int off = 0;
  for (Var p : parts) {
    const Tensor& tp = val(p);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < tp.cols; ++c) out.at(r, off + c) = tp.at(r, c);
    off += tp.cols;
  }
  std::vector<Var> ps = parts;
  return push(std::move(out), [ps](Tape& t, Node& n) {
    int off = 0;
    for (Var p : ps) {
      Tensor& gp = t.g(p.i);
      for (int r = 0; r < n.grad.rows; ++r)
        for (int c = 0; c < gp.cols; ++c) gp.at(r, c) += n.grad.at(r, off + c);
      off += gp.cols;
    }
  });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Tensor& ta = val(a);
  assert(0 <= c0 && c0 < c1 && c1 <= ta.cols);
  Tensor out(ta.rows, c1 - c0);
  for (int r = 0; r < ta.rows; ++r)
    for (int c = c0; c < c1; ++c) out.at(r, c - c0) = ta.at(r, c);
  return push(std::move(out), [a, c0](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (int r = 0; r < n.grad.rows; ++r)
      for (int c = 0; c < n.grad.cols; ++c) ga.at(r, c0 + c) += n.grad.at(r, c);
  });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Tensor& ta = val(a);
  Tensor out(static_cast<int>(idx.size()), ta.cols);
  for (size_t i = 0; i < idx.size(); ++i)
    for (int c = 0; c < ta.cols; ++c) out.at(static_cast<int>(i), c) = ta.at(idx[i], c);
  return push(std::move(out), [a, idx = std::move(idx)](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int c = 0; c < n.grad.cols; ++c)
        ga.at(idx[i], c) += n.grad.at(static_cast<int>(i), c);
  });
}

Var Tape::sum_rows_multi(Var table, std::vector<std::vector<int>> lists) {
  const Tensor& tt = val(table);
  Tensor out(static_cast<int>(lists.size()), tt.cols);
  for (size_t i = 0; i < lists.size(); ++i)
    for (int id : lists[i])
      for (int c = 0; c < tt.cols; ++c) out.at(static_cast<int>(i), c) += tt.at(id, c);
  return push(std::move(out), [table, lists = std::move(lists)](Tape& t, Node& n) {
    Tensor& gt = t.g(table.i);
    for (size_t i = 0; i < lists.size(); ++i)
      for (int id : lists[i])
        for (int c = 0; c < n.grad.cols; ++c)
          gt.at(id, c) += n.grad.at(static_cast<int>(i), c);
  });
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  assert(!rows.empty());
  int cols = val(rows[0]).cols;
  Tensor out(static_cast<int>(rows.size()), cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    const Tensor& tr = val(rows[i]);
    assert(tr.rows == 1 && tr.cols == cols);
    for (int c = 0; c < cols; ++c) out.at(static_cast<int>(i), c) = tr.at(0, c);
  }
  std::vector<Var> rs = rows;
  return push(std::move(out), [rs](Tape& t, Node& n) {
    for (size_t i = 0; i < rs.size(); ++i) {
      Tensor& gr = t.g(rs[i].i);
      for (int c = 0; c < n.grad.cols; ++c) gr.at(0, c) += n.grad.at(static_cast<int>(i), c);
    }
  });
}

Var Tape::mean_rows(Var a) {
  const Tensor& ta = val(a);
  assert(ta.rows > 0);
  Tensor out(1, ta.cols);
  for (int r = 0; r < ta.rows; ++r)
    for (int c = 0; c < ta.cols; ++c) out.at(0, c) += ta.at(r, c);
  for (int c = 0; c < ta.cols; ++c) out.at(0, c) /= ta.rows;
  return push(std::move(out), [a](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    const double inv = 1.0 / ga.rows;
    for (int r = 0; r < ga.rows; ++r)
      for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += n.grad.at(0, c) * inv;
  });
}

Var Tape::rowwise_dot(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  assert(ta.same_shape(tb));
  Tensor out(ta.rows, 1);
  for (int r = 0; r < ta.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < ta.cols; ++c) s += ta.at(r, c) * tb.at(r, c);
    out.at(r, 0) = s;
  }
  return push(std::move(out), [a, b](Tape& t, Node& n) {
    const Tensor& ta = t.val(a);
    const Tensor& tb = t.val(b);
    Tensor& ga = t.g(a.i);
    Tensor& gb = t.g(b.i);
    for (int r = 0; r < ta.rows; ++r) {
      const double gr = n.grad.at(r, 0);
      for (int c = 0; c < ta.cols; ++c) {
        ga.at(r, c) += gr * tb.at(r, c);
        gb.at(r, c) += gr * ta.at(r, c);
      }
    }
  });
}

Var Tape::reshape(Var a, int r, int c) {
  const Tensor& ta = val(a);
  assert(static_cast<size_t>(r) * c == ta.size());
  Tensor out(r, c);
  out.d = ta.d;
  return push(std::move(out), [a](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (size_t i = 0; i < n.grad.size(); ++i) ga.d[i] += n.grad.d[i];
  });
}

Var Tape::transpose(Var a) {
  const Tensor& ta = val(a);
  Tensor out(ta.cols, ta.rows);
  for (int r = 0; r < ta.rows; ++r)
    for (int c = 0; c < ta.cols; ++c) out.at(c, r) = ta.at(r, c);
  return push(std::move(out), [a](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (int r = 0; r < ga.rows; ++r)
      for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += n.grad.at(c, r);
  });
}

namespace {

inline bool allowed(const Tensor* mask, int r, int c) {
  return mask == nullptr || mask->at(r, c) > 0.0;
}

}  // namespace

Var Tape::softmax_rows(Var a, const Tensor* mask) {
  const Tensor& ta = val(a);
  assert(mask == nullptr || mask->same_shape(ta));
  Tensor out(ta.rows, ta.cols);
  for (int r = 0; r < ta.rows; ++r) {
    double mx = -1e300;
    bool any = false;
    for (int c = 0; c < ta.cols; ++c)
      if (allowed(mask, r, c)) {
        any = true;
        mx = std::max(mx, ta.at(r, c));
      }
    if (!any) continue;  // fully masked row stays all-zero
    double z = 0.0;
    for (int c = 0; c < ta.cols; ++c)
      if (allowed(mask, r, c)) z += std::exp(ta.at(r, c) - mx);
    double rowsum = 0.0;
    for (int c = 0; c < ta.cols; ++c)
      if (allowed(mask, r, c)) {
        out.at(r, c) = std::exp(ta.at(r, c) - mx) / z;
        rowsum += out.at(r, c);
      }
    norm_probe().record(rowsum);
  }
  Tensor mask_copy;
  bool has_mask = mask != nullptr;
  if (has_mask) mask_copy = *mask;
  return push(std::move(out),
              [a, has_mask, mask_copy = std::move(mask_copy)](Tape& t, Node& n) {
                const Tensor* m = has_mask ? &mask_copy : nullptr;
                Tensor& ga = t.g(a.i);
                const Tensor& y = n.val;
                for (int r = 0; r < y.rows; ++r) {
                  double dot = 0.0;
                  for (int c = 0; c < y.cols; ++c)
                    if (allowed(m, r, c)) dot += n.grad.at(r, c) * y.at(r, c);
                  for (int c = 0; c < y.cols; ++c)
                    if (allowed(m, r, c))
                      ga.at(r, c) += y.at(r, c) * (n.grad.at(r, c) - dot);
                }
              });
}

Var Tape::log_softmax_rows(Var a, const Tensor* mask) {
  const Tensor& ta = val(a);
  assert(mask == nullptr || mask->same_shape(ta));
  Tensor out(ta.rows, ta.cols);
  for (int r = 0; r < ta.rows; ++r) {
    double mx = -1e300;
    bool any = false;
    for (int c = 0; c < ta.cols; ++c)
      if (allowed(mask, r, c)) {
        any = true;
        mx = std::max(mx, ta.at(r, c));
      }
    if (!any) continue;
    double z = 0.0;
    for (int c = 0; c < ta.cols; ++c)
      if (allowed(mask, r, c)) z += std::exp(ta.at(r, c) - mx);
    const double lse = mx + std::log(z);
    for (int c = 0; c < ta.cols; ++c)
      if (allowed(mask, r, c)) out.at(r, c) = ta.at(r, c) - lse;
  }
  Tensor mask_copy;
  bool has_mask = mask != nullptr;
  if (has_mask) mask_copy = *mask;
  return push(std::move(out),
              [a, has_mask, mask_copy = std::move(mask_copy)](Tape& t, Node& n) {
                const Tensor* m = has_mask ? &mask_copy : nullptr;
                Tensor& ga = t.g(a.i);
                const Tensor& y = n.val;
                for (int r = 0; r < y.rows; ++r) {
                  bool any = false;
                  double gsum = 0.0;
                  for (int c = 0; c < y.cols; ++c)
                    if (allowed(m, r, c)) {
                      any = true;
                      gsum += n.grad.at(r, c);
                    }
                  if (!any) continue;
                  for (int c = 0; c < y.cols; ++c)
                    if (allowed(m, r, c))
                      ga.at(r, c) += n.grad.at(r, c) - std::exp(y.at(r, c)) * gsum;
                }
              });
}

Var Tape::gelu(Var a) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  for (double& x : out.d) x = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
  return push(std::move(out), [a](Tape& t, Node& n) {
    const Tensor& x = t.val(a);
    Tensor& ga = t.g(a.i);
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (size_t i = 0; i < x.size(); ++i) {
      const double v = x.d[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      ga.d[i] += n.grad.d[i] * (cdf + v * pdf);
    }
  });
}

Var Tape::tanh_(Var a) {
  Tensor out = val(a);
  for (double& x : out.d) x = std::tanh(x);
  return push(std::move(out), [a](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (size_t i = 0; i < n.val.size(); ++i)
      ga.d[i] += n.grad.d[i] * (1.0 - n.val.d[i] * n.val.d[i]);
  });
}

Var Tape::sigmoid_(Var a) {
  Tensor out = val(a);
  for (double& x : out.d) x = 1.0 / (1.0 + std::exp(-x));
  return push(std::move(out), [a](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (size_t i = 0; i < n.val.size(); ++i)
      ga.d[i] += n.grad.d[i] * n.val.d[i] * (1.0 - n.val.d[i]);
  });
}

Var Tape::softplus(Var a) {
  Tensor out = val(a);
  for (double& x : out.d) x = (x > 0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x)));
  return push(std::move(out), [a](Tape& t, Node& n) {
    const Tensor& x = t.val(a);
    Tensor& ga = t.g(a.i);
    for (size_t i = 0; i < x.size(); ++i)
      ga.d[i] += n.grad.d[i] / (1.0 + std::exp(-x.d[i]));
  });
}

Var Tape::log_(Var a) {
  Tensor out = val(a);
  for (double& x : out.d) x = std::log(x);
  return push(std::move(out), [a](Tape& t, Node& n) {
    const Tensor& x = t.val(a);
    Tensor& ga = t.g(a.i);
    for (size_t i = 0; i < x.size(); ++i) ga.d[i] += n.grad.d[i] / x.d[i];
  });
}

Var Tape::layer_norm(Var a, Var gain, Var bias) {
  constexpr double kEps = 1e-5;
  const Tensor& ta = val(a);
  const Tensor& tg = val(gain);
  const Tensor& tb = val(bias);
  assert(tg.rows == 1 && tg.cols == ta.cols && tb.rows == 1 && tb.cols == ta.cols);
  Tensor out(ta.rows, ta.cols);
  for (int r = 0; r < ta.rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < ta.cols; ++c) mu += ta.at(r, c);
    mu /= ta.cols;
    double var = 0.0;
    for (int c = 0; c < ta.cols; ++c) {
      const double d = ta.at(r, c) - mu;
      var += d * d;
    }
    var /= ta.cols;
    const double inv = 1.0 / std::sqrt(var + kEps);
    for (int c = 0; c < ta.cols; ++c)
      out.at(r, c) = (ta.at(r, c) - mu) * inv * tg.at(0, c) + tb.at(0, c);
  }
  return push(std::move(out), [a, gain, bias](Tape& t, Node& n) {
    constexpr double kE = 1e-5;
    const Tensor& x = t.val(a);
    const Tensor& tg = t.val(gain);
    Tensor& ga = t.g(a.i);
    Tensor& gg = t.g(gain.i);
    Tensor& gb = t.g(bias.i);
    const int m = x.cols;
    for (int r = 0; r < x.rows; ++r) {
      double mu = 0.0;
      for (int c = 0; c < m; ++c) mu += x.at(r, c);
      mu /= m;
      double var = 0.0;
      for (int c = 0; c < m; ++c) {
        const double d = x.at(r, c) - mu;
        var += d * d;
      }
      var /= m;
      const double inv = 1.0 / std::sqrt(var + kE);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int c = 0; c < m; ++c) {
        const double xhat = (x.at(r, c) - mu) * inv;
        const double dy = n.grad.at(r, c);
        gg.at(0, c) += dy * xhat;
        gb.at(0, c) += dy;
        const double dxhat = dy * tg.at(0, c);
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
      }
      for (int c = 0; c < m; ++c) {
        const double xhat = (x.at(r, c) - mu) * inv;
        const double dxhat = n.grad.at(r, c) * tg.at(0, c);
        ga.at(r, c) += inv * (dxhat - sum_dxhat / m - xhat * sum_dxhat_xhat / m);
      }
    }
  });
}

Var Tape::dropout(Var a, double rate, std::mt19937_64& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  const Tensor& ta = val(a);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor keep(ta.rows, ta.cols);
  const double scale = 1.0 / (1.0 - rate);
  Tensor out = ta;
  for (size_t i = 0; i < ta.size(); ++i) {
    const bool k = u(rng) >= rate;
    keep.d[i] = k ? scale : 0.0;
    out.d[i] *= keep.d[i];
  }
  return push(std::move(out), [a, keep = std::move(keep)](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (size_t i = 0; i < n.grad.size(); ++i) ga.d[i] += n.grad.d[i] * keep.d[i];
  });
}

Var Tape::pick(Var a, int r, int c) {
  Tensor out(1, 1);
  out.at(0, 0) = val(a).at(r, c);
  return push(std::move(out), [a, r, c](Tape& t, Node& n) {
    t.g(a.i).at(r, c) += n.grad.at(0, 0);
  });
}

Var Tape::sum_all(Var a) {
  Tensor out(1, 1);
  for (double x : val(a).d) out.at(0, 0) += x;
  return push(std::move(out), [a](Tape& t, Node& n) {
    Tensor& ga = t.g(a.i);
    for (double& x : ga.d) x += n.grad.at(0, 0);
  });
}

void Tape::backward(Var loss) {
  assert(val(loss).rows == 1 && val(loss).cols == 1);
  g(loss.i).at(0, 0) = 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.rows == 0) continue;  // not reached by any downstream grad
    if (n.back) n.back(*this, n);
    if (n.bound != nullptr) {
      Tensor& pg = n.bound->grad;
      for (size_t k = 0; k < n.grad.size(); ++k) pg.d[k] += n.grad.d[k];
    }
  }
}

}  // namespace cetp
