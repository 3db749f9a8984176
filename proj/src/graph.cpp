#include "asrlab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asrlab/errors.hpp"

namespace asrlab {

const Tensor& Var::val() const { return g->value(id); }
const Shape& Var::shape() const { return g->value(id).shape; }

Var Graph::leaf(Tensor t) { return make(std::move(t), nullptr); }

Var Graph::param(Parameter& p) {
  Var v = make(p.value, nullptr);
  if (recording_) params_.emplace_back(v.id, &p);
  return v;
}

Var Graph::make(Tensor value, BackFn back) {
  if (precision() == Precision::f32) round_to_f32(value.v);
  Node n;
  n.value = std::move(value);
  if (recording_) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::gref(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.v.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

const Tensor& Graph::grad(Var v) { return gref(v.id); }

void Graph::backward(Var loss) {
  if (!recording_) throw ArgError("backward() on a non-recording graph");
  if (ran_backward_) throw ArgError("backward() may run once per graph");
  if (loss.g != this || loss.val().size() != 1) {
    throw ArgError("backward() requires a scalar loss on this graph");
  }
  ran_backward_ = true;
  gref(loss.id).v[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.back && !n.grad.v.empty()) n.back(*this);
  }
  for (auto& [id, p] : params_) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) continue;
    for (size_t i = 0; i < p->grad.v.size(); ++i) p->grad.v[i] += n.grad.v[i];
  }
}

// ---------------------------------------------------------------------------
// raw kernels

void matmul_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * m;
    for (int t = 0; t < k; ++t) {
      double av = arow[t];
      const double* brow = b + static_cast<size_t>(t) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  // c(n,m) += a(n,k) * b(m,k)^T
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += arow[t] * brow[t];
      crow[j] += s;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  // c(n,m) += a(k,n)^T * b(k,m)
  for (int t = 0; t < k; ++t) {
    const double* arow = a + static_cast<size_t>(t) * n;
    const double* brow = b + static_cast<size_t>(t) * m;
    for (int i = 0; i < n; ++i) {
      double av = arow[i];
      double* crow = c + static_cast<size_t>(i) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double log_add(double a, double b, double c) { return log_add(log_add(a, b), c); }

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw ArgError("log_sum_exp: empty vector");
  double hi = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

std::vector<double> softmax_vec(std::span<const double> v) {
  std::vector<double> out(v.size());
  double hi = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - hi);
    s += out[i];
  }
  for (double& x : out) x /= s;
  return out;
}

std::vector<double> layer_norm_vec(std::span<const double> x, std::span<const double> gamma,
                                   std::span<const double> beta, double eps) {
  if (gamma.size() != x.size() || beta.size() != x.size()) {
    throw ArgError("layer_norm: gamma/beta length mismatch");
  }
  if (eps < 0) throw ArgError("layer_norm: eps must be >= 0");
  size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);  // population convention
  double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = gamma[i] * (x[i] - mean) * inv + beta[i];
  return out;
}

// ---------------------------------------------------------------------------
// ops

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ArgError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
  }
}

inline double sigmoid_s(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// id the next make() call will assign
inline int next_id(Graph* g) { return static_cast<int>(g->num_nodes()); }

}  // namespace

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out = a.val();
  const auto& bv = b.val().v;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv[i];
  Graph* g = a.g;
  int ia = a.id, ib = b.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, ib](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    auto& gb = gr.gref(ib).v;
    for (size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] += go[i];
    }
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.val();
  const auto& bv = b.val().v;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= bv[i];
  Graph* g = a.g;
  int ia = a.id, ib = b.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, ib](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    auto& gb = gr.gref(ib).v;
    for (size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] -= go[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.val();
  const auto& bv = b.val().v;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv[i];
  Graph* g = a.g;
  int ia = a.id, ib = b.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, ib](Graph& gr) {
    const auto& go = gr.gref(self).v;
    const auto& av = gr.value(ia).v;
    const auto& bv2 = gr.value(ib).v;
    auto& ga = gr.gref(ia).v;
    auto& gb = gr.gref(ib).v;
    for (size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i] * bv2[i];
      gb[i] += go[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.val();
  for (double& x : out.v) x *= c;
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, c](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    for (size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
  });
}

Var add_rowvec(Var a, Var b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  int rows = av.rows(), cols = av.cols();
  if (bv.rank() != 1 || bv.shape[0] != cols) {
    throw ArgError("add_rowvec: vector length " + shape_str(bv.shape) + " does not match cols " +
                   std::to_string(cols));
  }
  Tensor out = av;
  for (int r = 0; r < rows; ++r) {
    double* row = out.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += bv.v[static_cast<size_t>(c)];
  }
  Graph* g = a.g;
  int ia = a.id, ib = b.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, ib, rows, cols](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    auto& gb = gr.gref(ib).v;
    for (int r = 0; r < rows; ++r) {
      const double* grow = go.data() + static_cast<size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) {
        ga[static_cast<size_t>(r) * cols + c] += grow[c];
        gb[static_cast<size_t>(c)] += grow[c];
      }
    }
  });
}

Var add_const(Var a, const Tensor& c) {
  if (a.shape() != c.shape) throw ArgError("add_const: shape mismatch");
  Tensor out = a.val();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += c.v[i];
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Var mul_const(Var a, const Tensor& c) {
  if (a.shape() != c.shape) throw ArgError("mul_const: shape mismatch");
  Tensor out = a.val();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= c.v[i];
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  Tensor mask = c;
  return g->make(std::move(out), [self, ia, mask = std::move(mask)](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * mask.v[i];
  });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  int n = av.rows(), k = av.cols();
  if (bv.rows() != k) {
    throw ArgError("matmul: inner dims " + shape_str(av.shape) + " x " + shape_str(bv.shape));
  }
  int m = bv.cols();
  Tensor out({n, m});
  matmul_acc(av.data(), bv.data(), out.data(), n, k, m);
  Graph* g = a.g;
  int ia = a.id, ib = b.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, ib, n, k, m](Graph& gr) {
    const Tensor& go = gr.gref(self);
    const Tensor& av2 = gr.value(ia);
    const Tensor& bv2 = gr.value(ib);
    matmul_nt_acc(go.data(), bv2.data(), gr.gref(ia).data(), n, m, k);
    matmul_tn_acc(av2.data(), go.data(), gr.gref(ib).data(), k, n, m);
  });
}

Var transpose(Var a) {
  const Tensor& av = a.val();
  int n = av.rows(), m = av.cols();
  Tensor out({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.v[static_cast<size_t>(j) * n + i] = av.v[static_cast<size_t>(i) * m + j];
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, n, m](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < n; ++i) ga[static_cast<size_t>(i) * m + j] += go[static_cast<size_t>(j) * n + i];
  });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.val();
  int rows = av.rows(), cols = av.cols();
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    auto y = softmax_vec(std::span<const double>(av.data() + static_cast<size_t>(r) * cols,
                                                 static_cast<size_t>(cols)));
    std::copy(y.begin(), y.end(), out.data() + static_cast<size_t>(r) * cols);
  }
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, rows, cols](Graph& gr) {
    const auto& go = gr.gref(self).v;
    const auto& y = gr.value(self).v;
    auto& ga = gr.gref(ia).v;
    for (int r = 0; r < rows; ++r) {
      size_t off = static_cast<size_t>(r) * cols;
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += go[off + c] * y[off + c];
      for (int c = 0; c < cols; ++c) ga[off + c] += (go[off + c] - dot) * y[off + c];
    }
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& av = a.val();
  int rows = av.rows(), cols = av.cols();
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    std::span<const double> row(av.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols));
    double lse = log_sum_exp(row);
    for (int c = 0; c < cols; ++c) out.v[static_cast<size_t>(r) * cols + c] = row[static_cast<size_t>(c)] - lse;
  }
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, rows, cols](Graph& gr) {
    const auto& go = gr.gref(self).v;
    const auto& y = gr.value(self).v;  // log-probs; exp(y) is the softmax
    auto& ga = gr.gref(ia).v;
    for (int r = 0; r < rows; ++r) {
      size_t off = static_cast<size_t>(r) * cols;
      double gsum = 0.0;
      for (int c = 0; c < cols; ++c) gsum += go[off + c];
      for (int c = 0; c < cols; ++c) ga[off + c] += go[off + c] - std::exp(y[off + c]) * gsum;
    }
  });
}

Var sigmoid(Var a) {
  Tensor out = a.val();
  for (double& x : out.v) x = sigmoid_s(x);
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia](Graph& gr) {
    const auto& go = gr.gref(self).v;
    const auto& y = gr.value(self).v;
    auto& ga = gr.gref(ia).v;
    for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
  });
}

Var silu(Var a) {
  Tensor out = a.val();
  for (double& x : out.v) x = x * sigmoid_s(x);
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia](Graph& gr) {
    const auto& go = gr.gref(self).v;
    const auto& x = gr.value(ia).v;
    auto& ga = gr.gref(ia).v;
    for (size_t i = 0; i < go.size(); ++i) {
      double s = sigmoid_s(x[i]);
      ga[i] += go[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.val();
  const Tensor& gv = gamma.val();
  const Tensor& bv = beta.val();
  int rows = xv.rows(), cols = xv.cols();
  if (gv.rank() != 1 || gv.shape[0] != cols || bv.rank() != 1 || bv.shape[0] != cols) {
    throw ArgError("layer_norm: gamma/beta length mismatch");
  }
  if (eps < 0) throw ArgError("layer_norm: eps must be >= 0");
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    auto y = layer_norm_vec(
        std::span<const double>(xv.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)),
        gv.v, bv.v, eps);
    std::copy(y.begin(), y.end(), out.data() + static_cast<size_t>(r) * cols);
  }
  Graph* g = x.g;
  int ix = x.id, ig = gamma.id, ibt = beta.id, self = next_id(g);
  return g->make(std::move(out), [self, ix, ig, ibt, eps, rows, cols](Graph& gr) {
    const auto& go = gr.gref(self).v;
    const auto& xv2 = gr.value(ix).v;
    const auto& gv2 = gr.value(ig).v;
    auto& gx = gr.gref(ix).v;
    auto& gg = gr.gref(ig).v;
    auto& gb = gr.gref(ibt).v;
    double n = static_cast<double>(cols);
    std::vector<double> xc(static_cast<size_t>(cols));
    for (int r = 0; r < rows; ++r) {
      size_t off = static_cast<size_t>(r) * cols;
      double mean = 0.0;
      for (int c = 0; c < cols; ++c) mean += xv2[off + c];
      mean /= n;
      double var = 0.0;
      for (int c = 0; c < cols; ++c) {
        xc[static_cast<size_t>(c)] = xv2[off + c] - mean;
        var += xc[static_cast<size_t>(c)] * xc[static_cast<size_t>(c)];
      }
      var /= n;
      double inv = 1.0 / std::sqrt(var + eps);
      double dvar = 0.0, dmean = 0.0, dxh_dot_xc = 0.0, dxh_sum = 0.0;
      for (int c = 0; c < cols; ++c) {
        double dxh = go[off + c] * gv2[static_cast<size_t>(c)];
        dxh_dot_xc += dxh * xc[static_cast<size_t>(c)];
        dxh_sum += dxh;
        gg[static_cast<size_t>(c)] += go[off + c] * xc[static_cast<size_t>(c)] * inv;
        gb[static_cast<size_t>(c)] += go[off + c];
      }
      dvar = dxh_dot_xc * (-0.5) * inv * inv * inv;
      dmean = -inv * dxh_sum;
      for (int c = 0; c < cols; ++c) {
        double dxh = go[off + c] * gv2[static_cast<size_t>(c)];
        gx[off + c] += dxh * inv + dvar * 2.0 * xc[static_cast<size_t>(c)] / n + dmean / n;
      }
    }
  });
}

Var embedding_rows(Var table, const std::vector<int>& ids, double emb_scale) {
  const Tensor& tv = table.val();
  int vocab = tv.rows(), dim = tv.cols();
  for (int id : ids) {
    if (id < 0 || id >= vocab) throw ArgError("embedding: id " + std::to_string(id) + " out of range");
  }
  int n = static_cast<int>(ids.size());
  Tensor out({n, dim});
  for (int i = 0; i < n; ++i) {
    const double* src = tv.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * dim;
    double* dst = out.data() + static_cast<size_t>(i) * dim;
    for (int c = 0; c < dim; ++c) dst[c] = emb_scale * src[c];
  }
  Graph* g = table.g;
  int it = table.id, self = next_id(g);
  std::vector<int> ids_copy = ids;
  return g->make(std::move(out), [self, it, emb_scale, dim, ids_copy = std::move(ids_copy)](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& gt = gr.gref(it).v;
    for (size_t i = 0; i < ids_copy.size(); ++i) {
      const double* grow = go.data() + i * static_cast<size_t>(dim);
      double* trow = gt.data() + static_cast<size_t>(ids_copy[i]) * dim;
      for (int c = 0; c < dim; ++c) trow[c] += emb_scale * grow[c];
    }
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ArgError("concat_cols: empty input");
  int rows = xs[0].val().rows();
  int total = 0;
  for (const Var& x : xs) {
    if (x.val().rows() != rows) throw ArgError("concat_cols: row mismatch");
    total += x.val().cols();
  }
  Tensor out({rows, total});
  int at = 0;
  std::vector<std::pair<int, int>> parts;  // (id, cols)
  for (const Var& x : xs) {
    int c = x.val().cols();
    for (int r = 0; r < rows; ++r) {
      std::copy_n(x.val().data() + static_cast<size_t>(r) * c, c,
                  out.data() + static_cast<size_t>(r) * total + at);
    }
    parts.emplace_back(x.id, c);
    at += c;
  }
  Graph* g = xs[0].g;
  int self = next_id(g);
  return g->make(std::move(out), [self, rows, total, parts = std::move(parts)](Graph& gr) {
    const auto& go = gr.gref(self).v;
    int at2 = 0;
    for (auto [id, c] : parts) {
      auto& gx = gr.gref(id).v;
      for (int r = 0; r < rows; ++r) {
        const double* src = go.data() + static_cast<size_t>(r) * total + at2;
        double* dst = gx.data() + static_cast<size_t>(r) * c;
        for (int j = 0; j < c; ++j) dst[j] += src[j];
      }
      at2 += c;
    }
  });
}

Var slice_cols(Var a, int start, int n) {
  const Tensor& av = a.val();
  int rows = av.rows(), cols = av.cols();
  if (start < 0 || n < 0 || start + n > cols) throw ArgError("slice_cols: out of range");
  Tensor out({rows, n});
  for (int r = 0; r < rows; ++r) {
    std::copy_n(av.data() + static_cast<size_t>(r) * cols + start, n,
                out.data() + static_cast<size_t>(r) * n);
  }
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, start, n, rows, cols](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    for (int r = 0; r < rows; ++r) {
      const double* src = go.data() + static_cast<size_t>(r) * n;
      double* dst = ga.data() + static_cast<size_t>(r) * cols + start;
      for (int j = 0; j < n; ++j) dst[j] += src[j];
    }
  });
}

Var slice_rows(Var a, int start, int n) {
  const Tensor& av = a.val();
  int rows = av.rows(), cols = av.cols();
  if (start < 0 || n < 0 || start + n > rows) throw ArgError("slice_rows: out of range");
  Tensor out({n, cols});
  std::copy_n(av.data() + static_cast<size_t>(start) * cols, static_cast<size_t>(n) * cols, out.data());
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, start, n, cols](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    for (size_t i = 0; i < static_cast<size_t>(n) * cols; ++i) {
      ga[static_cast<size_t>(start) * cols + i] += go[i];
    }
  });
}

Var unfold_k3s2(Var a) {
  const Tensor& av = a.val();
  int t = av.rows(), c = av.cols();
  if (t < 3) throw ArgError("unfold_k3s2: need at least 3 rows");
  int t2 = (t - 3) / 2 + 1;
  Tensor out({t2, 3 * c});
  for (int i = 0; i < t2; ++i) {
    for (int k = 0; k < 3; ++k) {
      std::copy_n(av.data() + static_cast<size_t>(2 * i + k) * c, c,
                  out.data() + static_cast<size_t>(i) * (3 * c) + static_cast<size_t>(k) * c);
    }
  }
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(std::move(out), [self, ia, t2, c](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    for (int i = 0; i < t2; ++i) {
      for (int k = 0; k < 3; ++k) {
        const double* src = go.data() + static_cast<size_t>(i) * (3 * c) + static_cast<size_t>(k) * c;
        double* dst = ga.data() + static_cast<size_t>(2 * i + k) * c;
        for (int j = 0; j < c; ++j) dst[j] += src[j];
      }
    }
  });
}

Var dwconv_time(Var x, Var w, Var b) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  const Tensor& bv = b.val();
  int t = xv.rows(), c = xv.cols();
  int k = wv.rows();
  if (wv.cols() != c || bv.rank() != 1 || bv.shape[0] != c) throw ArgError("dwconv_time: shape mismatch");
  if (k % 2 == 0) throw ArgError("dwconv_time: kernel must be odd");
  int pad = (k - 1) / 2;
  Tensor out({t, c});
  for (int i = 0; i < t; ++i) {
    double* orow = out.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) orow[j] = bv.v[static_cast<size_t>(j)];
    for (int kk = 0; kk < k; ++kk) {
      int src = i + kk - pad;
      if (src < 0 || src >= t) continue;
      const double* xrow = xv.data() + static_cast<size_t>(src) * c;
      const double* wrow = wv.data() + static_cast<size_t>(kk) * c;
      for (int j = 0; j < c; ++j) orow[j] += wrow[j] * xrow[j];
    }
  }
  Graph* g = x.g;
  int ix = x.id, iw = w.id, ib = b.id, self = next_id(g);
  return g->make(std::move(out), [self, ix, iw, ib, t, c, k, pad](Graph& gr) {
    const auto& go = gr.gref(self).v;
    const auto& xv2 = gr.value(ix).v;
    const auto& wv2 = gr.value(iw).v;
    auto& gx = gr.gref(ix).v;
    auto& gw = gr.gref(iw).v;
    auto& gb = gr.gref(ib).v;
    for (int i = 0; i < t; ++i) {
      const double* grow = go.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) gb[static_cast<size_t>(j)] += grow[j];
      for (int kk = 0; kk < k; ++kk) {
        int src = i + kk - pad;
        if (src < 0 || src >= t) continue;
        const double* xrow = xv2.data() + static_cast<size_t>(src) * c;
        const double* wrow = wv2.data() + static_cast<size_t>(kk) * c;
        double* gxrow = gx.data() + static_cast<size_t>(src) * c;
        double* gwrow = gw.data() + static_cast<size_t>(kk) * c;
        for (int j = 0; j < c; ++j) {
          gxrow[j] += grow[j] * wrow[j];
          gwrow[j] += grow[j] * xrow[j];
        }
      }
    }
  });
}

Var zero_rows(Var a, const std::vector<uint8_t>& keep) {
  const Tensor& av = a.val();
  int rows = av.rows(), cols = av.cols();
  if (static_cast<int>(keep.size()) != rows) throw ArgError("zero_rows: mask length mismatch");
  Tensor out = av;
  for (int r = 0; r < rows; ++r) {
    if (!keep[static_cast<size_t>(r)]) {
      std::fill_n(out.data() + static_cast<size_t>(r) * cols, cols, 0.0);
    }
  }
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  std::vector<uint8_t> keep_copy = keep;
  return g->make(std::move(out), [self, ia, rows, cols, keep_copy = std::move(keep_copy)](Graph& gr) {
    const auto& go = gr.gref(self).v;
    auto& ga = gr.gref(ia).v;
    for (int r = 0; r < rows; ++r) {
      if (!keep_copy[static_cast<size_t>(r)]) continue;
      const double* src = go.data() + static_cast<size_t>(r) * cols;
      double* dst = ga.data() + static_cast<size_t>(r) * cols;
      for (int j = 0; j < cols; ++j) dst[j] += src[j];
    }
  });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ArgError("dropout: rate must be < 1");
  double keep = 1.0 - rate;
  Tensor mask(a.shape());
  for (double& m : mask.v) m = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
  return mul_const(a, mask);
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double x : a.val().v) s += x;
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  return g->make(Tensor::scalar(s), [self, ia](Graph& gr) {
    double go = gr.gref(self).v[0];
    auto& ga = gr.gref(ia).v;
    for (double& x : ga) x += go;
  });
}

Var mean_all(Var a) {
  int64_t n = a.val().size();
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var dot_const(Var a, const Tensor& w) {
  if (a.shape() != w.shape) throw ArgError("dot_const: shape mismatch");
  double s = 0.0;
  const auto& av = a.val().v;
  for (size_t i = 0; i < av.size(); ++i) s += av[i] * w.v[i];
  Graph* g = a.g;
  int ia = a.id, self = next_id(g);
  Tensor wc = w;
  return g->make(Tensor::scalar(s), [self, ia, wc = std::move(wc)](Graph& gr) {
    double go = gr.gref(self).v[0];
    auto& ga = gr.gref(ia).v;
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += go * wc.v[i];
  });
}

namespace {
constexpr double kBceLo = 1e-7;
constexpr double kBceHi = 1.0 - 1e-7;
}  // namespace

Var bce_mean(Var probs, const Tensor& targets, const std::vector<uint8_t>& keep_rows) {
  const Tensor& pv = probs.val();
  int rows = pv.rows(), cols = pv.cols();
  if (targets.shape != pv.shape) throw ArgError("bce_mean: target shape mismatch");
  if (static_cast<int>(keep_rows.size()) != rows) throw ArgError("bce_mean: mask length mismatch");
  int64_t kept = 0;
  for (uint8_t k : keep_rows) kept += k ? 1 : 0;
  double denom = kept > 0 ? static_cast<double>(kept) * cols : 1.0;
  double s = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (!keep_rows[static_cast<size_t>(r)]) continue;
    for (int c = 0; c < cols; ++c) {
      size_t i = static_cast<size_t>(r) * cols + c;
      double p = std::clamp(pv.v[i], kBceLo, kBceHi);
      double y = targets.v[i];
      s -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
  }
  s /= denom;
  Graph* g = probs.g;
  int ip = probs.id, self = next_id(g);
  Tensor tc = targets;
  std::vector<uint8_t> kc = keep_rows;
  return g->make(Tensor::scalar(s),
                 [self, ip, rows, cols, denom, tc = std::move(tc), kc = std::move(kc)](Graph& gr) {
                   double go = gr.gref(self).v[0];
                   const auto& pv2 = gr.value(ip).v;
                   auto& gp = gr.gref(ip).v;
                   for (int r = 0; r < rows; ++r) {
                     if (!kc[static_cast<size_t>(r)]) continue;
                     for (int c = 0; c < cols; ++c) {
                       size_t i = static_cast<size_t>(r) * cols + c;
                       double p = pv2[i];
                       if (p <= kBceLo || p >= kBceHi) continue;  // clamp region: zero slope
                       gp[i] += go * (p - tc.v[i]) / (p * (1.0 - p)) / denom;
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<Var(Graph&, Var)>& fn, const Tensor& point, double step) {
  if (precision() != Precision::f64) throw ArgError("grad_check requires 64-bit precision");
  if (step < 1e-6 || step > 1e-4) throw ArgError("grad_check: step outside [1e-6, 1e-4]");

  Graph g;
  Var x = g.leaf(point);
  Var out = fn(g, x);
  if (out.val().size() != 1) throw ArgError("grad_check: function output is not a scalar");
  g.backward(out);
  Tensor analytic = g.grad(x);

  auto eval = [&fn](const Tensor& p) {
    Graph gg(false);
    Var xx = gg.leaf(p);
    Var o = fn(gg, xx);
    if (o.val().size() != 1) throw ArgError("grad_check: function output is not a scalar");
    return o.val().v[0];
  };

  double max_err = 0.0;
  Tensor probe = point;
  for (size_t i = 0; i < probe.v.size(); ++i) {
    double orig = probe.v[i];
    probe.v[i] = orig + step;
    double fp = eval(probe);
    probe.v[i] = orig - step;
    double fm = eval(probe);
    probe.v[i] = orig;
    double numeric = (fp - fm) / (2.0 * step);
    double a = analytic.v[i];
    double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace asrlab
