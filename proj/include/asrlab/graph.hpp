#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "asrlab/tensor.hpp"
#include "asrlab/util.hpp"

namespace asrlab {

// Trainable tensor with an accumulating gradient buffer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor val)
      : name(std::move(n)), value(std::move(val)), grad(Tensor::zeros(value.shape)) {}

  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
};

class Graph;

// Handle to a node on a Graph tape.
struct Var {
  Graph* g = nullptr;
  int id = -1;

  const Tensor& val() const;
  const Shape& shape() const;
  bool valid() const { return g != nullptr && id >= 0; }
};

// Reverse-mode tape. Ops append nodes in topological order; backward() walks
// the tape once in reverse. A graph is built per forward pass and discarded.
// With recording off, ops skip backward closures (inference mode).
class Graph {
 public:
  using BackFn = std::function<void(Graph&)>;

  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor t);
  // Leaf backed by a Parameter; after backward() the node gradient is
  // accumulated into p.grad. Single-writer: one backward per graph.
  Var param(Parameter& p);

  void backward(Var loss);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(Var v);

  bool recording() const { return recording_; }
  size_t num_nodes() const { return nodes_.size(); }

  Var make(Tensor value, BackFn back);
  Tensor& gref(int id);  // gradient buffer, allocated on first touch
  bool grad_live(int id) const { return !nodes_[static_cast<size_t>(id)].grad.v.empty(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<int, Parameter*>> params_;
  bool recording_;
  bool ran_backward_ = false;
};

// ---------------------------------------------------------------------------
// Operations. All are deterministic; forward results are rounded when the
// global precision is f32.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_rowvec(Var a, Var b);                 // a:(R,C) + b:(C) broadcast over rows
Var add_const(Var a, const Tensor& c);        // constant offset (masks, positions)
Var mul_const(Var a, const Tensor& c);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var sigmoid(Var a);
Var silu(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps);
Var embedding_rows(Var table, const std::vector<int>& ids, double emb_scale);
Var concat_cols(const std::vector<Var>& xs);
Var slice_cols(Var a, int start, int n);
Var slice_rows(Var a, int start, int n);
Var unfold_k3s2(Var a);                       // kernel-3 stride-2 frame stacking
Var dwconv_time(Var x, Var w, Var b);         // depthwise over rows, same padding
Var zero_rows(Var a, const std::vector<uint8_t>& keep);
Var dropout(Var a, double rate, Rng& rng);
Var sum_all(Var a);
Var mean_all(Var a);
Var dot_const(Var a, const Tensor& w);        // scalar <a, w>
Var bce_mean(Var probs, const Tensor& targets, const std::vector<uint8_t>& keep_rows);

inline Var operator+(Var a, Var b) { return add(a, b); }

// ---------------------------------------------------------------------------
// Plain-math helpers shared by ops, losses and decoders.

// log sum exp with max-shift; exact for single-element input.
double log_sum_exp(std::span<const double> v);
double log_add(double a, double b);
double log_add(double a, double b, double c);

std::vector<double> softmax_vec(std::span<const double> v);
std::vector<double> layer_norm_vec(std::span<const double> x, std::span<const double> gamma,
                                   std::span<const double> beta, double eps);

// Raw GEMM kernels (row-major). C += op(A) * op(B).
void matmul_acc(const double* a, const double* b, double* c, int n, int k, int m);
void matmul_nt_acc(const double* a, const double* b, double* c, int n, int k, int m);  // A * B^T
void matmul_tn_acc(const double* a, const double* b, double* c, int n, int k, int m);  // A^T * B

// ---------------------------------------------------------------------------
// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences, component-wise over `point`. Returns
// max_i |analytic - numeric| / max(1, |analytic|, |numeric|).
// Requires 64-bit precision and a scalar function output.
double grad_check(const std::function<Var(Graph&, Var)>& fn, const Tensor& point, double step);

}  // namespace asrlab
