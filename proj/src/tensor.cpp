#include "asrlab/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "asrlab/errors.hpp"

namespace asrlab {

namespace {
std::atomic<Precision> g_precision{Precision::f64};
}

void set_precision(Precision p) { g_precision.store(p, std::memory_order_relaxed); }
Precision precision() { return g_precision.load(std::memory_order_relaxed); }

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) {
    if (e < 0) throw ArgError("negative extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream ss;
  ss << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) ss << ",";
    ss << s[i];
  }
  ss << ")";
  return ss.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
  if (static_cast<int64_t>(v.size()) != shape_numel(shape)) {
    throw ArgError("tensor data length does not match shape " + shape_str(shape));
  }
}

int Tensor::rows() const {
  if (rank() != 2) throw ArgError("rows(): tensor is not 2-D, shape " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw ArgError("cols(): tensor is not 2-D, shape " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
double Tensor::at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }

bool Tensor::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tensor Tensor::full(Shape s, double x) {
  Tensor t(std::move(s));
  for (double& e : t.v) e = x;
  return t;
}

Tensor Tensor::scalar(double x) {
  Tensor t({1});
  t.v[0] = x;
  return t;
}

Tensor Tensor::vec(std::vector<double> d) {
  int n = static_cast<int>(d.size());
  return Tensor({n}, std::move(d));
}

void round_to_f32(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace asrlab
