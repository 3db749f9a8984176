#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace asrlab {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Global numeric-width switch. Storage is always double; under f32 every
// forward result is rounded to float so training can run at 32-bit width
// while verification suites run at full 64-bit.
enum class Precision { f32, f64 };
void set_precision(Precision p);
Precision precision();

// Dense row-major array of reals. Immutable by convention once an operation
// has produced it.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> data);

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double& at(int r, int c);
  double at(int r, int c) const;

  bool all_finite() const;

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double x);
  static Tensor scalar(double x);
  static Tensor vec(std::vector<double> d);
};

// Rounds every entry through IEEE-754 binary32.
void round_to_f32(std::vector<double>& v);

}  // namespace asrlab
