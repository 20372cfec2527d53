#pragma once

// Dense kernels for the hand-derived training path: a row-major matrix,
// fixed-architecture layer forward/backward, softmax cross-entropy, Adam with
// decoupled weight decay, the warmup/cosine schedule, and a central-difference
// gradient checker. Everything works in 64-bit floats.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace md {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// y = W x
Vector matvec(const Matrix& w, std::span<const double> x);
// y = W^T x
Vector matvec_transposed(const Matrix& w, std::span<const double> x);
// m += alpha * outer(u, v)
void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v, double alpha = 1.0);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

Vector softmax(std::span<const double> z);

struct CrossEntropy {
  double loss = 0.0;
  Vector grad_logits;
};

// loss = -log softmax(logits)[label]; grad = softmax(logits) - onehot(label).
CrossEntropy cross_entropy(std::span<const double> logits, std::size_t label);

struct LinearGrads {
  Vector input;   // W^T dy
  Matrix weight;  // outer(dy, x)
};

Vector linear_forward(const Matrix& w, std::span<const double> x);
LinearGrads linear_backward(const Matrix& w, std::span<const double> x, std::span<const double> dy);

Vector relu_forward(std::span<const double> x);
// Passes dy where x > 0; the subgradient at 0 is taken as 0.
Vector relu_backward(std::span<const double> x, std::span<const double> dy);

Vector l2_normalize(std::span<const double> v);

struct AdamState {
  std::uint64_t step = 0;
  Vector first_moment;
  Vector second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_size(std::size_t n) { return AdamState{0, Vector(n, 0.0), Vector(n, 0.0)}; }
};

// Decoupled weight decay (params *= 1 - lr*weight_decay) followed by a
// bias-corrected Adam update. Increments state.step.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               double weight_decay);

struct Schedule {
  double base_lr = 5e-5;
  std::size_t warmup_epochs = 5;
  std::size_t total_epochs = 10;
};

// Linear warmup base*(epoch+1)/warmup, then cosine decay towards zero.
double lr_at(std::size_t epoch, const Schedule& s);

// Scales every gradient block by min(1, max_norm / global_norm). Returns the
// norm measured before clipping.
double clip_by_global_norm(std::span<const std::span<double>> grads, double max_norm);

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric) noexcept;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  Vector numeric;
};

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences (f(p+h e_i) - f(p-h e_i)) / 2h for every coordinate,
// compared against `analytic`. Throws Numeric on a non-finite evaluation.
GradCheckResult grad_check(const ScalarFunction& f, std::span<const double> params,
                           std::span<const double> analytic, double h = 1e-5);

}  // namespace md
