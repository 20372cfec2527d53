#include "core/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "core/error.hpp"

namespace md {

namespace {

std::string shape(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  require(a == b, ErrorKind::InvalidArgument,
          std::string(what) + ": size mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, ErrorKind::InvalidArgument,
          "matrix data length " + std::to_string(data_.size()) + " does not match shape " + shape(rows, cols));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), ErrorKind::InvalidArgument,
          "matmul: dimension mismatch " + shape(a.rows(), a.cols()) + " * " + shape(b.rows(), b.cols()));
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Vector matvec(const Matrix& w, std::span<const double> x) {
  require_same_size(w.cols(), x.size(), "matvec");
  Vector y(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) y[r] = dot(w.row(r), x);
  return y;
}

Vector matvec_transposed(const Matrix& w, std::span<const double> x) {
  require_same_size(w.rows(), x.size(), "matvec_transposed");
  Vector y(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double xr = x[r];
    auto wr = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) y[c] += wr[c] * xr;
  }
  return y;
}

void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v, double alpha) {
  require_same_size(m.rows(), u.size(), "add_outer rows");
  require_same_size(m.cols(), v.size(), "add_outer cols");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ur = alpha * u[r];
    auto mr = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) mr[c] += ur * v[c];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector softmax(std::span<const double> z) {
  require(!z.empty(), ErrorKind::InvalidArgument, "softmax: empty input");
  const double zmax = *std::max_element(z.begin(), z.end());
  Vector p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

CrossEntropy cross_entropy(std::span<const double> logits, std::size_t label) {
  require(label < logits.size(), ErrorKind::InvalidArgument,
          "cross_entropy: label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) +
              " classes");
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - zmax);
  const double log_norm = zmax + std::log(sum);

  CrossEntropy out;
  out.loss = log_norm - logits[label];
  out.grad_logits = softmax(logits);
  out.grad_logits[label] -= 1.0;
  return out;
}

Vector linear_forward(const Matrix& w, std::span<const double> x) { return matvec(w, x); }

LinearGrads linear_backward(const Matrix& w, std::span<const double> x, std::span<const double> dy) {
  require_same_size(w.cols(), x.size(), "linear_backward input");
  require_same_size(w.rows(), dy.size(), "linear_backward upstream");
  LinearGrads g{matvec_transposed(w, dy), Matrix(w.rows(), w.cols())};
  add_outer(g.weight, dy, x);
  return g;
}

Vector relu_forward(std::span<const double> x) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Vector relu_backward(std::span<const double> x, std::span<const double> dy) {
  require_same_size(x.size(), dy.size(), "relu_backward");
  Vector dx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

Vector l2_normalize(std::span<const double> v) {
  const double n = norm2(v);
  require(n > 0.0 && std::isfinite(n), ErrorKind::Numeric, "l2_normalize: zero or non-finite norm");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               double weight_decay) {
  require_same_size(params.size(), grads.size(), "adam_step grads");
  require_same_size(params.size(), state.first_moment.size(), "adam_step first moment");
  require_same_size(params.size(), state.second_moment.size(), "adam_step second moment");
  require(lr >= 0.0, ErrorKind::InvalidArgument, "adam_step: negative learning rate");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  const double shrink = 1.0 - lr * weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    params[i] = params[i] * shrink - lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

double lr_at(std::size_t epoch, const Schedule& s) {
  require(s.base_lr >= 0.0, ErrorKind::InvalidArgument, "schedule: negative base learning rate");
  require(s.warmup_epochs <= s.total_epochs, ErrorKind::InvalidArgument, "schedule: warmup exceeds total epochs");
  require(epoch < s.total_epochs, ErrorKind::InvalidArgument,
          "lr_at: epoch " + std::to_string(epoch) + " outside schedule of " + std::to_string(s.total_epochs));
  if (epoch < s.warmup_epochs)
    return s.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(s.warmup_epochs);
  const double phase =
      static_cast<double>(epoch - s.warmup_epochs) / static_cast<double>(s.total_epochs - s.warmup_epochs);
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

double clip_by_global_norm(std::span<const std::span<double>> grads, double max_norm) {
  require(max_norm > 0.0, ErrorKind::InvalidArgument, "clip_by_global_norm: max_norm must be positive");
  double sq = 0.0;
  for (auto g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto g : grads)
      for (double& x : g) x *= scale;
  }
  return norm;
}

double relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult grad_check(const ScalarFunction& f, std::span<const double> params, std::span<const double> analytic,
                           double h) {
  require(h > 0.0, ErrorKind::InvalidArgument, "grad_check: perturbation must be positive");
  require_same_size(params.size(), analytic.size(), "grad_check analytic");

  Vector probe(params.begin(), params.end());
  GradCheckResult result;
  result.numeric.resize(params.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    require(std::isfinite(up) && std::isfinite(down), ErrorKind::Numeric,
            "grad_check: non-finite evaluation at coordinate " + std::to_string(i));
    result.numeric[i] = (up - down) / (2.0 * h);
    const double err = relative_error(analytic[i], result.numeric[i]);
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace md
