#include "tsfn/numlib.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsfn/error.hpp"

namespace tsfn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: data length does not match rows*cols");
  }
}

Matrix Matrix::outer(std::span<const double> left, std::span<const double> right) {
  Matrix m(left.size(), right.size());
  for (std::size_t r = 0; r < left.size(); ++r) {
    for (std::size_t c = 0; c < right.size(); ++c) {
      m(r, c) = left[r] * right[c];
    }
  }
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      t(c, r) = (*this)(r, c);
    }
  }
  return t;
}

std::vector<double> Matrix::multiply(std::span<const double> v) const {
  if (v.size() != cols_) {
    throw ShapeError("Matrix::multiply: vector length mismatch");
  }
  std::vector<double> out(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) {
      acc += (*this)(r, c) * v[c];
    }
    out[r] = acc;
  }
  return out;
}

Matrix Matrix::multiply(const Matrix& other) const {
  if (cols_ != other.rows_) {
    throw ShapeError("Matrix::multiply: inner dimension mismatch");
  }
  Matrix out(rows_, other.cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = 0; k < cols_; ++k) {
      const double lhs = (*this)(r, k);
      for (std::size_t c = 0; c < other.cols_; ++c) {
        out(r, c) += lhs * other(k, c);
      }
    }
  }
  return out;
}

double Matrix::frobenius_norm() const { return l2_norm(data_); }

bool Matrix::all_finite() const { return tsfn::all_finite(data_); }

Tensor3::Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill)
    : channels_(channels), height_(height), width_(width), data_(channels * height * width, fill) {}

Tensor3::Tensor3(std::size_t channels, std::size_t height, std::size_t width,
                 std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != channels_ * height_ * width_) {
    throw ShapeError("Tensor3: data length does not match C*H*W");
  }
}

Matrix Tensor3::slice(std::size_t c) const {
  if (c >= channels_) {
    throw ConfigError("Tensor3::slice: channel out of range");
  }
  auto plane = channel(c);
  return Matrix(height_, width_, std::vector<double>(plane.begin(), plane.end()));
}

bool Tensor3::all_finite() const { return tsfn::all_finite(data_); }

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t SeededRng::below(std::size_t n) {
  if (n == 0) {
    throw ConfigError("SeededRng::below: empty range");
  }
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) {
    draw = engine_();
  }
  return static_cast<std::size_t>(draw % bound);
}

double SeededRng::normal() {
  // Marsaglia polar method.
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double scale = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * scale;
  has_spare_ = true;
  return u * scale;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

// Normalizes v in place; returns the norm it had.
double normalize(std::vector<double>& v) {
  const double norm = l2_norm(v);
  if (norm > 0.0) {
    for (double& e : v) {
      e /= norm;
    }
  }
  return norm;
}

}  // namespace

Rank1Pair rank1_approx(const Matrix& x, const PowerIterationSettings& settings) {
  if (!x.square()) {
    throw ShapeError("rank1_approx: matrix must be square");
  }
  if (!x.all_finite()) {
    throw DomainError("rank1_approx: non-finite entry");
  }
  const std::size_t n = x.rows();
  Rank1Pair out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  if (n == 0 || x.frobenius_norm() == 0.0) {
    return out;
  }

  const Matrix gram = x.transposed().multiply(x);
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double rayleigh = dot(v, gram.multiply(v));

  // The all-ones start can lie in the null space of X^T X; fall back to the
  // largest row of X, which lies in the row space.
  if (rayleigh <= 0.0) {
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double norm = l2_norm(x.row(r));
      if (norm > best_norm) {
        best_norm = norm;
        best = r;
      }
    }
    auto row = x.row(best);
    v.assign(row.begin(), row.end());
    normalize(v);
    rayleigh = dot(v, gram.multiply(v));
  }

  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    std::vector<double> w = gram.multiply(v);
    if (normalize(w) == 0.0) {
      break;
    }
    double step = 0.0;
    for (std::size_t i = 0; i < n; ++i) step = std::max(step, std::abs(w[i] - v[i]));
    v = std::move(w);
    const double next = dot(v, gram.multiply(v));
    // The quotient settles quadratically faster than the vector, so both are checked.
    const bool converged = std::abs(next - rayleigh) < settings.tolerance * std::max(1.0, next) &&
                           step < settings.vector_tolerance;
    rayleigh = next;
    if (converged) {
      break;
    }
  }

  out.a = x.multiply(v);
  out.b = std::move(v);
  for (double e : out.b) {
    if (std::abs(e) > 1e-12) {
      if (e < 0.0) {
        for (double& ai : out.a) ai = -ai;
        for (double& bi : out.b) bi = -bi;
      }
      break;
    }
  }
  return out;
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) {
    p <<= 1;
  }
  return p;
}

std::vector<Complex> fft(std::span<const Complex> input) {
  const std::size_t n = input.size();
  if (!is_power_of_two(n)) {
    throw ShapeError("fft: length must be a power of two");
  }
  std::vector<Complex> out(input.begin(), input.end());

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) {
      j ^= bit;
    }
    j ^= bit;
    if (i < j) {
      std::swap(out[i], out[j]);
    }
  }

  // Twiddles evaluated directly rather than by recurrence to keep per-bin
  // error near machine precision at large n.
  std::vector<Complex> twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = Complex(std::cos(angle), std::sin(angle));
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex t = twiddle[k * step] * out[start + k + half];
        const Complex u = out[start + k];
        out[start + k] = u + t;
        out[start + k + half] = u - t;
      }
    }
  }
  return out;
}

std::vector<Complex> fft(std::span<const double> v) {
  std::vector<Complex> promoted(v.begin(), v.end());
  return fft(std::span<const Complex>(promoted));
}

std::vector<Complex> dft_naive(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) {
    throw ShapeError("dft_naive: empty input");
  }
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays in [0, 2pi).
      const std::size_t phase = (k * t) % n;
      const double angle =
          -2.0 * std::numbers::pi * static_cast<double>(phase) / static_cast<double>(n);
      acc += v[t] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

double l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double e : v) {
    acc += e * e;
  }
  return std::sqrt(acc);
}

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

void softmax_inplace(std::span<double> logits) {
  if (logits.empty()) {
    return;
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& z : logits) {
    z = std::exp(z - peak);
    total += z;
  }
  for (double& z : logits) {
    z /= total;
  }
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double e) { return std::isfinite(e); });
}

}  // namespace tsfn
