#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace tsfn {

using Complex = std::complex<double>;

// Dense row-major float64 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix outer(std::span<const double> left, std::span<const double> right);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix transposed() const;
  std::vector<double> multiply(std::span<const double> v) const;
  Matrix multiply(const Matrix& other) const;
  double frobenius_norm() const;
  bool all_finite() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Channel-major C x H x W activation volume.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, std::vector<double> data);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t plane_size() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * height_ + y) * width_ + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * height_ + y) * width_ + x];
  }

  std::span<double> channel(std::size_t c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> channel(std::size_t c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  // Copy of channel c as an H x W matrix.
  Matrix slice(std::size_t c) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const Tensor3& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const;

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

// Factors of the best rank-1 approximation a * b^T. `a` carries the singular
// value, `b` is unit length with its first nonzero entry nonnegative. Both are
// all-zero for a zero input.
struct Rank1Pair {
  std::vector<double> a;
  std::vector<double> b;
};

// Deterministic generator: mt19937_64 plus hand-rolled transforms so a seed
// yields the same draws on every standard library.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  std::size_t below(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct PowerIterationSettings {
  int max_iterations = 1000;
  double tolerance = 1e-12;         // on successive Rayleigh quotients (relative)
  double vector_tolerance = 1e-12;  // on successive unit iterates (max abs change)
};

Rank1Pair rank1_approx(const Matrix& x, const PowerIterationSettings& settings = {});

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

// Iterative radix-2 DFT of a real vector.
std::vector<Complex> fft(std::span<const double> v);
std::vector<Complex> fft(std::span<const Complex> v);
// O(N^2) direct summation; test oracle for fft.
std::vector<Complex> dft_naive(std::span<const double> v);

double l2_norm(std::span<const double> v);

// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6). The floor keeps
// near-zero gradients from amplifying finite-difference roundoff.
double gradient_relative_error(double analytic, double numeric);

// In-place numerically stable softmax.
void softmax_inplace(std::span<double> logits);
bool all_finite(std::span<const double> v);

}  // namespace tsfn
