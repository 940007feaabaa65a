#pragma once
// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "tsfn/numlib.hpp"
#include "tsfn/tscf.hpp"

namespace oracle {

using tsfn::Matrix;
using tsfn::Tensor3;

// A = U diag(s) V^T with s sorted descending. One-sided Jacobi (Hestenes).
struct Svd {
  Matrix u;
  std::vector<double> s;
  Matrix v;
};

inline Svd jacobi_svd(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix w = a;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += w(i, p) * w(i, p);
          beta += w(i, q) * w(i, q);
          gamma += w(i, p) * w(i, q);
        }
        if (gamma == 0.0) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (off < 1e-15) break;
  }
  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) s2 += w(i, j) * w(i, j);
    sigma[j] = std::sqrt(s2);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return sigma[x] > sigma[y]; });
  Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = sigma[j];
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = sigma[j] > 0 ? w(i, j) / sigma[j] : 0.0;
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
  }
  return out;
}

// sqrt(sum of squared singular values beyond the first).
inline double rank1_tail_energy(const Matrix& x) {
  const Svd svd = jacobi_svd(x);
  double tail = 0.0;
  for (std::size_t k = 1; k < svd.s.size(); ++k) tail += svd.s[k] * svd.s[k];
  return std::sqrt(tail);
}

inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    long double re = 0.0L, im = 0.0L;
    for (std::size_t j = 0; j < n; ++j) {
      const long double angle = -2.0L * 3.14159265358979323846264338327950288L *
                                static_cast<long double>((k * j) % n) / static_cast<long double>(n);
      re += x[j] * std::cos(angle);
      im += x[j] * std::sin(angle);
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

// Same-padded 3x3 cross-correlation, weights [out][in][3][3].
inline Tensor3 conv3x3(const Tensor3& x, const std::vector<double>& weight,
                       const std::vector<double>& bias, std::size_t out_channels) {
  const std::size_t in = x.channels(), h = x.height(), w = x.width();
  Tensor3 y(out_channels, h, w);
  for (std::size_t o = 0; o < out_channels; ++o) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double acc = bias[o];
        for (std::size_t i = 0; i < in; ++i) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const long rr = static_cast<long>(r) + dy, cc = static_cast<long>(c) + dx;
              if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
              acc += weight[((o * in + i) * 3 + static_cast<std::size_t>(dy + 1)) * 3 +
                            static_cast<std::size_t>(dx + 1)] *
                     x.at(i, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
            }
          }
        }
        y.at(o, r, c) = acc;
      }
    }
  }
  return y;
}

// Half-pixel bilinear sample of a (h x w) plane for output pixel (oy, ox) of an
// (n x n) grid spanning the source rectangle [x0, x0+cw) x [y0, y0+ch).
inline double bilinear(const std::vector<double>& plane, int h, int w, int y0, int x0, int ch,
                       int cw, int n, int oy, int ox) {
  const double sy = std::clamp((oy + 0.5) * ch / n - 0.5, 0.0, ch - 1.0);
  const double sx = std::clamp((ox + 0.5) * cw / n - 0.5, 0.0, cw - 1.0);
  const int iy = static_cast<int>(std::floor(sy)), ix = static_cast<int>(std::floor(sx));
  const int iy1 = std::min(iy + 1, ch - 1), ix1 = std::min(ix + 1, cw - 1);
  const double fy = sy - iy, fx = sx - ix;
  auto at = [&](int y, int x) { return plane[static_cast<std::size_t>((y0 + y) * w + (x0 + x))]; };
  (void)h;
  return (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix1)) +
         fy * ((1 - fx) * at(iy1, ix) + fx * at(iy1, ix1));
}

// Straight-line correlation vector: per channel, X = F F^T with F = app + mot,
// best rank-1 factor X ~ a b^T from the SVD (a = s1 u1, b = v1, first
// significant entry of b nonnegative), c = (A a) o (A b) with A the appearance
// slice, then max(c) plus the spatial mean of mot + ego.
inline std::vector<double> tscf(const tsfn::StreamFeatures& f) {
  const std::size_t d_count = f.app.channels(), s = f.app.height();
  std::vector<double> out(d_count);
  for (std::size_t d = 0; d < d_count; ++d) {
    Matrix fs(s, s), fa(s, s);
    double tmo = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        fs(i, j) = f.app.at(d, i, j) + f.mot.at(d, i, j);
        fa(i, j) = f.app.at(d, i, j);
        tmo += f.mot.at(d, i, j) + f.ego.at(d, i, j);
      }
    }
    Matrix x(s, s);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j)
        for (std::size_t k = 0; k < s; ++k) x(i, j) += fs(i, k) * fs(j, k);
    const Svd svd = jacobi_svd(x);
    std::vector<double> a(s), b(s);
    for (std::size_t i = 0; i < s; ++i) {
      a[i] = svd.s[0] * svd.u(i, 0);
      b[i] = svd.v(i, 0);
    }
    for (double e : b) {
      if (std::abs(e) > 1e-12) {
        if (e < 0) {
          for (auto& v : a) v = -v;
          for (auto& v : b) v = -v;
        }
        break;
      }
    }
    double best = -INFINITY;
    for (std::size_t i = 0; i < s; ++i) {
      double ta = 0.0, tb = 0.0;
      for (std::size_t j = 0; j < s; ++j) {
        ta += fa(i, j) * a[j];
        tb += fa(i, j) * b[j];
      }
      best = std::max(best, ta * tb);
    }
    out[d] = best + tmo / static_cast<double>(s * s);
  }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace oracle
