// Independent reference implementations used as test oracles. These stay
// deliberately separate from the library code paths they check.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "damba/tensor.hpp"

namespace oracle {

// Plain triple-loop matrix product.
inline damba::Tensor matmul(const damba::Tensor& a, const damba::Tensor& b) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  damba::Tensor c({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  return c;
}

// 20-term Taylor series for the diagonal ZOH pair:
//   a_bar = sum_k (dA)^k / k!,  b_bar = (sum_k (dA)^k / (k+1)!) * d * b
struct TaylorZoh {
  std::vector<double> a_bar, b_bar;
};
inline TaylorZoh taylor_zoh(const std::vector<double>& a_diag, const std::vector<double>& b,
                            double delta, int terms = 20) {
  TaylorZoh out;
  for (size_t i = 0; i < a_diag.size(); ++i) {
    const double z = delta * a_diag[i];
    double term = 1.0, ea = 1.0, phi = 1.0;
    double fact_next = 1.0;
    for (int k = 1; k <= terms; ++k) {
      term *= z / k;
      ea += term;
      fact_next = fact_next * z / (k + 1);
      phi += fact_next;
    }
    out.a_bar.push_back(ea);
    out.b_bar.push_back(phi * delta * b[i]);
  }
  return out;
}

// Eigenvalues of a symmetric matrix: Givens tridiagonalization followed by
// Sturm-sequence bisection. Returns ascending eigenvalues.
inline std::vector<double> sturm_eigenvalues(const damba::Tensor& sym, double tol = 1e-12) {
  const int n = sym.dim(0);
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a[i][j] = sym.at(i, j);

  std::vector<double> d(n, 0.0), e(n, 0.0);  // diagonal, subdiagonal (e[0] unused)
  for (int k = 0; k < n - 2; ++k)
    for (int i = n - 1; i > k + 1; --i) {
      const double x = a[k + 1][k], y = a[i][k];
      if (std::fabs(y) < 1e-300) continue;
      const double rr = std::hypot(x, y);
      const double c = x / rr, s = -y / rr;
      for (int j = 0; j < n; ++j) {
        const double t1 = a[k + 1][j], t2 = a[i][j];
        a[k + 1][j] = c * t1 - s * t2;
        a[i][j] = s * t1 + c * t2;
      }
      for (int j = 0; j < n; ++j) {
        const double t1 = a[j][k + 1], t2 = a[j][i];
        a[j][k + 1] = c * t1 - s * t2;
        a[j][i] = s * t1 + c * t2;
      }
    }
  for (int i = 0; i < n; ++i) d[static_cast<size_t>(i)] = a[i][i];
  for (int i = 1; i < n; ++i) e[static_cast<size_t>(i)] = a[i][i - 1];

  // Sturm count: number of eigenvalues strictly below x.
  auto count_below = [&](double x) {
    int cnt = 0;
    double q = d[0] - x;
    if (q < 0) ++cnt;
    for (int i = 1; i < n; ++i) {
      const double denom = (q == 0.0) ? 1e-300 : q;
      q = d[static_cast<size_t>(i)] - x - e[static_cast<size_t>(i)] * e[static_cast<size_t>(i)] / denom;
      if (q < 0) ++cnt;
    }
    return cnt;
  };

  double lo = d[0], hi = d[0];
  for (int i = 0; i < n; ++i) {
    const double radius = std::fabs(e[static_cast<size_t>(i)]) +
                          (i + 1 < n ? std::fabs(e[static_cast<size_t>(i) + 1]) : 0.0);
    lo = std::min(lo, d[static_cast<size_t>(i)] - radius);
    hi = std::max(hi, d[static_cast<size_t>(i)] + radius);
  }
  lo -= 1.0;
  hi += 1.0;

  std::vector<double> eig(static_cast<size_t>(n));
  for (int idx = 0; idx < n; ++idx) {
    double a0 = lo, b0 = hi;
    while (b0 - a0 > tol * std::max(1.0, std::fabs(a0) + std::fabs(b0))) {
      const double mid = 0.5 * (a0 + b0);
      if (count_below(mid) <= idx)
        a0 = mid;
      else
        b0 = mid;
    }
    eig[static_cast<size_t>(idx)] = 0.5 * (a0 + b0);
  }
  return eig;
}

// Exhaustive lag search with an independently written Pearson correlation.
inline int brute_force_lag(const damba::Tensor& xa, const damba::Tensor& xb, int max_lag) {
  const int t = xa.dim(0);
  const int ca = xa.dim(1), cb = xb.dim(1);
  int best_lag = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int lag = 0; lag <= max_lag; ++lag) {
    const int n = t - lag;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
      const double x = xa[static_cast<long long>(i) * ca];
      const double y = xb[static_cast<long long>(i + lag) * cb];
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
    }
    const double cov = sxy - sx * sy / n;
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    if (vx <= 0 || vy <= 0) continue;
    const double corr = cov / std::sqrt(vx * vy);
    if (corr > best) {
      best = corr;
      best_lag = lag;
    }
  }
  return best_lag;
}

// Window count by direct enumeration.
inline int count_windows(int total, int history, int horizon, int stride) {
  int count = 0;
  for (int t = history; t + horizon <= total; t += stride) ++count;
  return count;
}

// Patch count by direct enumeration.
inline int count_patches(int total, int patch, int stride) {
  int count = 0;
  for (int start = 0; start + patch <= total; start += stride) ++count;
  return count;
}

}  // namespace oracle
