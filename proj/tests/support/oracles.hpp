#pragma once

// Independent reference computations used by the test suites. These stay
// deliberately naive and avoid the library's own code paths wherever the
// check targets a numerical contract.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "gaugenet/field.hpp"
#include "gaugenet/wilson.hpp"

namespace oracles {

using gaugenet::CMat;
using gaugenet::cplx;

inline int perm_sign(const std::vector<int>& p) {
  int inversions = 0;
  for (size_t i = 0; i < p.size(); ++i)
    for (size_t j = i + 1; j < p.size(); ++j)
      if (p[i] > p[j]) ++inversions;
  return inversions % 2 == 0 ? 1 : -1;
}

// Plaquette channel with free (mu, nu) order: for mu > nu the matrix is the
// Hermitian conjugate of the stored plane.
inline CMat plane_any(const gaugenet::LoopField& loops, int mu, int nu, long k) {
  if (mu < nu) return loops.loop(gaugenet::plane_channel(mu, nu), k);
  return loops.loop(gaugenet::plane_channel(nu, mu), k).adjoint();
}

// Second Chern number by explicit enumeration of all 24 permutations of the
// four directions, with matrix logs delegated to Eigen's general-purpose
// implementation (no shared code with gaugenet::unitary_log).
inline double chern_4d_bruteforce(const gaugenet::LoopField& loops) {
  const double pi = std::numbers::pi;
  std::vector<int> perm{0, 1, 2, 3};
  std::vector<std::vector<int>> perms;
  do {
    perms.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));

  cplx total = 0.0;
  for (long k = 0; k < loops.lattice.n_sites(); ++k) {
    for (const auto& p : perms) {
      Eigen::MatrixXcd la = plane_any(loops, p[0], p[1], k).log();
      Eigen::MatrixXcd lb = plane_any(loops, p[2], p[3], k).log();
      total += static_cast<double>(perm_sign(p)) * (la * lb).trace();
    }
  }
  cplx denom = 2.0 * std::pow(cplx(0.0, 2.0 * pi), 2) * 4.0;
  cplx value = total / denom;
  return value.real();
}

// det(A) by cofactor expansion along the first row.
inline double det_cofactor(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  if (n == 1) return a(0, 0);
  double det = 0.0;
  for (int j = 0; j < n; ++j) {
    Eigen::MatrixXd minor(n - 1, n - 1);
    for (int r = 1; r < n; ++r) {
      int cc = 0;
      for (int c = 0; c < n; ++c) {
        if (c == j) continue;
        minor(r - 1, cc++) = a(r, c);
      }
    }
    det += (j % 2 == 0 ? 1.0 : -1.0) * a(0, j) * det_cofactor(minor);
  }
  return det;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    double fa = static_cast<double>(i) / a.size();
    double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

// Rejection threshold for the two-sample KS test at significance alpha.
inline double ks_threshold(size_t n, size_t m, double alpha) {
  double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

}  // namespace oracles
