#include "gaugenet/chern.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "gaugenet/wilson.hpp"

namespace gaugenet {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Principal argument on the half-open branch (-pi, pi].
inline double principal_arg(const cplx& z) {
  double th = std::arg(z);
  if (th <= -kPi) th = kPi;
  return th;
}

struct SchurPhases {
  Eigen::MatrixXcd q;            // unitary Schur vectors
  std::vector<double> theta;     // principal args of unit-modulus eigenvalues
  int branch_hits = 0;
};

SchurPhases schur_phases(const CMat& w, double tol, const char* what) {
  require_unitary(w, tol, what);
  Eigen::ComplexSchur<Eigen::MatrixXcd> schur(w, /*computeU=*/true);
  if (schur.info() != Eigen::Success)
    throw numerical_error(std::string(what) + ": Schur decomposition failed");
  SchurPhases out;
  out.q = schur.matrixU();
  const auto& t = schur.matrixT();
  out.theta.resize(w.rows());
  for (int j = 0; j < w.rows(); ++j) {
    cplx lam = t(j, j);
    double mod = std::abs(lam);
    if (mod < 0.5)
      throw numerical_error(std::string(what) + ": eigenvalue modulus far from 1");
    lam /= mod;  // renormalize against float drift in long products
    if (std::abs(lam + cplx(1.0, 0.0)) < kBranchCutTol) ++out.branch_hits;
    out.theta[j] = principal_arg(lam);
  }
  return out;
}

}  // namespace

std::vector<double> eigenphases(const CMat& w, int* branch_hits, double tol) {
  SchurPhases s = schur_phases(w, tol, "eigenphases");
  if (branch_hits) *branch_hits += s.branch_hits;
  return s.theta;
}

CMat unitary_log(const CMat& w, int* branch_hits, double tol) {
  SchurPhases s = schur_phases(w, tol, "unitary_log");
  if (branch_hits) *branch_hits += s.branch_hits;
  Eigen::VectorXcd d(w.rows());
  for (int j = 0; j < w.rows(); ++j) d(j) = cplx(0.0, s.theta[j]);
  // Q diag(i theta) Q^dag is skew-Hermitian by construction.
  CMat l = s.q * d.asDiagonal() * s.q.adjoint();
  return l;
}

std::vector<double> orbit_representative(const CMat& w, double tol) {
  std::vector<double> th = eigenphases(w, nullptr, tol);
  std::sort(th.begin(), th.end());
  return th;
}

Chern2dResult chern_2d(const LoopField& loops) {
  if (loops.lattice.ndim() != 2)
    throw validation_error("chern_2d: lattice must be 2D");
  if (loops.n_channels != 1)
    throw validation_error("chern_2d: expected 1 channel, got " +
                           std::to_string(loops.n_channels));
  const long n = loops.lattice.n_sites();
  Chern2dResult out;
  out.local_flux.assign(n, 0.0);
  std::vector<int> hits(n, 0);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k) {
    std::vector<double> th = eigenphases(loops.loop(0, k), &hits[k]);
    double f = 0.0;
    for (double t : th) f += t;
    out.local_flux[k] = f;
  }
  // Site-ordered reduction keeps the result independent of the schedule.
  double total = 0.0;
  for (long k = 0; k < n; ++k) {
    total += out.local_flux[k];
    out.branch_warnings += hits[k];
  }
  out.value = total / kTwoPi;
  return out;
}

Chern4dResult chern_4d(const LoopField& loops) {
  if (loops.lattice.ndim() != 4)
    throw validation_error("chern_4d: lattice must be 4D");
  if (loops.n_channels != 6)
    throw validation_error("chern_4d: expected 6 channels, got " +
                           std::to_string(loops.n_channels));
  const long n = loops.lattice.n_sites();

  // The full epsilon contraction over (mu1..mu4) collapses, by the pair
  // antisymmetry log W^{nu,mu} = -log W^{mu,nu} and trace cyclicity, to 8x
  // the three distinct pairings of {0,1,2,3}.
  std::vector<cplx> site_term(n);
  std::vector<int> hits(n, 0);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k) {
    CMat l01 = unitary_log(loops.loop(plane_channel(0, 1), k), &hits[k]);
    CMat l02 = unitary_log(loops.loop(plane_channel(0, 2), k), &hits[k]);
    CMat l03 = unitary_log(loops.loop(plane_channel(0, 3), k), &hits[k]);
    CMat l12 = unitary_log(loops.loop(plane_channel(1, 2), k), &hits[k]);
    CMat l13 = unitary_log(loops.loop(plane_channel(1, 3), k), &hits[k]);
    CMat l23 = unitary_log(loops.loop(plane_channel(2, 3), k), &hits[k]);
    site_term[k] = (l01 * l23).trace() - (l02 * l13).trace() + (l03 * l12).trace();
  }
  cplx total = 0.0;
  Chern4dResult out;
  for (long k = 0; k < n; ++k) {
    total += site_term[k];
    out.branch_warnings += hits[k];
  }
  // 8 / (2! (2 pi i)^2 2^2) = -1 / (4 pi^2)
  cplx value = total * cplx(-1.0 / (4.0 * kPi * kPi), 0.0);
  out.max_imag_residue = std::abs(value.imag());
  if (out.max_imag_residue > 1e-6)
    throw numerical_error("chern_4d: imaginary residue " +
                          std::to_string(out.max_imag_residue) + " exceeds 1e-6");
  out.value = value.real();
  return out;
}

namespace ref {

Chern2dResult chern_2d(const LoopField& loops) {
  if (loops.lattice.ndim() != 2 || loops.n_channels != 1)
    throw validation_error("ref::chern_2d: need a 2D single-channel field");
  Chern2dResult out;
  double total = 0.0;
  for (long k = 0; k < loops.lattice.n_sites(); ++k) {
    std::vector<double> th = eigenphases(loops.loop(0, k), &out.branch_warnings);
    double f = 0.0;
    for (double t : th) f += t;
    out.local_flux.push_back(f);
    total += f;
  }
  out.value = total / kTwoPi;
  return out;
}

}  // namespace ref

}  // namespace gaugenet
