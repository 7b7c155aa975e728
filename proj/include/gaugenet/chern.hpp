#pragma once

// Unitary matrix logarithms and discrete Chern numbers (first order in 2D,
// second order in 4D).

#include <vector>

#include "gaugenet/field.hpp"

namespace gaugenet {

// Tolerance below which an eigenvalue counts as sitting on the log branch
// cut at -1.
inline constexpr double kBranchCutTol = 1e-9;

// Principal arguments (in (-pi, pi], theta = pi at the cut) of the
// eigenvalues of a unitary-to-`tol` matrix, in the order produced by the
// Schur decomposition. Bumps *branch_hits for eigenvalues within
// kBranchCutTol of -1.
std::vector<double> eigenphases(const CMat& w, int* branch_hits = nullptr, double tol = 1e-8);

// Skew-Hermitian L with exp(L) = w to 1e-8, via Schur decomposition of the
// (near-)unitary input. Eigenvalues are renormalized to unit modulus before
// taking principal arguments.
CMat unitary_log(const CMat& w, int* branch_hits = nullptr, double tol = 1e-8);

// Sorted ascending eigenphases: the canonical U(1)^N / S_N orbit label.
std::vector<double> orbit_representative(const CMat& w, double tol = 1e-8);

struct Chern2dResult {
  double value = 0.0;                  // (1/2pi) sum_k F_k
  std::vector<double> local_flux;      // F_k = sum_j Arg lambda_j(W_k)
  int branch_warnings = 0;
};

struct Chern4dResult {
  double value = 0.0;
  double max_imag_residue = 0.0;
  int branch_warnings = 0;
};

Chern2dResult chern_2d(const LoopField& loops);
Chern4dResult chern_4d(const LoopField& loops);

namespace ref {
Chern2dResult chern_2d(const LoopField& loops);
}

}  // namespace gaugenet
