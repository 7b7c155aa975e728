#pragma once

// Dense complex matrices backing all gauge data. Row-major storage so the
// raw buffer matches the on-disk interleaved re/im layout.

#include <Eigen/Dense>
#include <complex>

#include "gaugenet/lattice.hpp"

namespace gaugenet {

using cplx = std::complex<double>;
using CMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CVec = Eigen::VectorXcd;

inline CMat cmat_identity(int n) { return CMat::Identity(n, n); }

inline CMat dagger(const CMat& m) { return m.adjoint(); }

inline double max_abs(const CMat& m) { return m.cwiseAbs().maxCoeff(); }

// ||m^dag m - I||_max
inline double unitarity_defect(const CMat& m) {
  CMat d = m.adjoint() * m;
  d -= CMat::Identity(m.rows(), m.cols());
  return max_abs(d);
}

inline bool is_unitary(const CMat& m, double tol) {
  return m.rows() == m.cols() && unitarity_defect(m) <= tol;
}

inline void require_unitary(const CMat& m, double tol, const char* what) {
  if (m.rows() != m.cols())
    throw validation_error(std::string(what) + ": matrix is not square");
  double d = unitarity_defect(m);
  if (d > tol)
    throw validation_error(std::string(what) + ": unitarity defect " + std::to_string(d) +
                           " exceeds tolerance " + std::to_string(tol));
}

}  // namespace gaugenet
