#pragma once

// Per-site matrix fields on a periodic lattice: link variables U^mu_k,
// Wilson-loop / flux features W^gamma_k, and site-wise gauge transforms.

#include <vector>

#include "gaugenet/cmatrix.hpp"
#include "gaugenet/lattice.hpp"

namespace gaugenet {

inline constexpr double kUnitaryTol = 1e-10;

// U^mu_k, stored direction-major: entry index mu * n_sites + k.
struct LinkField {
  Lattice lattice;
  int n_bands = 0;
  std::vector<CMat> u;

  LinkField() = default;
  LinkField(Lattice lat, int bands)
      : lattice(std::move(lat)), n_bands(bands), u(lattice.ndim() * lattice.n_sites()) {
    for (auto& m : u) m = CMat::Zero(bands, bands);
  }

  CMat& link(int mu, long k) { return u[static_cast<size_t>(mu) * lattice.n_sites() + k]; }
  const CMat& link(int mu, long k) const {
    return u[static_cast<size_t>(mu) * lattice.n_sites() + k];
  }

  void require_unitary(double tol = kUnitaryTol) const {
    for (const auto& m : u) gaugenet::require_unitary(m, tol, "link");
  }
};

// W^gamma_k, stored channel-major: entry index gamma * n_sites + k.
struct LoopField {
  Lattice lattice;
  int n_channels = 0;
  int n_bands = 0;
  std::vector<CMat> w;

  LoopField() = default;
  LoopField(Lattice lat, int channels, int bands)
      : lattice(std::move(lat)),
        n_channels(channels),
        n_bands(bands),
        w(static_cast<size_t>(channels) * lattice.n_sites()) {
    for (auto& m : w) m = CMat::Zero(bands, bands);
  }

  CMat& loop(int c, long k) { return w[static_cast<size_t>(c) * lattice.n_sites() + k]; }
  const CMat& loop(int c, long k) const {
    return w[static_cast<size_t>(c) * lattice.n_sites() + k];
  }

  void require_unitary(double tol = kUnitaryTol) const {
    for (const auto& m : w) gaugenet::require_unitary(m, tol, "loop");
  }
};

// Omega_k, one unitary per site.
struct GaugeTransform {
  Lattice lattice;
  int n_bands = 0;
  std::vector<CMat> omega;

  GaugeTransform() = default;
  GaugeTransform(Lattice lat, int bands)
      : lattice(std::move(lat)), n_bands(bands), omega(lattice.n_sites()) {
    for (auto& m : omega) m = CMat::Identity(bands, bands);
  }

  void require_unitary(double tol = kUnitaryTol) const {
    for (const auto& m : omega) gaugenet::require_unitary(m, tol, "gauge transform");
  }
};

}  // namespace gaugenet
