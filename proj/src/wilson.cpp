#include "gaugenet/wilson.hpp"

#include <omp.h>

namespace gaugenet {

namespace {

void check_2d(const LinkField& links) {
  if (links.lattice.ndim() != 2)
    throw validation_error("wilson_loops_2d: lattice must be 2D, got " +
                           links.lattice.to_string());
  links.require_unitary();
}

void check_4d(const LinkField& links) {
  if (links.lattice.ndim() != 4)
    throw validation_error("wilson_loops_4d: lattice must be 4D, got " +
                           links.lattice.to_string());
  links.require_unitary();
}

inline CMat plaquette(const LinkField& f, long k, int mu, int nu) {
  const Lattice& lat = f.lattice;
  long kmu = lat.neighbor(k, mu);
  long knu = lat.neighbor(k, nu);
  return f.link(mu, k) * f.link(nu, kmu) * f.link(mu, knu).adjoint() * f.link(nu, k).adjoint();
}

void check_match(const Lattice& a, const Lattice& b, int na, int nb) {
  if (a != b) throw validation_error("gauge_transform: lattice mismatch");
  if (na != nb) throw validation_error("gauge_transform: band count mismatch");
}

}  // namespace

int plane_channel(int mu, int nu) {
  // lexicographic over mu < nu in 4D: 01,02,03,12,13,23
  static const int table[4][4] = {{-1, 0, 1, 2}, {0, -1, 3, 4}, {1, 3, -1, 5}, {2, 4, 5, -1}};
  return table[mu][nu];
}

LoopField wilson_loops_2d(const LinkField& links) {
  check_2d(links);
  const long n = links.lattice.n_sites();
  LoopField out(links.lattice, 1, links.n_bands);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k) out.loop(0, k) = plaquette(links, k, 0, 1);
  return out;
}

LoopField wilson_loops_4d(const LinkField& links) {
  check_4d(links);
  const long n = links.lattice.n_sites();
  LoopField out(links.lattice, 6, links.n_bands);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k)
    for (int mu = 0; mu < 4; ++mu)
      for (int nu = mu + 1; nu < 4; ++nu)
        out.loop(plane_channel(mu, nu), k) = plaquette(links, k, mu, nu);
  return out;
}

LinkField gauge_transform(const LinkField& links, const GaugeTransform& g) {
  check_match(links.lattice, g.lattice, links.n_bands, g.n_bands);
  const long n = links.lattice.n_sites();
  const int d = links.lattice.ndim();
  LinkField out(links.lattice, links.n_bands);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k)
    for (int mu = 0; mu < d; ++mu) {
      long kmu = links.lattice.neighbor(k, mu);
      out.link(mu, k) = g.omega[k].adjoint() * links.link(mu, k) * g.omega[kmu];
    }
  return out;
}

LoopField gauge_transform(const LoopField& loops, const GaugeTransform& g) {
  check_match(loops.lattice, g.lattice, loops.n_bands, g.n_bands);
  const long n = loops.lattice.n_sites();
  LoopField out(loops.lattice, loops.n_channels, loops.n_bands);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k)
    for (int c = 0; c < loops.n_channels; ++c)
      out.loop(c, k) = g.omega[k].adjoint() * loops.loop(c, k) * g.omega[k];
  return out;
}

namespace ref {

LoopField wilson_loops_2d(const LinkField& links) {
  check_2d(links);
  LoopField out(links.lattice, 1, links.n_bands);
  const Lattice& lat = links.lattice;
  for (long k = 0; k < lat.n_sites(); ++k) {
    long kx = lat.neighbor(k, 0);
    long ky = lat.neighbor(k, 1);
    CMat w = links.link(0, k);
    w = w * links.link(1, kx);
    w = w * links.link(0, ky).adjoint();
    w = w * links.link(1, k).adjoint();
    out.loop(0, k) = w;
  }
  return out;
}

LoopField wilson_loops_4d(const LinkField& links) {
  check_4d(links);
  LoopField out(links.lattice, 6, links.n_bands);
  const Lattice& lat = links.lattice;
  int c = 0;
  for (int mu = 0; mu < 4; ++mu)
    for (int nu = mu + 1; nu < 4; ++nu, ++c)
      for (long k = 0; k < lat.n_sites(); ++k) {
        long kmu = lat.neighbor(k, mu);
        long knu = lat.neighbor(k, nu);
        CMat w = links.link(mu, k);
        w = w * links.link(nu, kmu);
        w = w * links.link(mu, knu).adjoint();
        w = w * links.link(nu, k).adjoint();
        out.loop(c, k) = w;
      }
  return out;
}

LinkField gauge_transform(const LinkField& links, const GaugeTransform& g) {
  check_match(links.lattice, g.lattice, links.n_bands, g.n_bands);
  LinkField out(links.lattice, links.n_bands);
  for (int mu = 0; mu < links.lattice.ndim(); ++mu)
    for (long k = 0; k < links.lattice.n_sites(); ++k) {
      long kmu = links.lattice.neighbor(k, mu);
      out.link(mu, k) = g.omega[k].adjoint() * links.link(mu, k) * g.omega[kmu];
    }
  return out;
}

LoopField gauge_transform(const LoopField& loops, const GaugeTransform& g) {
  check_match(loops.lattice, g.lattice, loops.n_bands, g.n_bands);
  LoopField out(loops.lattice, loops.n_channels, loops.n_bands);
  for (int c = 0; c < loops.n_channels; ++c)
    for (long k = 0; k < loops.lattice.n_sites(); ++k)
      out.loop(c, k) = g.omega[k].adjoint() * loops.loop(c, k) * g.omega[k];
  return out;
}

}  // namespace ref

}  // namespace gaugenet
