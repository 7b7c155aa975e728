#pragma once

// Wilson loops (plaquette fluxes) and gauge transformations.
//
// The hot per-site loops are OpenMP-parallel; gaugenet::ref holds plain
// serial implementations kept as references for testing and benchmarking.

#include "gaugenet/field.hpp"

namespace gaugenet {

// W_k = U^x_k U^y_{k+x} (U^x_{k+y})^dag (U^y_k)^dag, one channel per site.
LoopField wilson_loops_2d(const LinkField& links);

// Planar fluxes W^{mu,nu}_k = U^mu_k U^nu_{k+mu} (U^mu_{k+nu})^dag (U^nu_k)^dag,
// six channels ordered by plane (01,02,03,12,13,23).
LoopField wilson_loops_4d(const LinkField& links);

// Channel index of the (mu,nu) plane, mu < nu, in the 4D ordering above.
int plane_channel(int mu, int nu);

// U^mu_k -> Omega_k^dag U^mu_k Omega_{k+mu}
LinkField gauge_transform(const LinkField& links, const GaugeTransform& g);

// W^gamma_k -> Omega_k^dag W^gamma_k Omega_k
LoopField gauge_transform(const LoopField& loops, const GaugeTransform& g);

namespace ref {
LoopField wilson_loops_2d(const LinkField& links);
LoopField wilson_loops_4d(const LinkField& links);
LinkField gauge_transform(const LinkField& links, const GaugeTransform& g);
LoopField gauge_transform(const LoopField& loops, const GaugeTransform& g);
}  // namespace ref

}  // namespace gaugenet
