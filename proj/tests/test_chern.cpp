#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <unsupported/Eigen/MatrixFunctions>

#include "gaugenet/chern.hpp"
#include "gaugenet/sampler.hpp"
#include "gaugenet/wilson.hpp"
#include "support/oracles.hpp"

using namespace gaugenet;

namespace {
constexpr double kPi = std::numbers::pi;

bool is_skew_hermitian(const CMat& l, double tol) {
  return max_abs(CMat(l + l.adjoint())) <= tol;
}
}  // namespace

TEST_CASE("unitary_log on fixed inputs") {
  CMat id = CMat::Identity(3, 3);
  CHECK(max_abs(unitary_log(id)) == 0.0);

  CMat d = CMat::Zero(2, 2);
  d(0, 0) = std::polar(1.0, kPi / 2);
  d(1, 1) = std::polar(1.0, -kPi / 3);
  CMat l = unitary_log(d);
  CHECK(std::abs(l(0, 0) - cplx(0.0, kPi / 2)) < 1e-14);
  CHECK(std::abs(l(1, 1) - cplx(0.0, -kPi / 3)) < 1e-14);
  CHECK(std::abs(l(0, 1)) < 1e-14);
}

TEST_CASE("unitary_log round trip, skew-Hermiticity, spectral invariance") {
  RandomSource rng(7);
  for (int n : {1, 2, 3, 5, 8}) {
    for (int rep = 0; rep < 5; ++rep) {
      CMat w = haar_unitary(n, rng);
      CMat l = unitary_log(w);
      CHECK(is_skew_hermitian(l, 1e-12));
      Eigen::MatrixXcd e = Eigen::MatrixXcd(l).exp();
      CHECK(max_abs(CMat(e - w)) <= 1e-8);
    }
  }
  // Tr log is invariant under conjugation
  CMat w = haar_unitary(3, rng);
  CMat g = haar_unitary(3, rng);
  cplx a = unitary_log(w).trace();
  cplx b = unitary_log(CMat(g.adjoint() * w * g)).trace();
  CHECK(std::abs(a - b) < 1e-9);
}

TEST_CASE("unitary_log branch cut and validation") {
  CMat m = CMat::Zero(1, 1);
  m(0, 0) = -1.0;
  int warnings = 0;
  CMat l = unitary_log(m, &warnings);
  CHECK(warnings == 1);
  CHECK(std::abs(l(0, 0) - cplx(0.0, kPi)) < 1e-12);  // theta = +pi on the cut

  CMat bad = CMat::Identity(2, 2) * 1.5;
  CHECK_THROWS_AS(unitary_log(bad), validation_error);
}

TEST_CASE("orbit representative") {
  CHECK(orbit_representative(CMat::Identity(4, 4)) == std::vector<double>(4, 0.0));

  RandomSource rng(9);
  CMat d = CMat::Zero(2, 2);
  d(0, 0) = std::polar(1.0, 0.3);
  d(1, 1) = std::polar(1.0, -1.2);
  CMat g = haar_unitary(2, rng);
  std::vector<double> rep = orbit_representative(CMat(g.adjoint() * d * g));
  REQUIRE(rep.size() == 2);
  CHECK(rep[0] == doctest::Approx(-1.2).epsilon(1e-10));
  CHECK(rep[1] == doctest::Approx(0.3).epsilon(1e-10));

  // idempotence: representative of the canonical diagonal is itself
  CMat canon = CMat::Zero(2, 2);
  canon(0, 0) = std::polar(1.0, rep[0]);
  canon(1, 1) = std::polar(1.0, rep[1]);
  std::vector<double> rep2 = orbit_representative(canon);
  CHECK(std::abs(rep2[0] - rep[0]) < 1e-12);
  CHECK(std::abs(rep2[1] - rep[1]) < 1e-12);

  CHECK_THROWS_AS(orbit_representative(CMat::Identity(2, 2) * 2.0), validation_error);
}

TEST_CASE("chern_2d fixed values") {
  Lattice lat({2, 2});
  LoopField id(lat, 1, 3);
  for (auto& m : id.w) m = CMat::Identity(3, 3);
  CHECK(chern_2d(id).value == 0.0);

  // four sites with flux pi/2 each: (1/2pi) * 4 * (pi/2) = 1, and the phase
  // product around the lattice is exp(2 pi i) = 1
  LoopField f(lat, 1, 1);
  for (auto& m : f.w) m(0, 0) = std::polar(1.0, kPi / 2);
  Chern2dResult r = chern_2d(f);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(r.local_flux.size() == 4);
  for (double fx : r.local_flux) CHECK(fx == doctest::Approx(kPi / 2));
}

TEST_CASE("chern_2d integrality and gauge invariance on random fields") {
  RandomSource rng(31);
  for (int n : {1, 4}) {
    for (int rep = 0; rep < 10; ++rep) {
      Lattice lat({5, 5});
      LinkField links = random_link_field(lat, n, rng);
      LoopField loops = wilson_loops_2d(links);
      Chern2dResult r = chern_2d(loops);
      CHECK(std::abs(r.value - std::round(r.value)) <= 1e-6);

      GaugeTransform om = random_gauge_transform(lat, n, rng);
      Chern2dResult rt = chern_2d(gauge_transform(loops, om));
      CHECK(std::abs(rt.value - r.value) <= 1e-9);
    }
  }
}

TEST_CASE("chern_2d local flux sums to the invariant; parallel matches ref") {
  RandomSource rng(41);
  Lattice lat({4, 5});
  LoopField loops = wilson_loops_2d(random_link_field(lat, 3, rng));
  Chern2dResult r = chern_2d(loops);
  double acc = 0.0;
  for (double fx : r.local_flux) acc += fx;
  CHECK(r.value == doctest::Approx(acc / (2 * kPi)).epsilon(1e-14));

  Chern2dResult rr = ref::chern_2d(loops);
  CHECK(r.value == rr.value);  // identical reduction order: bitwise equal
  for (size_t i = 0; i < r.local_flux.size(); ++i)
    CHECK(r.local_flux[i] == rr.local_flux[i]);
}

TEST_CASE("chern_2d validation") {
  RandomSource rng(1);
  LoopField l4 = wilson_loops_4d(random_link_field(Lattice({2, 2, 2, 2}), 2, rng));
  CHECK_THROWS_AS(chern_2d(l4), validation_error);
}

TEST_CASE("chern_4d: identity field, gauge invariance, oracle equivalence") {
  Lattice lat({2, 2, 2, 2});
  LoopField id(lat, 6, 2);
  for (auto& m : id.w) m = CMat::Identity(2, 2);
  CHECK(chern_4d(id).value == 0.0);

  RandomSource rng(53);
  for (int rep = 0; rep < 3; ++rep) {
    LoopField loops = wilson_loops_4d(random_link_field(lat, 2, rng));
    Chern4dResult r = chern_4d(loops);
    CHECK(r.max_imag_residue <= 1e-9);

    GaugeTransform om = random_gauge_transform(lat, 2, rng);
    Chern4dResult rt = chern_4d(gauge_transform(loops, om));
    CHECK(std::abs(rt.value - r.value) <= 1e-9);

    double brute = oracles::chern_4d_bruteforce(loops);
    CHECK(std::abs(r.value - brute) <= 1e-10);
  }

  LoopField wrong(lat, 5, 2);
  for (auto& m : wrong.w) m = CMat::Identity(2, 2);
  CHECK_THROWS_AS(chern_4d(wrong), validation_error);
}
