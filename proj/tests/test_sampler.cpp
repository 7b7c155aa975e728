#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>

#include "gaugenet/chern.hpp"
#include "gaugenet/sampler.hpp"
#include "gaugenet/wilson.hpp"
#include "support/oracles.hpp"

using namespace gaugenet;

namespace {
constexpr double kPi = std::numbers::pi;

bool same_buffers(const CMat& a, const CMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(cplx) * a.size()) == 0;
}
}  // namespace

TEST_CASE("haar draws are unitary to 1e-12") {
  RandomSource rng(2024);
  for (int n : {1, 2, 4, 8})
    for (int rep = 0; rep < 20; ++rep) CHECK(unitarity_defect(haar_unitary(n, rng)) <= 1e-12);
}

TEST_CASE("haar second moment E|U_11|^2 = 1/n (reduced-size check)") {
  RandomSource rng(99);
  const int n = 4, draws = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < draws; ++i) {
    double v = std::norm(haar_unitary(n, rng)(0, 0));
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / draws;
  double sd = std::sqrt((sumsq / draws - mean * mean) / draws);
  CHECK(std::abs(mean - 1.0 / n) <= 4.0 * sd);
}

TEST_CASE("haar left invariance via two-sample KS on Re Tr") {
  RandomSource rng(123);
  const int n = 3, draws = 4000;
  CMat g = haar_unitary(n, rng);
  std::vector<double> plain, rotated;
  for (int i = 0; i < draws; ++i) plain.push_back(CMat(haar_unitary(n, rng)).trace().real());
  for (int i = 0; i < draws; ++i)
    rotated.push_back(CMat(g * haar_unitary(n, rng)).trace().real());
  double d = oracles::ks_statistic(plain, rotated);
  CHECK(d < oracles::ks_threshold(draws, draws, 0.01));
}

TEST_CASE("general stream: seeded determinism, self-consistent labels") {
  SamplerConfig cfg;
  cfg.dims = {5, 5};
  cfg.n_bands = 4;
  cfg.seed = 7;
  SampleStream s1(cfg), s2(cfg);
  Sample a = s1.at(3), b = s2.at(3);
  REQUIRE(a.links.has_value());
  for (size_t i = 0; i < a.links->u.size(); ++i)
    CHECK(same_buffers(a.links->u[i], b.links->u[i]));
  for (size_t i = 0; i < a.loops.w.size(); ++i) CHECK(same_buffers(a.loops.w[i], b.loops.w[i]));
  CHECK(a.label == b.label);

  // sample satisfies its own label and loop construction
  LoopField recomputed = wilson_loops_2d(*a.links);
  for (size_t i = 0; i < a.loops.w.size(); ++i)
    CHECK(max_abs(CMat(a.loops.w[i] - recomputed.w[i])) < 1e-10);
  CHECK(std::abs(a.label - chern_2d(a.loops).value) <= 1e-6);
  CHECK(std::abs(a.label - std::round(a.label)) <= 1e-6);
}

TEST_CASE("general stream labels: both signs occur, zero is common") {
  SamplerConfig cfg;
  cfg.dims = {5, 5};
  cfg.n_bands = 4;
  cfg.seed = 21;
  cfg.keep_links = false;
  SampleStream stream(cfg);
  int pos = 0, neg = 0, zero = 0;
  for (int i = 0; i < 200; ++i) {
    long l = std::lround(stream.at(i).label);
    if (l > 0) ++pos;
    if (l < 0) ++neg;
    if (l == 0) ++zero;
  }
  CHECK(pos > 10);
  CHECK(neg > 10);
  CHECK(zero > 10);
}

TEST_CASE("trivial_only filters general samples to label zero") {
  SamplerConfig cfg;
  cfg.dims = {3, 3};
  cfg.n_bands = 2;
  cfg.trivial_only = true;
  cfg.seed = 5;
  cfg.keep_links = false;
  SampleStream stream(cfg);
  for (int i = 0; i < 20; ++i) CHECK(std::lround(stream.at(i).label) == 0);
}

TEST_CASE("diagonal mode hits the requested label exactly") {
  SamplerConfig cfg;
  cfg.dims = {5, 5};
  cfg.n_bands = 4;
  cfg.mode = SamplerConfig::Mode::Diagonal;
  cfg.seed = 11;

  SUBCASE("trivial only") {
    cfg.trivial_only = true;
    cfg.label_dist = {{0, 1.0}};
    SampleStream stream(cfg);
    for (int i = 0; i < 10; ++i) {
      Sample s = stream.at(i);
      CHECK(s.label == 0.0);
      CHECK(!s.links.has_value());
      CHECK(std::abs(chern_2d(s.loops).value) <= 1e-9);
    }
  }
  SUBCASE("concentrated at 1") {
    cfg.label_dist = {{1, 1.0}};
    SampleStream stream(cfg);
    for (int i = 0; i < 10; ++i) {
      Sample s = stream.at(i);
      CHECK(s.label == 1.0);
      CHECK(std::abs(chern_2d(s.loops).value - 1.0) <= 1e-9);
    }
  }
  SUBCASE("mixed distribution roughly matches its weights") {
    cfg.label_dist = {{0, 0.5}, {1, 0.25}, {-1, 0.25}};
    SampleStream stream(cfg);
    int c0 = 0, c1 = 0, cm1 = 0;
    const int draws = 2000;
    for (int i = 0; i < draws; ++i) {
      long l = std::lround(stream.at(i).label);
      if (l == 0) ++c0;
      if (l == 1) ++c1;
      if (l == -1) ++cm1;
    }
    CHECK(c0 + c1 + cm1 == draws);
    // 4-sigma multinomial bands
    auto band = [&](double p) { return 4.0 * std::sqrt(draws * p * (1 - p)); };
    CHECK(std::abs(c0 - draws * 0.5) <= band(0.5));
    CHECK(std::abs(c1 - draws * 0.25) <= band(0.25));
    CHECK(std::abs(cm1 - draws * 0.25) <= band(0.25));
  }
}

TEST_CASE("diagonal construction: product of all plaquettes is the identity") {
  SamplerConfig cfg;
  cfg.dims = {4, 4};
  cfg.n_bands = 1;
  cfg.mode = SamplerConfig::Mode::Diagonal;
  cfg.label_dist = {{0, 0.6}, {1, 0.4}};
  cfg.seed = 3;
  SampleStream stream(cfg);
  for (int i = 0; i < 10; ++i) {
    Sample s = stream.at(i);
    cplx prod = 1.0;
    for (long k = 0; k < s.loops.lattice.n_sites(); ++k) prod *= s.loops.loop(0, k)(0, 0);
    CHECK(std::abs(prod - cplx(1.0, 0.0)) <= 1e-12);
  }
}

TEST_CASE("infeasible diagonal labels are rejected") {
  SamplerConfig cfg;
  cfg.dims = {2, 2};
  cfg.n_bands = 2;
  cfg.mode = SamplerConfig::Mode::Diagonal;
  cfg.label_dist = {{40, 1.0}};  // |2 pi 40| > 4 pi
  cfg.seed = 1;
  SampleStream stream(cfg);
  CHECK_THROWS_AS(stream.at(0), config_error);
}

TEST_CASE("links_from_diagonal_fluxes: identity field admits the zero solution") {
  Lattice lat({3, 3});
  LoopField id(lat, 1, 2);
  for (auto& m : id.w) m = CMat::Identity(2, 2);
  LinkField links = links_from_diagonal_fluxes(id);
  for (const auto& u : links.u) CHECK(max_abs(CMat(u - CMat::Identity(2, 2))) <= 1e-12);
}

TEST_CASE("links_from_diagonal_fluxes round-trips sampler output") {
  SamplerConfig cfg;
  cfg.dims = {5, 5};
  cfg.n_bands = 3;
  cfg.mode = SamplerConfig::Mode::Diagonal;
  cfg.label_dist = {{0, 0.3}, {1, 0.4}, {-2, 0.3}};
  cfg.seed = 77;
  SampleStream stream(cfg);
  for (int i = 0; i < 5; ++i) {
    Sample s = stream.at(i);
    LinkField links = links_from_diagonal_fluxes(s.loops);
    LoopField re = wilson_loops_2d(links);
    for (size_t j = 0; j < re.w.size(); ++j)
      CHECK(max_abs(CMat(re.w[j] - s.loops.w[j])) <= 1e-8);
  }
}

TEST_CASE("defective diagonal fields: error, correction, net bound") {
  // free phases (no per-band sum constraint) are infeasible in general
  RandomSource rng(15);
  Lattice lat({4, 4});
  const int bands = 3;
  LoopField loops(lat, 1, bands);
  for (long k = 0; k < lat.n_sites(); ++k) {
    loops.loop(0, k) = CMat::Zero(bands, bands);
    for (int b = 0; b < bands; ++b)
      loops.loop(0, k)(b, b) = std::polar(1.0, rng.uniform(-kPi, kPi));
  }
  CHECK_THROWS_AS(links_from_diagonal_fluxes(loops), validation_error);

  LoopField fixed = correct_band_defects(loops);
  for (double d : band_defects(fixed)) CHECK(std::abs(d) <= 1e-9);

  // distance between corrected and original fields obeys the net bound
  double dist2 = 0.0;
  for (long k = 0; k < lat.n_sites(); ++k)
    for (int b = 0; b < bands; ++b) {
      double psi = std::arg(fixed.loop(0, k)(b, b) / loops.loop(0, k)(b, b));
      dist2 += psi * psi;
    }
  CHECK(std::sqrt(dist2) <= kPi * std::sqrt(static_cast<double>(bands) / lat.n_sites()));

  LinkField links = links_from_diagonal_fluxes(fixed);
  LoopField re = wilson_loops_2d(links);
  for (size_t j = 0; j < re.w.size(); ++j)
    CHECK(max_abs(CMat(re.w[j] - fixed.w[j])) <= 1e-8);
}

TEST_CASE("shard round trip is bit exact") {
  SamplerConfig cfg;
  cfg.dims = {3, 3};
  cfg.n_bands = 2;
  cfg.seed = 9;
  SampleStream stream(cfg);
  std::vector<Sample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(stream.at(i));

  std::string path = "test_shard_tmp.bin";
  write_shard(path, samples);
  std::vector<Sample> back = read_shard(path);
  REQUIRE(back.size() == samples.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].label == samples[i].label);
    REQUIRE(back[i].links.has_value());
    for (size_t j = 0; j < samples[i].links->u.size(); ++j)
      CHECK(same_buffers(back[i].links->u[j], samples[i].links->u[j]));
    for (size_t j = 0; j < samples[i].loops.w.size(); ++j)
      CHECK(same_buffers(back[i].loops.w[j], samples[i].loops.w[j]));
  }
  std::remove(path.c_str());
}

TEST_CASE("sampler config validation") {
  SamplerConfig cfg;
  cfg.dims = {5, 5};
  cfg.mode = SamplerConfig::Mode::Diagonal;
  cfg.label_dist = {{0, 0.5}, {1, 0.4}};  // sums to 0.9
  CHECK_THROWS_AS(cfg.validate(), config_error);

  cfg.label_dist = {{0, 0.5}, {1, 0.5}};
  cfg.trivial_only = true;
  CHECK_THROWS_AS(cfg.validate(), config_error);

  cfg.trivial_only = false;
  cfg.dims = {5, 5, 5};
  cfg.mode = SamplerConfig::Mode::General;
  cfg.label_dist = {{0, 1.0}};
  CHECK_THROWS_AS(cfg.validate(), config_error);
}
