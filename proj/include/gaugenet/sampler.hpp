#pragma once

// Dataset generation: Haar-uniform link fields, diagonal (orbit-canonical)
// flux fields with controlled Chern-number distribution, and link
// reconstruction for diagonal data. Streams are stateless: sample i is a
// pure function of (config, i), so generation parallelizes across samples
// without changing the dataset.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gaugenet/field.hpp"

namespace gaugenet {

// Deterministic, platform-independent random source (splitmix64 mixing,
// xoshiro-free: uniforms straight from the 64-bit engine, Box-Muller
// normals).
class RandomSource {
 public:
  explicit RandomSource(uint64_t seed);

  static uint64_t mix(uint64_t seed, uint64_t stream);

  uint64_t bits();
  double uniform();                      // [0, 1)
  double uniform(double a, double b);    // [a, b)
  int uniform_int(int n);                // [0, n)
  double normal();                       // standard normal

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Haar-uniform unitary: complex Ginibre draw, QR, then column phases fixed
// so diag(R) is positive real.
CMat haar_unitary(int n, RandomSource& rng);

GaugeTransform random_gauge_transform(const Lattice& lat, int n_bands, RandomSource& rng);
LinkField random_link_field(const Lattice& lat, int n_bands, RandomSource& rng);

struct SamplerConfig {
  std::vector<int> dims{5, 5};
  int n_bands = 4;
  enum class Mode { General, Diagonal } mode = Mode::General;
  bool trivial_only = false;
  // Diagonal mode: target (chern value, probability) list.
  std::vector<std::pair<int, double>> label_dist{{0, 1.0}};
  uint64_t seed = 0;
  int rejection_budget = 10000;
  bool keep_links = true;

  void validate() const;
  Lattice lattice() const { return Lattice(dims); }
};

struct Sample {
  std::optional<LinkField> links;
  LoopField loops;
  double label = 0.0;
};

class SampleStream {
 public:
  explicit SampleStream(SamplerConfig cfg);
  Sample at(uint64_t index) const;
  const SamplerConfig& config() const { return cfg_; }

 private:
  SamplerConfig cfg_;
};

// Per-band phase-sum defects phi_lambda (wrapped to (-pi, pi]) of a diagonal
// loop field; all-zero defects are the solvability condition for diagonal
// links.
std::vector<double> band_defects(const LoopField& loops);

// theta -> theta - phi_lambda / n_sites, projecting onto the solvable set.
LoopField correct_band_defects(const LoopField& loops);

// Diagonal links reproducing a diagonal loop field (least-squares solve of
// the per-band phase system). Requires every band defect <= 1e-8.
LinkField links_from_diagonal_fluxes(const LoopField& loops);

// Shard + manifest I/O (binary container format; see README.md).
void write_shard(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_shard(const std::string& path);

}  // namespace gaugenet
