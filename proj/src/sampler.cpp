#include "gaugenet/sampler.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numbers>

#include "gaugenet/chern.hpp"
#include "gaugenet/container.hpp"
#include "gaugenet/wilson.hpp"

namespace gaugenet {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9E3779B97F4A7C15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace

RandomSource::RandomSource(uint64_t seed) : state_(seed) {
  // burn-in so nearby seeds decorrelate
  splitmix64(state_);
  splitmix64(state_);
}

uint64_t RandomSource::mix(uint64_t seed, uint64_t stream) {
  uint64_t s = seed;
  uint64_t a = splitmix64(s);
  s = a ^ (stream * 0xD1B54A32D192ED03ull + 0x2545F4914F6CDD1Dull);
  return splitmix64(s);
}

uint64_t RandomSource::bits() { return splitmix64(state_); }

double RandomSource::uniform() {
  return static_cast<double>(bits() >> 11) * 0x1.0p-53;
}

double RandomSource::uniform(double a, double b) { return a + (b - a) * uniform(); }

int RandomSource::uniform_int(int n) {
  // rejection keeps the draw exactly uniform
  uint64_t un = static_cast<uint64_t>(n);
  uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = bits();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

double RandomSource::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  has_spare_ = true;
  spare_ = r * std::sin(kTwoPi * u2);
  return r * std::cos(kTwoPi * u2);
}

CMat haar_unitary(int n, RandomSource& rng) {
  if (n < 1) throw config_error("haar_unitary: band count must be >= 1");
  for (int attempt = 0; attempt < 16; ++attempt) {
    CMat a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = cplx(rng.normal(), rng.normal());
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(n, n);
    Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
    bool full_rank = true;
    for (int j = 0; j < n; ++j) {
      double mod = std::abs(r(j, j));
      if (mod < 1e-12) {
        full_rank = false;
        break;
      }
      // rotate column j so the matching R diagonal becomes positive real
      q.col(j) *= r(j, j) / mod;
    }
    if (full_rank) return CMat(q);
  }
  throw numerical_error("haar_unitary: repeated rank deficiency");
}

GaugeTransform random_gauge_transform(const Lattice& lat, int n_bands, RandomSource& rng) {
  GaugeTransform g(lat, n_bands);
  for (auto& m : g.omega) m = haar_unitary(n_bands, rng);
  return g;
}

LinkField random_link_field(const Lattice& lat, int n_bands, RandomSource& rng) {
  LinkField f(lat, n_bands);
  for (int mu = 0; mu < lat.ndim(); ++mu)
    for (long k = 0; k < lat.n_sites(); ++k) f.link(mu, k) = haar_unitary(n_bands, rng);
  return f;
}

void SamplerConfig::validate() const {
  Lattice lat(dims);
  if (n_bands < 1) throw config_error("sampler: n_bands must be >= 1");
  if (mode == Mode::Diagonal && lat.ndim() != 2)
    throw config_error("sampler: diagonal mode requires a 2D lattice");
  if (lat.ndim() != 2 && lat.ndim() != 4)
    throw config_error("sampler: Chern labels need a 2D or 4D lattice");
  if (trivial_only && lat.ndim() != 2)
    throw config_error("sampler: trivial_only filtering is defined for 2D labels");
  if (mode == Mode::Diagonal) {
    double total = 0.0;
    for (auto& [v, p] : label_dist) {
      if (p < 0.0) throw config_error("sampler: negative label probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw config_error("sampler: label probabilities must sum to 1");
    if (trivial_only)
      for (auto& [v, p] : label_dist)
        if (v != 0 && p > 0.0)
          throw config_error("sampler: trivial_only requires the label distribution "
                             "concentrated at 0");
  }
  if (rejection_budget < 1) throw config_error("sampler: rejection budget must be >= 1");
}

SampleStream::SampleStream(SamplerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

namespace {

Sample general_sample(const SamplerConfig& cfg, RandomSource& rng) {
  Lattice lat = cfg.lattice();
  for (int attempt = 0; attempt < cfg.rejection_budget; ++attempt) {
    LinkField links = random_link_field(lat, cfg.n_bands, rng);
    LoopField loops = lat.ndim() == 2 ? wilson_loops_2d(links) : wilson_loops_4d(links);
    double label =
        lat.ndim() == 2 ? chern_2d(loops).value : chern_4d(loops).value;
    if (cfg.trivial_only && std::lround(label) != 0) continue;
    Sample s;
    if (cfg.keep_links) s.links = std::move(links);
    s.loops = std::move(loops);
    s.label = label;
    return s;
  }
  throw numerical_error("sampler: rejection budget exceeded while filtering for "
                        "trivial samples");
}

int draw_label(const SamplerConfig& cfg, RandomSource& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (auto& [v, p] : cfg.label_dist) {
    acc += p;
    if (u < acc) return v;
  }
  return cfg.label_dist.back().first;
}

// Split the target Chern number across bands as integers, balanced then
// shuffled with a few +1/-1 transfers for variety. Each band must keep
// |2 pi n_band| < n_sites * pi.
std::vector<long> split_label(long n, int bands, long cap, RandomSource& rng) {
  std::vector<long> parts(bands, n / bands);
  long rem = n - (n / bands) * bands;
  long step = rem >= 0 ? 1 : -1;
  for (long i = 0; i < std::abs(rem); ++i) parts[static_cast<size_t>(i) % bands] += step;
  if (bands > 1) {
    int moves = bands;
    for (int m = 0; m < moves; ++m) {
      int a = rng.uniform_int(bands);
      int b = rng.uniform_int(bands);
      if (a == b) continue;
      if (parts[a] + 1 <= cap && parts[b] - 1 >= -cap) {
        ++parts[a];
        --parts[b];
      }
    }
  }
  return parts;
}

// S phases in (-pi, pi) with exact sum 2 pi n: uniform draws shifted to the
// target sum, rejected whenever the shift pushes any phase out of range.
std::vector<double> phases_with_sum(long s, long n, int budget, RandomSource& rng) {
  for (int attempt = 0; attempt < budget; ++attempt) {
    std::vector<double> th(s);
    double sum = 0.0;
    for (auto& t : th) {
      t = rng.uniform(-kPi, kPi);
      sum += t;
    }
    double shift = (kTwoPi * static_cast<double>(n) - sum) / static_cast<double>(s);
    bool ok = true;
    for (auto& t : th) {
      t += shift;
      if (t <= -kPi || t >= kPi) {
        ok = false;
        break;
      }
    }
    if (ok) return th;
  }
  throw numerical_error("sampler: could not draw phases with the requested flux sum");
}

Sample diagonal_sample(const SamplerConfig& cfg, RandomSource& rng) {
  Lattice lat = cfg.lattice();
  const long s = lat.n_sites();
  long n = draw_label(cfg, rng);
  if (kTwoPi * std::abs(static_cast<double>(n)) > static_cast<double>(s) * kPi)
    throw config_error("sampler: label " + std::to_string(n) +
                       " infeasible on " + std::to_string(s) + " sites");
  long cap = s / 2;
  std::vector<long> parts = split_label(n, cfg.n_bands, cap, rng);

  LoopField loops(lat, 1, cfg.n_bands);
  for (long k = 0; k < s; ++k) loops.loop(0, k) = CMat::Zero(cfg.n_bands, cfg.n_bands);
  for (int b = 0; b < cfg.n_bands; ++b) {
    std::vector<double> th = phases_with_sum(s, parts[b], cfg.rejection_budget, rng);
    for (long k = 0; k < s; ++k)
      loops.loop(0, k)(b, b) = std::polar(1.0, th[k]);
  }
  Sample out;
  out.loops = std::move(loops);
  out.label = static_cast<double>(n);
  return out;
}

}  // namespace

Sample SampleStream::at(uint64_t index) const {
  RandomSource rng(RandomSource::mix(cfg_.seed, index));
  return cfg_.mode == SamplerConfig::Mode::General ? general_sample(cfg_, rng)
                                                   : diagonal_sample(cfg_, rng);
}

namespace {

inline double wrap_pi(double x) {
  x = std::fmod(x + kPi, kTwoPi);
  if (x < 0) x += kTwoPi;
  x -= kPi;
  if (x <= -kPi) x = kPi;
  return x;
}

void require_diagonal_2d(const LoopField& loops) {
  if (loops.lattice.ndim() != 2 || loops.n_channels != 1)
    throw validation_error("diagonal fluxes: need a 2D single-channel field");
  for (const CMat& m : loops.w) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j)
        if (i != j && std::abs(m(i, j)) > 1e-10)
          throw validation_error("diagonal fluxes: off-diagonal entry above 1e-10");
  }
}

inline double site_phase(const LoopField& loops, long k, int band) {
  cplx z = loops.loop(0, k)(band, band);
  double mod = std::abs(z);
  if (std::abs(mod - 1.0) > 1e-8)
    throw validation_error("diagonal fluxes: diagonal entry modulus far from 1");
  double th = std::arg(z / mod);
  if (th <= -kPi) th = kPi;
  return th;
}

}  // namespace

std::vector<double> band_defects(const LoopField& loops) {
  require_diagonal_2d(loops);
  const long s = loops.lattice.n_sites();
  std::vector<double> defects(loops.n_bands, 0.0);
  for (int b = 0; b < loops.n_bands; ++b) {
    double sum = 0.0;
    for (long k = 0; k < s; ++k) sum += site_phase(loops, k, b);
    defects[b] = wrap_pi(sum);
  }
  return defects;
}

LoopField correct_band_defects(const LoopField& loops) {
  std::vector<double> defects = band_defects(loops);
  const long s = loops.lattice.n_sites();
  LoopField out = loops;
  for (int b = 0; b < loops.n_bands; ++b) {
    double shift = defects[b] / static_cast<double>(s);
    for (long k = 0; k < s; ++k)
      out.loop(0, k)(b, b) = std::polar(1.0, site_phase(loops, k, b) - shift);
  }
  return out;
}

LinkField links_from_diagonal_fluxes(const LoopField& loops) {
  require_diagonal_2d(loops);
  std::vector<double> defects = band_defects(loops);
  for (int b = 0; b < loops.n_bands; ++b)
    if (std::abs(defects[b]) > 1e-8)
      throw validation_error("links_from_diagonal_fluxes: band " + std::to_string(b) +
                             " phase defect " + std::to_string(defects[b]) +
                             " violates the solvability condition");

  const Lattice& lat = loops.lattice;
  const long s = lat.n_sites();
  // Plaquette phase equations: theta_k = tx_k + ty_{k+x} - tx_{k+y} - ty_k,
  // unknowns tau = (tx_0..tx_{s-1}, ty_0..ty_{s-1}). Rank is s-1; the
  // all-ones left null vector forces sum(theta) = 0, so integer windings are
  // absorbed into 2 pi lifts of individual targets first.
  Eigen::MatrixXd bmat = Eigen::MatrixXd::Zero(s, 2 * s);
  for (long k = 0; k < s; ++k) {
    bmat(k, k) += 1.0;
    bmat(k, s + lat.neighbor(k, 0)) += 1.0;
    bmat(k, lat.neighbor(k, 1)) -= 1.0;
    bmat(k, s + k) -= 1.0;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(bmat);

  LinkField links(lat, loops.n_bands);
  for (long k = 0; k < s; ++k) {
    links.link(0, k) = CMat::Zero(loops.n_bands, loops.n_bands);
    links.link(1, k) = CMat::Zero(loops.n_bands, loops.n_bands);
  }
  for (int b = 0; b < loops.n_bands; ++b) {
    Eigen::VectorXd theta(s);
    for (long k = 0; k < s; ++k) theta(k) = site_phase(loops, k, b);
    long winding = std::lround(theta.sum() / kTwoPi);
    if (winding != 0) {
      // lift |winding| sites by -+2pi, largest-magnitude phases first
      std::vector<long> order(s);
      for (long k = 0; k < s; ++k) order[k] = k;
      double sign = winding > 0 ? 1.0 : -1.0;
      std::sort(order.begin(), order.end(), [&](long a, long c) {
        return sign * theta(a) > sign * theta(c);
      });
      for (long i = 0; i < std::abs(winding); ++i) theta(order[i]) -= sign * kTwoPi;
    }
    Eigen::VectorXd tau = cod.solve(theta);
    for (long k = 0; k < s; ++k) {
      links.link(0, k)(b, b) = std::polar(1.0, tau(k));
      links.link(1, k)(b, b) = std::polar(1.0, tau(s + k));
    }
  }
  return links;
}

using nlohmann::json;

void write_shard(const std::string& path, const std::vector<Sample>& samples) {
  if (samples.empty()) throw validation_error("write_shard: empty shard");
  const Sample& first = samples.front();
  bool has_links = first.links.has_value();
  json labels = json::array();
  std::vector<double> payload;
  for (const Sample& smp : samples) {
    if (smp.links.has_value() != has_links ||
        smp.loops.lattice != first.loops.lattice ||
        smp.loops.n_channels != first.loops.n_channels ||
        smp.loops.n_bands != first.loops.n_bands)
      throw validation_error("write_shard: inhomogeneous samples");
    labels.push_back(smp.label);
    if (has_links) pack_cmats(smp.links->u, payload);
    pack_cmats(smp.loops.w, payload);
  }
  json header{{"kind", "samples"},
              {"dims", first.loops.lattice.dims},
              {"n_bands", first.loops.n_bands},
              {"n_channels", first.loops.n_channels},
              {"dtype", "c128"},
              {"count", samples.size()},
              {"has_links", has_links},
              {"labels", labels}};
  write_container(path, header, payload);
}

std::vector<Sample> read_shard(const std::string& path) {
  Container c = read_container(path);
  json h = json::parse(c.header_json);
  if (h.value("kind", "") != "samples") throw validation_error("not a sample shard: " + path);
  Lattice lat(h.at("dims").get<std::vector<int>>());
  int bands = h.at("n_bands").get<int>();
  int channels = h.at("n_channels").get<int>();
  size_t count = h.at("count").get<size_t>();
  bool has_links = h.at("has_links").get<bool>();
  std::vector<double> labels = h.at("labels").get<std::vector<double>>();
  if (labels.size() != count) throw validation_error("shard label count mismatch: " + path);

  size_t mat_sz = 2 * static_cast<size_t>(bands) * bands;
  size_t links_mats = static_cast<size_t>(lat.ndim()) * lat.n_sites();
  size_t loops_mats = static_cast<size_t>(channels) * lat.n_sites();
  size_t per_sample = (has_links ? links_mats : 0) * mat_sz + loops_mats * mat_sz;
  if (c.payload.size() != per_sample * count)
    throw validation_error("shard payload size mismatch: " + path);

  std::vector<Sample> out(count);
  const double* p = c.payload.data();
  for (size_t i = 0; i < count; ++i) {
    if (has_links) {
      LinkField lf(lat, bands);
      unpack_cmats(p, links_mats, bands, lf.u);
      p += links_mats * mat_sz;
      out[i].links = std::move(lf);
    }
    LoopField wf(lat, channels, bands);
    unpack_cmats(p, loops_mats, bands, wf.w);
    p += loops_mats * mat_sz;
    out[i].loops = std::move(wf);
    out[i].label = labels[i];
  }
  return out;
}

}  // namespace gaugenet
