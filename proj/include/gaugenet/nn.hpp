#pragma once

// Gauge-equivariant layers (GEBL, GEAct, GEConv, Trace, Dense, TrNorm) and
// the three architectures built from them (GEBLNet, GEConvNet, TrMLP).
// Features are complex (C, S, N, N) tensor pairs; all layers are local except
// GEConv, which parallel-transports neighbor features along link paths.

#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "gaugenet/autograd.hpp"
#include "gaugenet/sampler.hpp"

namespace gaugenet::nn {

enum class LayerKind { GEBL, GEAct, GEConv, Trace, Dense, TrNorm };
std::string kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::GEBL;
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 0;        // GEConv only
  std::string activation;     // GEAct only
};

struct ModelSpec {
  std::string architecture = "GEBLNet";  // GEBLNet | GEConvNet | TrMLP
  std::vector<int> channels{32, 16, 8};  // packed-block output channels
  int n_bands = 4;
  bool use_trnorm = true;
  std::string activation = "relu";       // relu | logistic
  int kernel_size = 1;                   // GEConv branch kernel size
  std::vector<int> trmlp_hidden{64, 64};
  uint64_t init_seed = 1;

  void validate() const;
  std::vector<LayerSpec> layer_specs() const;
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct Param {
  std::string name;
  ag::Shape shape;
  std::shared_ptr<std::vector<double>> value;
  long size() const { return static_cast<long>(value->size()); }
};

// Statistics of |Tr W'^gamma_k| for one layer output; for TrNorm outputs
// chan_mean_dev records max_k | |mean_gamma Tr W'^gamma_k| - 1 |.
struct LayerStats {
  std::string layer;
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
  double chan_mean_dev = -1.0;  // < 0 when not applicable
};

struct ForwardCtx {
  ag::Tape* tape = nullptr;                 // null: plain forward, no recording
  const LinkField* links = nullptr;         // required by GEConv
  std::vector<LayerStats>* stats = nullptr; // optional instrumentation
};

ag::CTensor loops_to_ctensor(const LoopField& loops);

class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  long n_params() const;

  struct Output {
    ag::Tensor prediction;              // scalar
    ag::Tensor locals;                  // per-site dense outputs (S)
    std::vector<ag::Tensor> bound;      // tape leaves aligned with params()
  };

  // Core entry point: features shaped (C, S, N, N). GEConv layers need links.
  Output forward_features(const ag::CTensor& w, ForwardCtx ctx) const;
  Output forward(const Sample& s, ForwardCtx ctx = {}) const;

  void save_checkpoint(const std::string& path, long step,
                       const nlohmann::json& extra = {}) const;
  static Model load_checkpoint(const std::string& path, long* step = nullptr);

 private:
  struct Gebl {
    int idx_re = 0, idx_im = 0;
    int n_in_left = 0, n_in_right = 0, n_out = 0;
  };
  struct Conv {
    int idx_re = 0, idx_im = 0;
    int n_in = 0, n_out = 0, kernel = 0;
  };
  struct Block {  // one packed block; conv/merge only used by GEConvNet
    Gebl gebl;
    std::optional<Conv> conv;
    std::optional<Gebl> merge;
  };

  int add_param(const std::string& name, ag::Shape shape, double init_scale,
                RandomSource& rng);
  ag::CTensor bound_cplx(const std::vector<ag::Tensor>& bound, int idx_re, int idx_im,
                         ag::Shape shape) const;
  ag::CTensor run_gebl(const Gebl& g, const ag::CTensor& left, const ag::CTensor& right,
                       const std::vector<ag::Tensor>& bound) const;
  ag::CTensor run_conv(const Conv& c, const ag::CTensor& x, const LinkField& links,
                       const std::vector<ag::Tensor>& bound) const;
  ag::CTensor run_act(const ag::CTensor& x) const;
  ag::CTensor run_trnorm(const ag::CTensor& x) const;

  ModelSpec spec_;
  std::vector<Param> params_;
  std::vector<Block> blocks_;
  // terminal dense
  int dense_wre_ = 0, dense_wim_ = 0, dense_b_ = 0;
  // TrMLP dense stack: (w, b) index pairs
  std::vector<std::pair<int, int>> mlp_;
};

// Transport plan construction for GEConv (exposed for tests).
std::shared_ptr<ag::TransportPlan> build_transport_plan(const LinkField& links,
                                                        int kernel_size);

}  // namespace gaugenet::nn
