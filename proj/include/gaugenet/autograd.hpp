#pragma once

// Minimal reverse-mode autodiff over real float64 tensor buffers. Complex
// matrices are carried as (re, im) tensor pairs; the complex-structured
// primitives (augment, pair_contract, transport) implement their adjoints
// directly in paired-real form.
//
// A Tape is single-threaded. Batch parallelism runs one tape per sample and
// sums leaf gradients in sample order, which keeps training bit-deterministic
// for any thread count.

#include <complex>
#include <functional>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "gaugenet/lattice.hpp"

namespace gaugenet::ag {

using Shape = std::vector<long>;

long numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> data);
  // Aliases an existing buffer (no copy); used to bind model parameters.
  static Tensor wrap(Shape shape, std::shared_ptr<std::vector<double>> data);

  bool defined() const { return buf_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  long dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  long size() const { return buf_ ? static_cast<long>(buf_->size()) : 0; }
  double* data() { return buf_->data(); }
  const double* data() const { return buf_->data(); }
  const std::shared_ptr<std::vector<double>>& buffer() const { return buf_; }
  double value() const;  // scalar convenience

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool requires_grad() const { return requires_grad_; }

 private:
  friend class Tape;
  std::shared_ptr<std::vector<double>> buf_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  bool requires_grad_ = false;
};

class Tape {
 public:
  // Registers a differentiable (or frozen) leaf aliasing the tensor's buffer.
  Tensor leaf(const Tensor& value, bool requires_grad = true);

  // Accumulates gradients for all requires-grad values reachable from the
  // scalar loss, traversing ops in exact reverse recording order. A tape can
  // run backward once.
  void backward(const Tensor& loss);

  bool backward_done() const { return backward_done_; }
  const std::vector<double>* grad(const Tensor& t) const;
  size_t num_ops() const { return ops_.size(); }
  nlohmann::json graph_json() const;  // adjacency-list debug dump

  // --- op-author interface ---
  struct BackwardCtx {
    Tape& tape;
    const std::vector<double>* grad_of(const Tensor& t) const;
    void accumulate(const Tensor& t, const double* g, long n);
  };
  int register_value(Tensor& t, bool requires_grad);
  void record(std::string name, const std::vector<Tensor>& inputs,
              const std::vector<Tensor>& outputs,
              std::function<void(BackwardCtx&)> backward);

 private:
  struct OpRec {
    std::string name;
    std::vector<int> in, out;
    std::function<void(BackwardCtx&)> backward;
  };
  struct ValueRec {
    Shape shape;
  };
  std::vector<ValueRec> values_;
  std::vector<OpRec> ops_;
  std::vector<std::vector<double>> grads_;  // by value id; empty = zero
  bool backward_done_ = false;
  friend struct BackwardCtx;
};

// ---- elementwise / reduction primitives ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor logistic(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor max_const(const Tensor& a, double c);
Tensor reciprocal(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor hypot(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_axis0(const Tensor& a);             // (R, C...) -> (C...)
Tensor add_prefix(const Tensor& a, const Tensor& b);  // b broadcast over trailing dims
Tensor mul_prefix(const Tensor& a, const Tensor& b);
Tensor mul_axis1(const Tensor& a, const Tensor& b);   // b indexed by axis 1 of a
Tensor add_bscalar(const Tensor& a, const Tensor& s);  // s is a 1-element tensor
Tensor mul_bscalar(const Tensor& a, const Tensor& s);

// ---- linear algebra primitives ----
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor bmm(const Tensor& a, const Tensor& b);   // (B,M,K) x (B,K,N)
Tensor trace_last2(const Tensor& a);
Tensor transpose_last2(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat0(const std::vector<Tensor>& parts);
Tensor kron_vec(const Tensor& u, const Tensor& v);

// ---- complex pair ----
struct CTensor {
  Tensor re, im;
  bool defined() const { return re.defined(); }
  const Shape& shape() const { return re.shape(); }
};

CTensor cmatmul(const CTensor& a, const CTensor& b, bool trans_a = false, bool trans_b = false);
CTensor cbmm(const CTensor& a, const CTensor& b);
CTensor ctrace(const CTensor& a);
CTensor cdagger(const CTensor& a);
CTensor cadd(const CTensor& a, const CTensor& b);

// [I, W_1..W_C, W^dag_1..W^dag_C] channel augmentation on (C,S,N,N) pairs.
CTensor augment(const CTensor& w);

// out[gamma,s] = sum_mu A[mu,s] * B[gamma*Ca+mu,s]
CTensor pair_contract(const CTensor& a, const CTensor& b);

// Parallel transport gather: out[(p,c),s] = V[p,s] W[c, nbr(p,s)] V[p,s]^dag.
struct TransportPlan {
  long n_sites = 0;
  int n_paths = 0;
  int n_bands = 0;
  std::vector<long> source;                       // (p,s) -> neighbor site
  std::shared_ptr<std::vector<std::complex<double>>> v;  // (p,s) row-major NxN
};
CTensor transport(const CTensor& w, const std::shared_ptr<TransportPlan>& plan);

// Population standard deviation (sqrt of mean squared deviation, with a tiny
// epsilon under the root so constant inputs stay differentiable).
Tensor std_pop(const Tensor& a);

// ---- finite-difference gradient checking ----
struct GradCheckReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool ok = true;
};
GradCheckReport grad_check(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, double h = 1e-6, double rel_tol = 1e-5,
    double abs_tol = 1e-7);

}  // namespace gaugenet::ag
