#include "gaugenet/autograd.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstring>
#include <nlohmann/json.hpp>

namespace gaugenet::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;
using CplxMat = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic,
                              Eigen::RowMajor>;

void check(bool cond, const std::string& msg) {
  if (!cond) throw config_error("autograd: " + msg);
}

// Resolves the tape shared by the inputs and whether the op must record.
struct Rec {
  Tape* tape = nullptr;
  bool active = false;

  Rec(std::initializer_list<const Tensor*> ins) {
    for (const Tensor* t : ins) {
      check(t->defined(), "undefined tensor input");
      if (t->tape() != nullptr) {
        check(tape == nullptr || tape == t->tape(), "inputs from different tapes");
        tape = t->tape();
        if (t->requires_grad()) active = true;
      }
    }
  }

  Tensor out(Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    if (active) tape->register_value(t, true);
    return t;
  }

  void done(std::string name, std::vector<Tensor> ins, std::vector<Tensor> outs,
            std::function<void(Tape::BackwardCtx&)> bw) {
    if (active) tape->record(std::move(name), ins, outs, std::move(bw));
  }
};

}  // namespace

long numel(const Shape& s) {
  long n = 1;
  for (long d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

Tensor Tensor::zeros(Shape shape) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.buf_ = std::make_shared<std::vector<double>>(static_cast<size_t>(numel(t.shape_)), 0.0);
  return t;
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.buf_->begin(), t.buf_->end(), v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  check(numel(shape) == static_cast<long>(data.size()), "from(): size mismatch");
  Tensor t;
  t.shape_ = std::move(shape);
  t.buf_ = std::make_shared<std::vector<double>>(std::move(data));
  return t;
}

Tensor Tensor::wrap(Shape shape, std::shared_ptr<std::vector<double>> data) {
  check(data && numel(shape) == static_cast<long>(data->size()), "wrap(): size mismatch");
  Tensor t;
  t.shape_ = std::move(shape);
  t.buf_ = std::move(data);
  return t;
}

double Tensor::value() const {
  check(defined() && size() == 1, "value(): not a scalar");
  return (*buf_)[0];
}

int Tape::register_value(Tensor& t, bool requires_grad) {
  t.tape_ = this;
  t.node_ = static_cast<int>(values_.size());
  t.requires_grad_ = requires_grad;
  values_.push_back({t.shape()});
  grads_.emplace_back();
  return t.node_;
}

Tensor Tape::leaf(const Tensor& value, bool requires_grad) {
  check(value.defined(), "leaf(): undefined tensor");
  Tensor t;
  t.buf_ = value.buffer();
  t.shape_ = value.shape();
  register_value(t, requires_grad);
  return t;
}

void Tape::record(std::string name, const std::vector<Tensor>& inputs,
                  const std::vector<Tensor>& outputs,
                  std::function<void(Tape::BackwardCtx&)> backward) {
  OpRec rec;
  rec.name = std::move(name);
  for (const Tensor& t : inputs) rec.in.push_back(t.node());
  for (const Tensor& t : outputs) rec.out.push_back(t.node());
  rec.backward = std::move(backward);
  ops_.push_back(std::move(rec));
}

const std::vector<double>* Tape::BackwardCtx::grad_of(const Tensor& t) const {
  if (t.tape() != &tape || t.node() < 0) return nullptr;
  const auto& g = tape.grads_[static_cast<size_t>(t.node())];
  return g.empty() ? nullptr : &g;
}

void Tape::BackwardCtx::accumulate(const Tensor& t, const double* g, long n) {
  if (t.tape() != &tape || t.node() < 0 || !t.requires_grad()) return;
  check(n == t.size(), "gradient size mismatch");
  auto& buf = tape.grads_[static_cast<size_t>(t.node())];
  if (buf.empty()) buf.assign(static_cast<size_t>(n), 0.0);
  for (long i = 0; i < n; ++i) buf[static_cast<size_t>(i)] += g[i];
}

void Tape::backward(const Tensor& loss) {
  check(loss.tape() == this && loss.node() >= 0, "backward(): loss not on this tape");
  check(loss.size() == 1, "backward(): loss must be a real scalar");
  check(!backward_done_, "backward(): tape already consumed");
  backward_done_ = true;
  grads_[static_cast<size_t>(loss.node())] = {1.0};
  BackwardCtx ctx{*this};
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    bool any = false;
    for (int o : it->out)
      if (!grads_[static_cast<size_t>(o)].empty()) any = true;
    if (any) it->backward(ctx);
  }
}

const std::vector<double>* Tape::grad(const Tensor& t) const {
  if (t.tape() != this || t.node() < 0) return nullptr;
  const auto& g = grads_[static_cast<size_t>(t.node())];
  return g.empty() ? nullptr : &g;
}

nlohmann::json Tape::graph_json() const {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& op : ops_)
    ops.push_back({{"op", op.name}, {"in", op.in}, {"out", op.out}});
  nlohmann::json vals = nlohmann::json::array();
  for (const auto& v : values_) vals.push_back(v.shape);
  return {{"values", vals}, {"ops", ops}};
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

template <class FwdF, class BwdF>
Tensor ew_unary(const char* name, const Tensor& a, FwdF fwd, BwdF bwd) {
  Rec r{&a};
  Tensor out = r.out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  const long n = a.size();
  for (long i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  r.done(name, {a}, {out}, [a, out, bwd](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    const long n = a.size();
    std::vector<double> da(static_cast<size_t>(n));
    const double* pa = a.data();
    const double* po = out.data();
    for (long i = 0; i < n; ++i) da[static_cast<size_t>(i)] = bwd(pa[i], po[i]) * (*g)[static_cast<size_t>(i)];
    ctx.accumulate(a, da.data(), n);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "add: shape mismatch");
  Rec r{&a, &b};
  Tensor out = r.out(a.shape());
  const long n = a.size();
  for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  r.done("add", {a, b}, {out}, [a, b, out](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    ctx.accumulate(a, g->data(), a.size());
    ctx.accumulate(b, g->data(), b.size());
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "sub: shape mismatch");
  Rec r{&a, &b};
  Tensor out = r.out(a.shape());
  const long n = a.size();
  for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  r.done("sub", {a, b}, {out}, [a, b, out](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    ctx.accumulate(a, g->data(), a.size());
    std::vector<double> nb(g->size());
    for (size_t i = 0; i < nb.size(); ++i) nb[i] = -(*g)[i];
    ctx.accumulate(b, nb.data(), b.size());
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch");
  Rec r{&a, &b};
  Tensor out = r.out(a.shape());
  const long n = a.size();
  for (long i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  r.done("mul", {a, b}, {out}, [a, b, out](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    const long n = a.size();
    std::vector<double> tmp(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) tmp[static_cast<size_t>(i)] = (*g)[static_cast<size_t>(i)] * b.data()[i];
    ctx.accumulate(a, tmp.data(), n);
    for (long i = 0; i < n; ++i) tmp[static_cast<size_t>(i)] = (*g)[static_cast<size_t>(i)] * a.data()[i];
    ctx.accumulate(b, tmp.data(), n);
  });
  return out;
}

Tensor scale(const Tensor& a, double c) {
  return ew_unary("scale", a, [c](double x) { return c * x; },
                  [c](double, double) { return c; });
}

Tensor add_const(const Tensor& a, double c) {
  return ew_unary("add_const", a, [c](double x) { return x + c; },
                  [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return ew_unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor logistic(const Tensor& a) {
  return ew_unary("logistic", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& a) {
  return ew_unary("abs", a, [](double x) { return std::abs(x); },
                  [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor max_const(const Tensor& a, double c) {
  return ew_unary("max_const", a, [c](double x) { return x > c ? x : c; },
                  [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

Tensor reciprocal(const Tensor& a) {
  return ew_unary("reciprocal", a, [](double x) { return 1.0 / x; },
                  [](double, double y) { return -y * y; });
}

Tensor sqrt(const Tensor& a) {
  return ew_unary("sqrt", a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor hypot(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(), "hypot: shape mismatch");
  Rec r{&a, &b};
  Tensor out = r.out(a.shape());
  const long n = a.size();
  for (long i = 0; i < n; ++i) out.data()[i] = std::hypot(a.data()[i], b.data()[i]);
  r.done("hypot", {a, b}, {out}, [a, b, out](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    const long n = a.size();
    std::vector<double> da(static_cast<size_t>(n)), db(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
      double h = out.data()[i];
      double inv = h > 0.0 ? (*g)[static_cast<size_t>(i)] / h : 0.0;
      da[static_cast<size_t>(i)] = inv * a.data()[i];
      db[static_cast<size_t>(i)] = inv * b.data()[i];
    }
    ctx.accumulate(a, da.data(), n);
    ctx.accumulate(b, db.data(), n);
  });
  return out;
}

// ---------------------------------------------------------------------------
// reductions & broadcasts

Tensor sum(const Tensor& a) {
  Rec r{&a};
  Tensor out = r.out({1});
  double s = 0.0;
  for (long i = 0; i < a.size(); ++i) s += a.data()[i];
  out.data()[0] = s;
  r.done("sum", {a}, {out}, [a, out](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    std::vector<double> da(static_cast<size_t>(a.size()), (*g)[0]);
    ctx.accumulate(a, da.data(), a.size());
  });
  return out;
}

Tensor mean(const Tensor& a) {
  check(a.size() > 0, "mean: empty reduction");
  Rec r{&a};
  Tensor out = r.out({1});
  double s = 0.0;
  for (long i = 0; i < a.size(); ++i) s += a.data()[i];
  out.data()[0] = s / static_cast<double>(a.size());
  r.done("mean", {a}, {out}, [a, out](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    std::vector<double> da(static_cast<size_t>(a.size()),
                           (*g)[0] / static_cast<double>(a.size()));
    ctx.accumulate(a, da.data(), a.size());
  });
  return out;
}

Tensor mean_axis0(const Tensor& a) {
  check(a.ndim() >= 1 && a.dim(0) >= 1, "mean_axis0: empty reduction");
  Rec r{&a};
  Shape os(a.shape().begin() + 1, a.shape().end());
  if (os.empty()) os = {1};
  Tensor out = r.out(os);
  const long rows = a.dim(0), cols = a.size() / a.dim(0);
  for (long c = 0; c < cols; ++c) {
    double s = 0.0;
    for (long rr = 0; rr < rows; ++rr) s += a.data()[rr * cols + c];
    out.data()[c] = s / static_cast<double>(rows);
  }
  r.done("mean_axis0", {a}, {out}, [a, out, rows, cols](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    std::vector<double> da(static_cast<size_t>(a.size()));
    for (long rr = 0; rr < rows; ++rr)
      for (long c = 0; c < cols; ++c)
        da[static_cast<size_t>(rr * cols + c)] = (*g)[static_cast<size_t>(c)] / static_cast<double>(rows);
    ctx.accumulate(a, da.data(), a.size());
  });
  return out;
}

namespace {

void check_prefix(const Tensor& a, const Tensor& b, const char* name) {
  check(b.ndim() <= a.ndim(), std::string(name) + ": broadcast rank");
  for (int i = 0; i < b.ndim(); ++i)
    check(a.dim(i) == b.dim(i), std::string(name) + ": broadcast shape mismatch");
}

}  // namespace

Tensor add_prefix(const Tensor& a, const Tensor& b) {
  check_prefix(a, b, "add_prefix");
  Rec r{&a, &b};
  Tensor out = r.out(a.shape());
  const long rows = b.size(), inner = a.size() / b.size();
  for (long rr = 0; rr < rows; ++rr)
    for (long i = 0; i < inner; ++i)
      out.data()[rr * inner + i] = a.data()[rr * inner + i] + b.data()[rr];
  r.done("add_prefix", {a, b}, {out}, [a, b, out, rows, inner](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    ctx.accumulate(a, g->data(), a.size());
    std::vector<double> db(static_cast<size_t>(rows), 0.0);
    for (long rr = 0; rr < rows; ++rr)
      for (long i = 0; i < inner; ++i) db[static_cast<size_t>(rr)] += (*g)[static_cast<size_t>(rr * inner + i)];
    ctx.accumulate(b, db.data(), rows);
  });
  return out;
}

Tensor mul_prefix(const Tensor& a, const Tensor& b) {
  check_prefix(a, b, "mul_prefix");
  Rec r{&a, &b};
  Tensor out = r.out(a.shape());
  const long rows = b.size(), inner = a.size() / b.size();
  for (long rr = 0; rr < rows; ++rr)
    for (long i = 0; i < inner; ++i)
      out.data()[rr * inner + i] = a.data()[rr * inner + i] * b.data()[rr];
  r.done("mul_prefix", {a, b}, {out}, [a, b, out, rows, inner](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    std::vector<double> da(static_cast<size_t>(a.size()));
    std::vector<double> db(static_cast<size_t>(rows), 0.0);
    for (long rr = 0; rr < rows; ++rr)
      for (long i = 0; i < inner; ++i) {
        long idx = rr * inner + i;
        da[static_cast<size_t>(idx)] = (*g)[static_cast<size_t>(idx)] * b.data()[rr];
        db[static_cast<size_t>(rr)] += (*g)[static_cast<size_t>(idx)] * a.data()[idx];
      }
    ctx.accumulate(a, da.data(), a.size());
    ctx.accumulate(b, db.data(), rows);
  });
  return out;
}

Tensor mul_axis1(const Tensor& a, const Tensor& b) {
  check(a.ndim() >= 2 && b.ndim() == 1 && a.dim(1) == b.dim(0), "mul_axis1: shape mismatch");
  Rec r{&a, &b};
  Tensor out = r.out(a.shape());
  const long a0 = a.dim(0), a1 = a.dim(1), inner = a.size() / (a0 * a1);
  for (long i = 0; i < a0; ++i)
    for (long j = 0; j < a1; ++j) {
      const double w = b.data()[j];
      const long base = (i * a1 + j) * inner;
      for (long t = 0; t < inner; ++t) out.data()[base + t] = a.data()[base + t] * w;
    }
  r.done("mul_axis1", {a, b}, {out}, [a, b, out, a0, a1, inner](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    std::vector<double> da(static_cast<size_t>(a.size()));
    std::vector<double> db(static_cast<size_t>(a1), 0.0);
    for (long i = 0; i < a0; ++i)
      for (long j = 0; j < a1; ++j) {
        const long base = (i * a1 + j) * inner;
        for (long t = 0; t < inner; ++t) {
          da[static_cast<size_t>(base + t)] = (*g)[static_cast<size_t>(base + t)] * b.data()[j];
          db[static_cast<size_t>(j)] += (*g)[static_cast<size_t>(base + t)] * a.data()[base + t];
        }
      }
    ctx.accumulate(a, da.data(), a.size());
    ctx.accumulate(b, db.data(), a1);
  });
  return out;
}

Tensor add_bscalar(const Tensor& a, const Tensor& s) {
  check(s.size() == 1, "add_bscalar: scalar expected");
  Rec r{&a, &s};
  Tensor out = r.out(a.shape());
  const double v = s.data()[0];
  for (long i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + v;
  r.done("add_bscalar", {a, s}, {out}, [a, s, out](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    ctx.accumulate(a, g->data(), a.size());
    double acc = 0.0;
    for (double x : *g) acc += x;
    ctx.accumulate(s, &acc, 1);
  });
  return out;
}

Tensor mul_bscalar(const Tensor& a, const Tensor& s) {
  check(s.size() == 1, "mul_bscalar: scalar expected");
  Rec r{&a, &s};
  Tensor out = r.out(a.shape());
  const double v = s.data()[0];
  for (long i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * v;
  r.done("mul_bscalar", {a, s}, {out}, [a, s, out](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    const double v = s.data()[0];
    std::vector<double> da(static_cast<size_t>(a.size()));
    double ds = 0.0;
    for (long i = 0; i < a.size(); ++i) {
      da[static_cast<size_t>(i)] = (*g)[static_cast<size_t>(i)] * v;
      ds += (*g)[static_cast<size_t>(i)] * a.data()[i];
    }
    ctx.accumulate(a, da.data(), a.size());
    ctx.accumulate(s, &ds, 1);
  });
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  check(a.ndim() == 2 && b.ndim() == 2, "matmul: rank-2 tensors expected");
  const long m = trans_a ? a.dim(1) : a.dim(0);
  const long k = trans_a ? a.dim(0) : a.dim(1);
  const long k2 = trans_b ? b.dim(1) : b.dim(0);
  const long n = trans_b ? b.dim(0) : b.dim(1);
  check(k == k2, "matmul: inner dimensions disagree");
  Rec r{&a, &b};
  Tensor out = r.out({m, n});
  {
    CMap ma(a.data(), a.dim(0), a.dim(1));
    CMap mb(b.data(), b.dim(0), b.dim(1));
    Map mo(out.data(), m, n);
    if (!trans_a && !trans_b)
      mo.noalias() = ma * mb;
    else if (trans_a && !trans_b)
      mo.noalias() = ma.transpose() * mb;
    else if (!trans_a && trans_b)
      mo.noalias() = ma * mb.transpose();
    else
      mo.noalias() = ma.transpose() * mb.transpose();
  }
  r.done("matmul", {a, b}, {out}, [a, b, out, trans_a, trans_b, m, n, k](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    CMap mg(g->data(), m, n);
    CMap ma(a.data(), a.dim(0), a.dim(1));
    CMap mb(b.data(), b.dim(0), b.dim(1));
    if (a.requires_grad()) {
      std::vector<double> da(static_cast<size_t>(a.size()));
      Map mda(da.data(), a.dim(0), a.dim(1));
      // dA' = G B'^T laid back out through the transpose flag
      if (!trans_a && !trans_b)
        mda.noalias() = mg * mb.transpose();
      else if (!trans_a && trans_b)
        mda.noalias() = mg * mb;
      else if (trans_a && !trans_b)
        mda.noalias() = mb * mg.transpose();
      else
        mda.noalias() = mb.transpose() * mg.transpose();
      ctx.accumulate(a, da.data(), a.size());
    }
    if (b.requires_grad()) {
      std::vector<double> db(static_cast<size_t>(b.size()));
      Map mdb(db.data(), b.dim(0), b.dim(1));
      if (!trans_a && !trans_b)
        mdb.noalias() = ma.transpose() * mg;
      else if (!trans_a && trans_b)
        mdb.noalias() = mg.transpose() * ma;
      else if (trans_a && !trans_b)
        mdb.noalias() = ma * mg;
      else
        mdb.noalias() = mg.transpose() * ma.transpose();
      ctx.accumulate(b, db.data(), b.size());
    }
  });
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 3 && b.ndim() == 3, "bmm: rank-3 tensors expected");
  check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1), "bmm: shape mismatch");
  const long bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Rec r{&a, &b};
  Tensor out = r.out({bs, m, n});
#pragma omp parallel for schedule(static)
  for (long i = 0; i < bs; ++i) {
    CMap ma(a.data() + i * m * k, m, k);
    CMap mb(b.data() + i * k * n, k, n);
    Map mo(out.data() + i * m * n, m, n);
    mo.noalias() = ma * mb;
  }
  r.done("bmm", {a, b}, {out}, [a, b, out, bs, m, k, n](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    std::vector<double> da, db;
    if (a.requires_grad()) da.assign(static_cast<size_t>(a.size()), 0.0);
    if (b.requires_grad()) db.assign(static_cast<size_t>(b.size()), 0.0);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < bs; ++i) {
      CMap mg(g->data() + i * m * n, m, n);
      CMap ma(a.data() + i * m * k, m, k);
      CMap mb(b.data() + i * k * n, k, n);
      if (a.requires_grad()) {
        Map mda(da.data() + i * m * k, m, k);
        mda.noalias() = mg * mb.transpose();
      }
      if (b.requires_grad()) {
        Map mdb(db.data() + i * k * n, k, n);
        mdb.noalias() = ma.transpose() * mg;
      }
    }
    if (a.requires_grad()) ctx.accumulate(a, da.data(), a.size());
    if (b.requires_grad()) ctx.accumulate(b, db.data(), b.size());
  });
  return out;
}

namespace {

Shape leading_or_scalar(const Tensor& a, int drop) {
  Shape s(a.shape().begin(), a.shape().end() - drop);
  if (s.empty()) s = {1};
  return s;
}

}  // namespace

Tensor trace_last2(const Tensor& a) {
  check(a.ndim() >= 2 && a.dim(a.ndim() - 1) == a.dim(a.ndim() - 2),
        "trace_last2: square trailing dims expected");
  const long nn = a.dim(a.ndim() - 1);
  const long slices = a.size() / (nn * nn);
  Rec r{&a};
  Tensor out = r.out(leading_or_scalar(a, 2));
  for (long s = 0; s < slices; ++s) {
    double acc = 0.0;
    for (long i = 0; i < nn; ++i) acc += a.data()[s * nn * nn + i * nn + i];
    out.data()[s] = acc;
  }
  r.done("trace_last2", {a}, {out}, [a, out, nn, slices](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    std::vector<double> da(static_cast<size_t>(a.size()), 0.0);
    for (long s = 0; s < slices; ++s)
      for (long i = 0; i < nn; ++i) da[static_cast<size_t>(s * nn * nn + i * nn + i)] = (*g)[static_cast<size_t>(s)];
    ctx.accumulate(a, da.data(), a.size());
  });
  return out;
}

Tensor transpose_last2(const Tensor& a) {
  check(a.ndim() >= 2, "transpose_last2: rank >= 2 expected");
  const long rows = a.dim(a.ndim() - 2), cols = a.dim(a.ndim() - 1);
  const long slices = a.size() / (rows * cols);
  Shape os = a.shape();
  std::swap(os[os.size() - 1], os[os.size() - 2]);
  Rec r{&a};
  Tensor out = r.out(os);
  for (long s = 0; s < slices; ++s)
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < cols; ++j)
        out.data()[s * rows * cols + j * rows + i] = a.data()[s * rows * cols + i * cols + j];
  r.done("transpose_last2", {a}, {out}, [a, out, rows, cols, slices](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    std::vector<double> da(static_cast<size_t>(a.size()));
    for (long s = 0; s < slices; ++s)
      for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j)
          da[static_cast<size_t>(s * rows * cols + i * cols + j)] =
              (*g)[static_cast<size_t>(s * rows * cols + j * rows + i)];
    ctx.accumulate(a, da.data(), a.size());
  });
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  check(numel(shape) == a.size(), "reshape: element count mismatch");
  Rec r{&a};
  Tensor out;
  if (r.active) {
    out = Tensor::wrap(shape, a.buffer());  // zero-copy alias
    r.tape->register_value(out, true);
    r.done("reshape", {a}, {out}, [a, out](Tape::BackwardCtx& ctx) {
      const auto* g = ctx.grad_of(out);
      if (!g) return;
      ctx.accumulate(a, g->data(), a.size());
    });
  } else {
    out = Tensor::wrap(std::move(shape), a.buffer());
  }
  return out;
}

Tensor concat0(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat0: no inputs");
  std::vector<const Tensor*> ptrs;
  for (const Tensor& t : parts) ptrs.push_back(&t);
  Rec r{};
  for (const Tensor* t : ptrs) {
    check(t->defined(), "concat0: undefined input");
    if (t->tape()) {
      check(r.tape == nullptr || r.tape == t->tape(), "concat0: inputs from different tapes");
      r.tape = t->tape();
      if (t->requires_grad()) r.active = true;
    }
  }
  Shape trailing(parts[0].shape().begin() + 1, parts[0].shape().end());
  long rows = 0;
  for (const Tensor& t : parts) {
    check(Shape(t.shape().begin() + 1, t.shape().end()) == trailing,
          "concat0: trailing shapes differ");
    rows += t.dim(0);
  }
  Shape os = {rows};
  os.insert(os.end(), trailing.begin(), trailing.end());
  Tensor out = r.out(os);
  long offset = 0;
  for (const Tensor& t : parts) {
    std::memcpy(out.data() + offset, t.data(), static_cast<size_t>(t.size()) * sizeof(double));
    offset += t.size();
  }
  r.done("concat0", parts, {out}, [parts, out](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    long offset = 0;
    for (const Tensor& t : parts) {
      ctx.accumulate(t, g->data() + offset, t.size());
      offset += t.size();
    }
  });
  return out;
}

Tensor kron_vec(const Tensor& u, const Tensor& v) {
  check(u.ndim() == 1 && v.ndim() == 1, "kron_vec: vectors expected");
  const long n = u.dim(0), m = v.dim(0);
  Rec r{&u, &v};
  Tensor out = r.out({n * m});
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < m; ++j) out.data()[i * m + j] = u.data()[i] * v.data()[j];
  r.done("kron_vec", {u, v}, {out}, [u, v, out, n, m](Tape::BackwardCtx& ctx) {
    const auto* g = ctx.grad_of(out);
    if (!g) return;
    std::vector<double> du(static_cast<size_t>(n), 0.0), dv(static_cast<size_t>(m), 0.0);
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < m; ++j) {
        du[static_cast<size_t>(i)] += (*g)[static_cast<size_t>(i * m + j)] * v.data()[j];
        dv[static_cast<size_t>(j)] += (*g)[static_cast<size_t>(i * m + j)] * u.data()[i];
      }
    ctx.accumulate(u, du.data(), n);
    ctx.accumulate(v, dv.data(), m);
  });
  return out;
}

// ---------------------------------------------------------------------------
// complex pairs

CTensor cmatmul(const CTensor& a, const CTensor& b, bool trans_a, bool trans_b) {
  Tensor rr = matmul(a.re, b.re, trans_a, trans_b);
  Tensor ii = matmul(a.im, b.im, trans_a, trans_b);
  Tensor ri = matmul(a.re, b.im, trans_a, trans_b);
  Tensor ir = matmul(a.im, b.re, trans_a, trans_b);
  return {sub(rr, ii), add(ri, ir)};
}

CTensor cbmm(const CTensor& a, const CTensor& b) {
  Tensor rr = bmm(a.re, b.re);
  Tensor ii = bmm(a.im, b.im);
  Tensor ri = bmm(a.re, b.im);
  Tensor ir = bmm(a.im, b.re);
  return {sub(rr, ii), add(ri, ir)};
}

CTensor ctrace(const CTensor& a) { return {trace_last2(a.re), trace_last2(a.im)}; }

CTensor cdagger(const CTensor& a) {
  return {transpose_last2(a.re), neg(transpose_last2(a.im))};
}

CTensor cadd(const CTensor& a, const CTensor& b) {
  return {add(a.re, b.re), add(a.im, b.im)};
}

namespace {

void check_cswnn(const Tensor& t, const char* name) {
  check(t.ndim() == 4 && t.dim(2) == t.dim(3), std::string(name) + ": (C,S,N,N) expected");
}

}  // namespace

CTensor augment(const CTensor& w) {
  check_cswnn(w.re, "augment");
  check(w.re.shape() == w.im.shape(), "augment: re/im shape mismatch");
  const long c = w.re.dim(0), s = w.re.dim(1), n = w.re.dim(2);
  const long slice = n * n, chan = s * slice;
  Rec r{&w.re, &w.im};
  Tensor ore = r.out({2 * c + 1, s, n, n});
  Tensor oim = r.out({2 * c + 1, s, n, n});
  // channel 0: identity
  for (long k = 0; k < s; ++k)
    for (long i = 0; i < n; ++i) ore.data()[k * slice + i * n + i] = 1.0;
  // channels 1..c: copy
  std::memcpy(ore.data() + chan, w.re.data(), static_cast<size_t>(c * chan) * sizeof(double));
  std::memcpy(oim.data() + chan, w.im.data(), static_cast<size_t>(c * chan) * sizeof(double));
  // channels c+1..2c: Hermitian conjugates
  for (long ch = 0; ch < c; ++ch)
    for (long k = 0; k < s; ++k) {
      const double* wre = w.re.data() + ch * chan + k * slice;
      const double* wim = w.im.data() + ch * chan + k * slice;
      double* tre = ore.data() + (c + 1 + ch) * chan + k * slice;
      double* tim = oim.data() + (c + 1 + ch) * chan + k * slice;
      for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) {
          tre[j * n + i] = wre[i * n + j];
          tim[j * n + i] = -wim[i * n + j];
        }
    }
  r.done("augment", {w.re, w.im}, {ore, oim},
         [w, ore, oim, c, s, n, slice, chan](Tape::BackwardCtx& ctx) {
           const auto* gre = ctx.grad_of(ore);
           const auto* gim = ctx.grad_of(oim);
           if (!gre && !gim) return;
           std::vector<double> dre(static_cast<size_t>(w.re.size()), 0.0);
           std::vector<double> dim(static_cast<size_t>(w.im.size()), 0.0);
           for (long ch = 0; ch < c; ++ch)
             for (long k = 0; k < s; ++k) {
               double* tre = dre.data() + ch * chan + k * slice;
               double* tim = dim.data() + ch * chan + k * slice;
               for (long i = 0; i < n; ++i)
                 for (long j = 0; j < n; ++j) {
                   if (gre) {
                     tre[i * n + j] += (*gre)[static_cast<size_t>((1 + ch) * chan + k * slice + i * n + j)];
                     tre[i * n + j] += (*gre)[static_cast<size_t>((c + 1 + ch) * chan + k * slice + j * n + i)];
                   }
                   if (gim) {
                     tim[i * n + j] += (*gim)[static_cast<size_t>((1 + ch) * chan + k * slice + i * n + j)];
                     tim[i * n + j] -= (*gim)[static_cast<size_t>((c + 1 + ch) * chan + k * slice + j * n + i)];
                   }
                 }
             }
           ctx.accumulate(w.re, dre.data(), w.re.size());
           ctx.accumulate(w.im, dim.data(), w.im.size());
         });
  return {ore, oim};
}

CTensor pair_contract(const CTensor& a, const CTensor& b) {
  check_cswnn(a.re, "pair_contract");
  check_cswnn(b.re, "pair_contract");
  const long ca = a.re.dim(0), s = a.re.dim(1), n = a.re.dim(2);
  check(b.re.dim(0) % ca == 0 && b.re.dim(1) == s && b.re.dim(2) == n,
        "pair_contract: (Cb*Ca,S,N,N) second input expected");
  const long cb = b.re.dim(0) / ca;
  const long slice = n * n;
  Rec r{&a.re, &a.im, &b.re, &b.im};
  Tensor ore = r.out({cb, s, n, n});
  Tensor oim = r.out({cb, s, n, n});
  auto amat = [&](const double* base, long ch, long k) {
    return CMap(base + (ch * s + k) * slice, n, n);
  };
#pragma omp parallel for schedule(static)
  for (long k = 0; k < s; ++k) {
    RowMat acc_re(n, n), acc_im(n, n);
    for (long g = 0; g < cb; ++g) {
      acc_re.setZero();
      acc_im.setZero();
      for (long m = 0; m < ca; ++m) {
        auto are = amat(a.re.data(), m, k);
        auto aim = amat(a.im.data(), m, k);
        auto bre = amat(b.re.data(), g * ca + m, k);
        auto bim = amat(b.im.data(), g * ca + m, k);
        acc_re.noalias() += are * bre;
        acc_re.noalias() -= aim * bim;
        acc_im.noalias() += are * bim;
        acc_im.noalias() += aim * bre;
      }
      Map(ore.data() + (g * s + k) * slice, n, n) = acc_re;
      Map(oim.data() + (g * s + k) * slice, n, n) = acc_im;
    }
  }
  r.done("pair_contract", {a.re, a.im, b.re, b.im}, {ore, oim},
         [a, b, ore, oim, ca, cb, s, n, slice](Tape::BackwardCtx& ctx) {
           const auto* gre = ctx.grad_of(ore);
           const auto* gim = ctx.grad_of(oim);
           if (!gre && !gim) return;
           bool need_a = a.re.requires_grad() || a.im.requires_grad();
           bool need_b = b.re.requires_grad() || b.im.requires_grad();
           std::vector<double> dare, daim, dbre, dbim;
           if (need_a) {
             dare.assign(static_cast<size_t>(a.re.size()), 0.0);
             daim.assign(static_cast<size_t>(a.im.size()), 0.0);
           }
           if (need_b) {
             dbre.assign(static_cast<size_t>(b.re.size()), 0.0);
             dbim.assign(static_cast<size_t>(b.im.size()), 0.0);
           }
           auto amat = [&](const double* base, long ch, long k) {
             return CMap(base + (ch * s + k) * slice, n, n);
           };
#pragma omp parallel for schedule(static)
           for (long k = 0; k < s; ++k) {
             RowMat gr(n, n), gi(n, n);
             for (long g = 0; g < cb; ++g) {
               if (gre)
                 gr = CMap(gre->data() + (g * s + k) * slice, n, n);
               else
                 gr.setZero();
               if (gim)
                 gi = CMap(gim->data() + (g * s + k) * slice, n, n);
               else
                 gi.setZero();
               for (long m = 0; m < ca; ++m) {
                 auto are = amat(a.re.data(), m, k);
                 auto aim = amat(a.im.data(), m, k);
                 auto bre = amat(b.re.data(), g * ca + m, k);
                 auto bim = amat(b.im.data(), g * ca + m, k);
                 if (need_a) {
                   // dA = G B^H
                   Map dre(dare.data() + (m * s + k) * slice, n, n);
                   Map dim_(daim.data() + (m * s + k) * slice, n, n);
                   dre.noalias() += gr * bre.transpose();
                   dre.noalias() += gi * bim.transpose();
                   dim_.noalias() += gi * bre.transpose();
                   dim_.noalias() -= gr * bim.transpose();
                 }
                 if (need_b) {
                   // dB = A^H G
                   Map dre(dbre.data() + ((g * ca + m) * s + k) * slice, n, n);
                   Map dim_(dbim.data() + ((g * ca + m) * s + k) * slice, n, n);
                   dre.noalias() += are.transpose() * gr;
                   dre.noalias() += aim.transpose() * gi;
                   dim_.noalias() += are.transpose() * gi;
                   dim_.noalias() -= aim.transpose() * gr;
                 }
               }
             }
           }
           if (need_a) {
             ctx.accumulate(a.re, dare.data(), a.re.size());
             ctx.accumulate(a.im, daim.data(), a.im.size());
           }
           if (need_b) {
             ctx.accumulate(b.re, dbre.data(), b.re.size());
             ctx.accumulate(b.im, dbim.data(), b.im.size());
           }
         });
  return {ore, oim};
}

CTensor transport(const CTensor& w, const std::shared_ptr<TransportPlan>& plan) {
  check_cswnn(w.re, "transport");
  check(plan != nullptr, "transport: missing plan");
  const long c = w.re.dim(0), s = w.re.dim(1), n = w.re.dim(2);
  check(s == plan->n_sites && n == plan->n_bands, "transport: plan/feature mismatch");
  const long p = plan->n_paths;
  const long slice = n * n;
  Rec r{&w.re, &w.im};
  Tensor ore = r.out({p * c, s, n, n});
  Tensor oim = r.out({p * c, s, n, n});
  auto vmat = [&](long path, long k) {
    return Eigen::Map<const CplxMat>(plan->v->data() + (path * s + k) * slice, n, n);
  };
#pragma omp parallel for schedule(static)
  for (long k = 0; k < s; ++k) {
    CplxMat wm(n, n), t(n, n);
    for (long path = 0; path < p; ++path) {
      auto v = vmat(path, k);
      const long src = plan->source[static_cast<size_t>(path * s + k)];
      for (long ch = 0; ch < c; ++ch) {
        const double* wre = w.re.data() + (ch * s + src) * slice;
        const double* wim = w.im.data() + (ch * s + src) * slice;
        for (long i = 0; i < slice; ++i) wm.data()[i] = {wre[i], wim[i]};
        t.noalias() = v * wm * v.adjoint();
        double* tre = ore.data() + ((path * c + ch) * s + k) * slice;
        double* tim = oim.data() + ((path * c + ch) * s + k) * slice;
        for (long i = 0; i < slice; ++i) {
          tre[i] = t.data()[i].real();
          tim[i] = t.data()[i].imag();
        }
      }
    }
  }
  r.done("transport", {w.re, w.im}, {ore, oim},
         [w, ore, oim, plan, c, s, n, slice](Tape::BackwardCtx& ctx) {
           const auto* gre = ctx.grad_of(ore);
           const auto* gim = ctx.grad_of(oim);
           if (!gre && !gim) return;
           const long p = plan->n_paths;
           std::vector<double> dre(static_cast<size_t>(w.re.size()), 0.0);
           std::vector<double> dim_(static_cast<size_t>(w.im.size()), 0.0);
           // invert the gather: contributions to site k come from the sites
           // whose path target is k
           std::vector<long> inv(static_cast<size_t>(p * s));
           for (long path = 0; path < p; ++path)
             for (long k = 0; k < s; ++k)
               inv[static_cast<size_t>(path * s +
                                       plan->source[static_cast<size_t>(path * s + k)])] = k;
#pragma omp parallel for schedule(static)
           for (long k = 0; k < s; ++k) {
             CplxMat g(n, n), d(n, n);
             for (long path = 0; path < p; ++path) {
               const long at = inv[static_cast<size_t>(path * s + k)];
               auto v = Eigen::Map<const CplxMat>(plan->v->data() + (path * s + at) * slice, n, n);
               for (long ch = 0; ch < c; ++ch) {
                 const long go = ((path * c + ch) * s + at) * slice;
                 for (long i = 0; i < slice; ++i)
                   g.data()[i] = {gre ? (*gre)[static_cast<size_t>(go + i)] : 0.0,
                                  gim ? (*gim)[static_cast<size_t>(go + i)] : 0.0};
                 d.noalias() = v.adjoint() * g * v;
                 double* tre = dre.data() + (ch * s + k) * slice;
                 double* tim = dim_.data() + (ch * s + k) * slice;
                 for (long i = 0; i < slice; ++i) {
                   tre[i] += d.data()[i].real();
                   tim[i] += d.data()[i].imag();
                 }
               }
             }
           }
           ctx.accumulate(w.re, dre.data(), w.re.size());
           ctx.accumulate(w.im, dim_.data(), w.im.size());
         });
  return {ore, oim};
}

Tensor std_pop(const Tensor& a) {
  check(a.size() >= 2, "std_pop: need at least two entries");
  Tensor m = mean(a);
  Tensor centered = add_bscalar(a, neg(m));
  Tensor var = mean(mul(centered, centered));
  // epsilon keeps the root differentiable when the spread collapses to zero
  return sqrt(add_const(var, 1e-18));
}

GradCheckReport grad_check(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, double h, double rel_tol, double abs_tol) {
  // analytic pass
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, true));
  Tensor loss = fn(tape, leaves);
  tape.backward(loss);

  GradCheckReport rep;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    const std::vector<double>* g = tape.grad(leaves[ti]);
    for (long i = 0; i < inputs[ti].size(); ++i) {
      double analytic = g ? (*g)[static_cast<size_t>(i)] : 0.0;
      Tensor probe = Tensor::from(inputs[ti].shape(),
                                  std::vector<double>(inputs[ti].data(),
                                                      inputs[ti].data() + inputs[ti].size()));
      auto eval = [&](double x) {
        probe.data()[i] = x;
        Tape t2;
        std::vector<Tensor> ls;
        for (size_t tj = 0; tj < inputs.size(); ++tj)
          ls.push_back(t2.leaf(tj == ti ? probe : inputs[tj], false));
        return fn(t2, ls).value();
      };
      double x0 = inputs[ti].data()[i];
      double fd = (eval(x0 + h) - eval(x0 - h)) / (2.0 * h);
      double err = std::abs(analytic - fd);
      double scale = std::max(std::abs(analytic), std::abs(fd));
      rep.max_abs_err = std::max(rep.max_abs_err, err);
      if (scale > 0.0) rep.max_rel_err = std::max(rep.max_rel_err, err / scale);
      if (err > std::max(abs_tol, rel_tol * scale)) rep.ok = false;
    }
  }
  return rep;
}

}  // namespace gaugenet::ag
