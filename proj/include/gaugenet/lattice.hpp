#pragma once

// Periodic rectangular lattice with row-major site indexing.

#include <stdexcept>
#include <string>
#include <vector>

namespace gaugenet {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class validation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Lattice {
  std::vector<int> dims;

  Lattice() = default;
  explicit Lattice(std::vector<int> extents) : dims(std::move(extents)) {
    if (dims.empty()) throw config_error("lattice needs at least one dimension");
    for (int d : dims)
      if (d < 2) throw config_error("lattice extent must be >= 2, got " + std::to_string(d));
  }

  int ndim() const { return static_cast<int>(dims.size()); }

  long n_sites() const {
    long n = 1;
    for (int d : dims) n *= d;
    return n;
  }

  // Row-major flattening of the multi-index.
  long site_index(const std::vector<int>& c) const {
    long k = 0;
    for (int i = 0; i < ndim(); ++i) k = k * dims[i] + c[i];
    return k;
  }

  std::vector<int> coords_of(long k) const {
    std::vector<int> c(ndim());
    for (int i = ndim() - 1; i >= 0; --i) {
      c[i] = static_cast<int>(k % dims[i]);
      k /= dims[i];
    }
    return c;
  }

  // Site shifted by `step` lattice units along axis mu, wrapping periodically.
  long neighbor(long k, int mu, int step = 1) const {
    long stride = 1;
    for (int i = ndim() - 1; i > mu; --i) stride *= dims[i];
    int extent = dims[mu];
    int coord = static_cast<int>((k / stride) % extent);
    int wrapped = ((coord + step) % extent + extent) % extent;
    return k + static_cast<long>(wrapped - coord) * stride;
  }

  bool operator==(const Lattice& o) const { return dims == o.dims; }
  bool operator!=(const Lattice& o) const { return !(*this == o); }

  std::string to_string() const {
    std::string s = "[";
    for (size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
    return s + "]";
  }
};

}  // namespace gaugenet
