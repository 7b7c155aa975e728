#include "gaugenet/container.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace gaugenet {

using nlohmann::json;

void pack_cmats(const std::vector<CMat>& ms, std::vector<double>& out) {
  for (const CMat& m : ms) {
    // Row-major complex storage is already an interleaved (re, im) stream.
    const double* p = reinterpret_cast<const double*>(m.data());
    out.insert(out.end(), p, p + 2 * m.size());
  }
}

void unpack_cmats(const double* in, size_t count, int n, std::vector<CMat>& out) {
  out.resize(count);
  size_t stride = 2 * static_cast<size_t>(n) * n;
  for (size_t i = 0; i < count; ++i) {
    out[i].resize(n, n);
    std::memcpy(out[i].data(), in + i * stride, stride * sizeof(double));
  }
}

void write_container(const std::string& path, const json& header,
                     const std::vector<double>& payload) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw validation_error("cannot open for writing: " + path);
  std::string h = header.dump();
  uint64_t len = h.size();
  f.write(kContainerMagic, 8);
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!f) throw validation_error("short write: " + path);
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw validation_error("cannot open: " + path);
  char magic[8];
  uint64_t len = 0;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&len), 8);
  if (!f || std::memcmp(magic, kContainerMagic, 8) != 0)
    throw validation_error("bad container magic: " + path);
  Container c;
  c.header_json.resize(len);
  f.read(c.header_json.data(), static_cast<std::streamsize>(len));
  if (!f) throw validation_error("truncated header: " + path);
  std::streampos here = f.tellg();
  f.seekg(0, std::ios::end);
  std::streamoff bytes = f.tellg() - here;
  f.seekg(here);
  if (bytes % 8 != 0) throw validation_error("payload not float64-aligned: " + path);
  c.payload.resize(static_cast<size_t>(bytes) / 8);
  f.read(reinterpret_cast<char*>(c.payload.data()), bytes);
  if (!f) throw validation_error("truncated payload: " + path);
  return c;
}

namespace {

json field_header(const char* kind, const Lattice& lat, int bands, int channels) {
  return json{{"kind", kind},
              {"dims", lat.dims},
              {"n_bands", bands},
              {"n_channels", channels},
              {"dtype", "c128"}};
}

void check_dtype(const json& h, const std::string& path) {
  if (h.value("dtype", "") != "c128")
    throw validation_error("unsupported dtype in " + path);
}

}  // namespace

void write_field(const std::string& path, const LinkField& links) {
  std::vector<double> payload;
  payload.reserve(2 * links.u.size() * links.n_bands * links.n_bands);
  pack_cmats(links.u, payload);
  write_container(path, field_header("links", links.lattice, links.n_bands,
                                     links.lattice.ndim()),
                  payload);
}

void write_field(const std::string& path, const LoopField& loops) {
  std::vector<double> payload;
  payload.reserve(2 * loops.w.size() * loops.n_bands * loops.n_bands);
  pack_cmats(loops.w, payload);
  write_container(path, field_header("loops", loops.lattice, loops.n_bands, loops.n_channels),
                  payload);
}

LinkField read_link_field(const std::string& path) {
  Container c = read_container(path);
  json h = json::parse(c.header_json);
  if (h.value("kind", "") != "links") throw validation_error("not a link field: " + path);
  check_dtype(h, path);
  Lattice lat(h.at("dims").get<std::vector<int>>());
  int bands = h.at("n_bands").get<int>();
  LinkField out(lat, bands);
  size_t expect = out.u.size() * 2 * bands * bands;
  if (c.payload.size() != expect) throw validation_error("payload size mismatch: " + path);
  unpack_cmats(c.payload.data(), out.u.size(), bands, out.u);
  return out;
}

LoopField read_loop_field(const std::string& path) {
  Container c = read_container(path);
  json h = json::parse(c.header_json);
  if (h.value("kind", "") != "loops") throw validation_error("not a loop field: " + path);
  check_dtype(h, path);
  Lattice lat(h.at("dims").get<std::vector<int>>());
  int bands = h.at("n_bands").get<int>();
  int channels = h.at("n_channels").get<int>();
  LoopField out(lat, channels, bands);
  size_t expect = out.w.size() * 2 * bands * bands;
  if (c.payload.size() != expect) throw validation_error("payload size mismatch: " + path);
  unpack_cmats(c.payload.data(), out.w.size(), bands, out.w);
  return out;
}

}  // namespace gaugenet
