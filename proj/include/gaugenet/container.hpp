#pragma once

// Flat binary container: 8-byte magic, little-endian u64 header length, a
// JSON header, then a float64 payload. Field payloads are row-major
// interleaved re/im ("c128"). Exact layout is documented in README.md.

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "gaugenet/field.hpp"

namespace gaugenet {

inline constexpr char kContainerMagic[9] = "GNFLD001";

// Generic layer: header JSON plus a raw float64 payload.
void write_container(const std::string& path, const nlohmann::json& header,
                     const std::vector<double>& payload);
struct Container {
  std::string header_json;  // raw text; parse with nlohmann::json::parse
  std::vector<double> payload;
};
Container read_container(const std::string& path);

// Field containers. Links: [mu][site][row][col], loops: [channel][site][row][col],
// each element an interleaved (re, im) float64 pair.
void write_field(const std::string& path, const LinkField& links);
void write_field(const std::string& path, const LoopField& loops);
LinkField read_link_field(const std::string& path);
LoopField read_loop_field(const std::string& path);

// In-memory packing shared with the shard writer in the sampler.
void pack_cmats(const std::vector<CMat>& ms, std::vector<double>& out);
void unpack_cmats(const double* in, size_t count, int n, std::vector<CMat>& out);

}  // namespace gaugenet
