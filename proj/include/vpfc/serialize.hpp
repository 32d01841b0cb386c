#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vpfc/layers.hpp"

namespace vpfc::nn {

// Flat parameter blob: magic "VPFC", format version u32, parameter count u32,
// then per parameter: name length u16 + UTF-8 name, rank u8, dims (u32 each),
// little-endian f64 values.

inline constexpr std::uint32_t kBlobVersion = 1;

struct NamedArray {
    std::string name;
    NdArray value;
};

void write_parameter_blob(std::ostream& os, const std::vector<const Parameter*>& params);
std::vector<NamedArray> read_parameter_blob(std::istream& is);

void save_parameter_blob(const std::string& path, const std::vector<const Parameter*>& params);
std::vector<NamedArray> load_parameter_blob(const std::string& path);

}  // namespace vpfc::nn
