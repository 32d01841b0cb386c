#include "vpfc/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "vpfc/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "parameter blob IO assumes a little-endian host");

namespace vpfc::nn {

namespace {

constexpr char kMagic[4] = {'V', 'P', 'F', 'C'};

template <typename T>
void write_raw(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("parameter blob truncated");
    return v;
}

}  // namespace

void write_parameter_blob(std::ostream& os, const std::vector<const Parameter*>& params) {
    os.write(kMagic, 4);
    write_raw<std::uint32_t>(os, kBlobVersion);
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
        if (p->name.size() > 0xffff) throw DataError("parameter name too long: " + p->name);
        write_raw<std::uint16_t>(os, static_cast<std::uint16_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(p->value.rank()));
        for (Index i = 0; i < p->value.rank(); ++i)
            write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(p->value.dim(i)));
        os.write(reinterpret_cast<const char*>(p->value.array().data()),
                 static_cast<std::streamsize>(sizeof(double)) * p->value.numel());
    }
    if (!os) throw DataError("failed writing parameter blob");
}

std::vector<NamedArray> read_parameter_blob(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a VPFC parameter blob");
    const auto version = read_raw<std::uint32_t>(is);
    if (version != kBlobVersion)
        throw DataError("unsupported blob version " + std::to_string(version));
    const auto count = read_raw<std::uint32_t>(is);

    std::vector<NamedArray> out;
    out.reserve(count);
    for (std::uint32_t n = 0; n < count; ++n) {
        const auto name_len = read_raw<std::uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = read_raw<std::uint8_t>(is);
        std::vector<Index> shape(rank);
        for (auto& d : shape) d = static_cast<Index>(read_raw<std::uint32_t>(is));
        NdArray value(shape);
        is.read(reinterpret_cast<char*>(value.array().data()),
                static_cast<std::streamsize>(sizeof(double)) * value.numel());
        if (!is) throw DataError("parameter blob truncated in " + name);
        out.push_back({std::move(name), std::move(value)});
    }
    return out;
}

void save_parameter_blob(const std::string& path, const std::vector<const Parameter*>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for write: " + path);
    write_parameter_blob(os, params);
}

std::vector<NamedArray> load_parameter_blob(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    return read_parameter_blob(is);
}

}  // namespace vpfc::nn
