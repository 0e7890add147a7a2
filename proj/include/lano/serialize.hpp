#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "lano/error.hpp"
#include "lano/tensor.hpp"

// Tensor file format, little-endian throughout:
//   bytes 0..7   magic "LANOTNSR"
//   byte  8      version (1)
//   byte  9      dtype: 1 = f32, 2 = f64
//   bytes 10..17 rank (u64)
//   then rank x u64 extents
//   then raw IEEE-754 values, row-major
// Checkpoints and dataset files embed records in exactly this layout.

namespace lano {

inline constexpr std::array<char, 8> kTensorMagic = {'L', 'A', 'N', 'O', 'T', 'N', 'S', 'R'};
inline constexpr std::uint8_t kTensorVersion = 1;

enum class Dtype : std::uint8_t { f32 = 1, f64 = 2 };

template <typename T>
struct dtype_of;
template <>
struct dtype_of<float> {
    static constexpr Dtype value = Dtype::f32;
};
template <>
struct dtype_of<double> {
    static constexpr Dtype value = Dtype::f64;
};

inline const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

inline Dtype dtype_from_name(const std::string& s) {
    if (s == "f32") return Dtype::f32;
    if (s == "f64") return Dtype::f64;
    throw ConfigError("unknown dtype '" + s + "' (expected f32 or f64)");
}

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
    std::array<unsigned char, 8> b;
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b.data()), 8);
}

inline std::uint64_t read_u64(std::istream& is, const char* ctx) {
    std::array<unsigned char, 8> b;
    is.read(reinterpret_cast<char*>(b.data()), 8);
    if (!is) throw IoError(std::string("truncated tensor record while reading ") + ctx);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

// Raw value I/O assumes a little-endian host; static_assert guards the port.
static_assert(std::endian::native == std::endian::little,
              "tensor serialization assumes a little-endian host");

}  // namespace detail

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write(kTensorMagic.data(), kTensorMagic.size());
    const std::uint8_t version = kTensorVersion;
    const std::uint8_t dtype = static_cast<std::uint8_t>(dtype_of<T>::value);
    os.write(reinterpret_cast<const char*>(&version), 1);
    os.write(reinterpret_cast<const char*>(&dtype), 1);
    detail::write_u64(os, t.rank());
    for (std::size_t i = 0; i < t.rank(); ++i) detail::write_u64(os, t.dim(i));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!os) throw IoError("failed writing tensor record");
}

/// Reads a tensor record of any stored dtype and casts to T.
template <typename T>
Tensor<T> read_tensor(std::istream& is, const std::string& ctx = "tensor") {
    std::array<char, 8> magic;
    is.read(magic.data(), magic.size());
    if (!is || magic != kTensorMagic)
        throw IoError("bad tensor magic in " + ctx);
    std::uint8_t version = 0, dtype = 0;
    is.read(reinterpret_cast<char*>(&version), 1);
    is.read(reinterpret_cast<char*>(&dtype), 1);
    if (!is) throw IoError("truncated tensor header in " + ctx);
    if (version != kTensorVersion)
        throw IoError("unsupported tensor version " + std::to_string(version) + " in " + ctx);
    if (dtype != static_cast<std::uint8_t>(Dtype::f32) &&
        dtype != static_cast<std::uint8_t>(Dtype::f64))
        throw IoError("unknown dtype byte " + std::to_string(dtype) + " in " + ctx);
    const std::uint64_t rank = detail::read_u64(is, ctx.c_str());
    if (rank > 8) throw IoError("implausible tensor rank " + std::to_string(rank) + " in " + ctx);
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
        shape[i] = detail::read_u64(is, ctx.c_str());
        if (shape[i] == 0) throw IoError("zero extent in tensor record in " + ctx);
        numel *= shape[i];
    }
    auto read_values = [&](auto tag) {
        using U = decltype(tag);
        std::vector<U> buf(numel);
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(numel * sizeof(U)));
        if (!is)
            throw IoError("truncated tensor data in " + ctx + " (expected " +
                          std::to_string(numel) + " values)");
        return Tensor<U>(shape, std::move(buf));
    };
    if (dtype == static_cast<std::uint8_t>(Dtype::f32))
        return read_values(float{}).template cast<T>();
    return read_values(double{}).template cast<T>();
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    Tensor<T> t = read_tensor<T>(is, path);
    // Catch trailing garbage: a tensor file holds exactly one record.
    is.peek();
    if (!is.eof()) throw IoError("trailing bytes after tensor record in " + path);
    return t;
}

/// Dtype byte actually stored in a tensor file, without loading the data.
inline Dtype peek_dtype(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    std::array<char, 10> head;
    is.read(head.data(), head.size());
    if (!is) throw IoError("truncated tensor header in " + path);
    return static_cast<Dtype>(static_cast<std::uint8_t>(head[9]));
}

}  // namespace lano
