#pragma once

#include "dexp/core/error.hpp"
#include "dexp/core/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace dexp {

/**
 * DXT1 binary tensor container.
 *
 * Layout, all integers little-endian:
 *   bytes 0..3   magic "DXT1"
 *   byte  4      dtype (0 = float32, 1 = float64)
 *   byte  5      rank
 *   rank x u32   extents
 *   payload      row-major elements of the given dtype
 */
enum class DxtType : std::uint8_t
{
    f32 = 0,
    f64 = 1,
};

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes.begin(), bytes.end());
    os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is)
{
    std::array<unsigned char, sizeof(T)> bytes;
    if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T)))
        throw IoError("DXT1: truncated stream");
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

} // namespace detail

inline void write_dxt(std::ostream& os, const Tensor& t, DxtType type = DxtType::f64)
{
    if (t.rank() > 255)
        throw ShapeError("DXT1: rank above 255");
    os.write("DXT1", 4);
    detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(type));
    detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape())
    {
        if (e > 0xFFFFFFFFu)
            throw ShapeError("DXT1: extent does not fit in u32");
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    }
    for (double v : t.data())
    {
        if (type == DxtType::f32)
            detail::put_le<float>(os, static_cast<float>(v));
        else
            detail::put_le<double>(os, v);
    }
    if (!os)
        throw IoError("DXT1: write failed");
}

inline Tensor read_dxt(std::istream& is)
{
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "DXT1")
        throw IoError("DXT1: bad magic");
    const auto type = detail::get_le<std::uint8_t>(is);
    if (type > 1)
        throw IoError("DXT1: unknown dtype code " + std::to_string(type));
    const auto rank = detail::get_le<std::uint8_t>(is);
    if (rank == 0)
        throw IoError("DXT1: rank 0 is not supported");
    Shape shape(rank);
    for (auto& e : shape)
        e = detail::get_le<std::uint32_t>(is);
    std::vector<double> data(element_count(shape));
    for (auto& v : data)
    {
        if (type == 0)
            v = static_cast<double>(detail::get_le<float>(is));
        else
            v = detail::get_le<double>(is);
    }
    return Tensor(std::move(shape), std::move(data));
}

inline void save_dxt(const std::string& path, const Tensor& t, DxtType type = DxtType::f64)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path + " for writing");
    write_dxt(os, t, type);
}

inline Tensor load_dxt(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path);
    return read_dxt(is);
}

} // namespace dexp
