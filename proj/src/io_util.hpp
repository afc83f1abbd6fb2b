#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace hmch::detail {

inline void write_le_doubles(std::ostream& os, const double* v, std::size_t n)
{
    std::vector<unsigned char> buf(n * 8);
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(v[k]);
        for (int b = 0; b < 8; ++b)
            buf[8 * k + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline void write_le_doubles(std::ostream& os, const std::vector<double>& v)
{
    write_le_doubles(os, v.data(), v.size());
}

/// Returns false on a short read.
inline bool read_le_doubles(std::istream& is, double* out, std::size_t n)
{
    std::vector<unsigned char> buf(n * 8);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size())
        return false;
    for (std::size_t k = 0; k < n; ++k) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(buf[8 * k + b]) << (8 * b);
        out[k] = std::bit_cast<double>(bits);
    }
    return true;
}

/// Shortest round-trip-safe text: 17 significant digits.
inline std::string format_double(double v)
{
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

} // namespace hmch::detail
