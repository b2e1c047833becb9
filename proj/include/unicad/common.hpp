#ifndef UNICAD_COMMON_HPP
#define UNICAD_COMMON_HPP

#include <bit>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace unicad {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and read/written natively");

// Base error for everything the library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed files, truncated streams, corrupt records.
struct FormatError : Error {
    using Error::Error;
};

// Mathematically invalid arguments (non-positive variance, zero vectors, ...).
struct DomainError : Error {
    using Error::Error;
};

// Shape or dimension mismatches between containers that must agree.
struct DimensionError : Error {
    using Error::Error;
};

using Rng = std::mt19937;

inline Rng make_rng(std::uint64_t seed) {
    return Rng(static_cast<Rng::result_type>(seed));
}

}  // namespace unicad

#endif
