#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace encp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error taxonomy. Every failure surfaced by the library derives from Error so
// callers (the CLI in particular) can report it uniformly.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidParameter : Error {
    using Error::Error;
};
struct DimensionMismatch : Error {
    using Error::Error;
};
struct UnsupportedGroup : Error {
    using Error::Error;
};
struct DecompositionFailure : Error {
    using Error::Error;
};
struct TrainingError : Error {
    using Error::Error;
};
struct EmptyConditioningSet : Error {
    using Error::Error;
};
struct UnregisteredObservable : Error {
    using Error::Error;
};

inline void require_dims(bool ok, const std::string& what) {
    if (!ok) throw DimensionMismatch(what);
}

/// 64-bit FNV-1a. Stable across platforms, used for digests and stream tags.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Independent random stream derived from (seed, purpose). Streams with
/// different tags never share state, so e.g. data generation and parameter
/// initialisation stay decoupled when one of them changes.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view purpose) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ fnv1a64(purpose)));
}

std::string hex_digest(std::uint64_t h);

}  // namespace encp
