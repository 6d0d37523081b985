#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace zenith {

// Error taxonomy, mapped to CLI exit codes: config_error -> 2, everything
// else that escapes -> 3. Usage errors are handled by the CLI parser itself.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct input_error : std::runtime_error {
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG. All sampling goes through these helpers so results do
// not depend on libstdc++ distribution internals.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline double rng_uniform01(Rng& rng) {
    // 53-bit mantissa construction, uniform in [0, 1).
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rng_uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * rng_uniform01(rng);
}

inline double rng_normal(Rng& rng) {
    // Box-Muller, spare discarded. Two draws per call keeps the stream
    // position independent of call history.
    constexpr double two_pi = 6.283185307179586476925286766559;
    double u1 = 1.0 - rng_uniform01(rng);  // (0, 1]
    double u2 = rng_uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

inline std::int64_t rng_index(Rng& rng, std::int64_t n) {
    // Rejection-free modulo is fine at desk scale; bias is < 2^-40 for n < 2^24.
    return static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n));
}

// ---------------------------------------------------------------------------
// Number formatting. Shortest round-trip form via to_chars so identical
// values always print identical bytes.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_int(std::int64_t v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// FNV-1a 64-bit, used for artifact checksums in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf, 16);
}

}  // namespace zenith
