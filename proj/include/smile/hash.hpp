#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace smile {

// 64-bit FNV-1a, optionally chained through `basis`. Stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent substream seed from (seed, stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ (stream * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
}

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
/// Throws InvalidArgument on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace smile
