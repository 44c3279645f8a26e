#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace deepera {

// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

// 64-bit FNV-1a. Used for n-gram feature hashing and index checksums.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : data) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::uint64_t fnv1a64(std::span<const std::byte> data, std::uint64_t h = kFnvOffset);

}  // namespace deepera
