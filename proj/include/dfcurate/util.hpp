#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dfcurate {

// 64-bit FNV-1a; stable across platforms, used for provenance hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

std::uint64_t splitmix64(std::uint64_t x);

// Namespaced child seed: every subsystem draws from derive_seed(root, "<name>").
std::uint64_t derive_seed(std::uint64_t root, std::string_view ns);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// floor(fraction * n) with slack for decimal fractions such as 0.3 that are
// not exactly representable (0.3 * 10 must give 3, not 2).
std::size_t floor_count(double fraction, std::size_t n);

}  // namespace dfcurate
