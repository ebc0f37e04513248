#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace abc {

using Bytes = std::vector<uint8_t>;
using Digest = std::array<uint8_t, 32>;
using Address = std::array<uint8_t, 20>;
using Word = std::array<uint8_t, 32>;  // 32-byte big-endian storage word

inline Bytes to_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

std::string hex_encode(const uint8_t* data, size_t len);
Bytes hex_decode(const std::string& hex);  // throws std::invalid_argument

template <typename C>
std::string hex(const C& c) {
    return hex_encode(c.data(), c.size());
}

inline Digest zero_digest() { return Digest{}; }

template <size_t N>
std::array<uint8_t, N> to_fixed(const Bytes& b) {
    if (b.size() != N) throw std::invalid_argument("bad fixed-size length");
    std::array<uint8_t, N> out{};
    std::copy(b.begin(), b.end(), out.begin());
    return out;
}

// Big-endian integer helpers used by the canonical encoding.
void put_u32(Bytes& out, uint32_t v);
void put_u64(Bytes& out, uint64_t v);
uint64_t get_u64(const uint8_t* p);

}  // namespace abc
