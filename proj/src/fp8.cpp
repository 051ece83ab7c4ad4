#include "rotatekv/fp8.hpp"

#include <array>
#include <cmath>

namespace rotatekv {

namespace {

// Finite positive codes are 0x00..0x7e and decode to monotonically
// increasing values, which makes encoding a binary search.
constexpr uint8_t kMaxFiniteCode = 0x7e;

std::array<float, 128> build_positive_table() {
    std::array<float, 128> t{};
    for (int code = 0; code <= kMaxFiniteCode; ++code) {
        int exp = (code >> 3) & 0xf;
        int man = code & 0x7;
        if (exp == 0) {
            t[static_cast<size_t>(code)] = std::ldexp(static_cast<float>(man), -9);  // subnormal: m/8 * 2^-6
        } else {
            t[static_cast<size_t>(code)] = std::ldexp(1.0f + static_cast<float>(man) / 8.0f, exp - 7);
        }
    }
    t[0x7f] = std::nanf("");
    return t;
}

const std::array<float, 128>& positive_table() {
    static const std::array<float, 128> t = build_positive_table();
    return t;
}

uint8_t encode_magnitude_rne(float a) {
    const auto& tab = positive_table();
    if (a >= tab[kMaxFiniteCode]) return kMaxFiniteCode;
    // lo = largest code with value <= a
    int lo = 0, hi = kMaxFiniteCode;
    while (lo < hi) {
        int mid = (lo + hi + 1) / 2;
        if (tab[static_cast<size_t>(mid)] <= a) lo = mid; else hi = mid - 1;
    }
    if (lo == kMaxFiniteCode) return kMaxFiniteCode;
    float below = tab[static_cast<size_t>(lo)];
    float above = tab[static_cast<size_t>(lo + 1)];
    float dlo = a - below;
    float dhi = above - a;
    if (dlo < dhi) return static_cast<uint8_t>(lo);
    if (dhi < dlo) return static_cast<uint8_t>(lo + 1);
    // tie: pick the code with even mantissa LSB
    return (lo % 2 == 0) ? static_cast<uint8_t>(lo) : static_cast<uint8_t>(lo + 1);
}

}  // namespace

float e4m3_decode(uint8_t code) {
    float mag = positive_table()[code & 0x7f];
    return (code & 0x80) ? -mag : mag;
}

uint8_t e4m3_encode(float x) {
    if (std::isnan(x)) return 0x7f;
    uint8_t sign = std::signbit(x) ? 0x80 : 0x00;
    float a = std::abs(x);
    return static_cast<uint8_t>(sign | encode_magnitude_rne(a));
}

uint8_t e4m3_encode_ceil(float x) {
    const auto& tab = positive_table();
    float a = std::abs(x);
    if (a >= tab[kMaxFiniteCode]) return kMaxFiniteCode;
    int code = encode_magnitude_rne(a);
    if (tab[static_cast<size_t>(code)] < a) ++code;
    return static_cast<uint8_t>(code);
}

}  // namespace rotatekv
