#pragma once

#include <cstdint>

namespace rotatekv {

// OCP e4m3fn: 1 sign, 4 exponent (bias 7), 3 mantissa bits. No infinities;
// 0x7f/0xff are NaN; largest finite magnitude is 448.

float e4m3_decode(uint8_t code);

// Round-to-nearest-even encoding. Saturates to +-448, preserves sign of zero.
uint8_t e4m3_encode(float x);

// Smallest e4m3 value >= x (x > 0 expected). Used for quantization scales so
// the stored scale never undershoots the computed range.
uint8_t e4m3_encode_ceil(float x);

}  // namespace rotatekv
