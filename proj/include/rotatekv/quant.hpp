#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rotatekv/fp8.hpp"

namespace rotatekv {

struct QuantConfig {
    int bits = 2;             // n in {2,3,4}; any 1..8 accepted
    int64_t group_size = 128; // channels per quantization group
    double clip_lo = 0.0;     // fractional quantile clipping of the minimum
    double clip_hi = 0.0;     // fractional quantile clipping of the maximum

    int64_t qmax() const { return (int64_t{1} << bits) - 1; }
    void validate() const;
};

// One quantization group: n-bit codes packed LSB-first, e4m3 scale, u8 zero.
struct QuantizedBlock {
    std::vector<uint8_t> codes;  // packed
    int64_t count = 0;           // unpacked code count
    uint8_t scale_e4m3 = 0;
    uint8_t zero_point = 0;

    float scale() const { return e4m3_decode(scale_e4m3); }
};

// LSB-first bit packing, n bits per code.
std::vector<uint8_t> pack_codes(std::span<const uint8_t> codes, int bits);
std::vector<uint8_t> unpack_codes(std::span<const uint8_t> packed, int bits, int64_t count);

QuantizedBlock quantize_group(std::span<const float> x, const QuantConfig& cfg);
std::vector<float> dequantize_group(const QuantizedBlock& b, const QuantConfig& cfg);

// Splits a token's flattened channels into contiguous groups of group_size
// (last group may be short) and quantizes each independently.
std::vector<QuantizedBlock> quantize_token(std::span<const float> row, const QuantConfig& cfg);
std::vector<float> dequantize_token(const std::vector<QuantizedBlock>& blocks,
                                    const QuantConfig& cfg);

// Effective storage per cached element: (1-f)*(n + 16/group_size) + f*16,
// with f the fraction of tokens kept in full precision.
double average_bits(const QuantConfig& cfg, double sink_fraction);

// Block wire format: 1 byte e4m3 scale, 1 byte zero-point, then code bytes.
void serialize_block(const QuantizedBlock& b, std::vector<uint8_t>& out);
QuantizedBlock deserialize_block(std::span<const uint8_t> in, size_t& offset, int bits,
                                 int64_t count);

}  // namespace rotatekv
