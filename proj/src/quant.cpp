#include "rotatekv/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rotatekv {

namespace {

constexpr float kScaleFloor = 1e-8f;

// Eq. 6/9 rounding: half away from zero (std::round semantics).
double rhaz(double v) { return std::round(v); }

}  // namespace

void QuantConfig::validate() const {
    if (bits < 1 || bits > 8) throw std::invalid_argument("quant bits must be in [1,8]");
    if (group_size < 1) throw std::invalid_argument("quant group_size must be >= 1");
    if (clip_lo < 0.0 || clip_lo >= 0.5 || clip_hi < 0.0 || clip_hi >= 0.5)
        throw std::invalid_argument("clip ratios must be in [0, 0.5)");
}

std::vector<uint8_t> pack_codes(std::span<const uint8_t> codes, int bits) {
    std::vector<uint8_t> out((codes.size() * static_cast<size_t>(bits) + 7) / 8, 0);
    size_t bitpos = 0;
    for (uint8_t c : codes) {
        for (int b = 0; b < bits; ++b) {
            if (c & (1u << b)) out[bitpos >> 3] |= static_cast<uint8_t>(1u << (bitpos & 7));
            ++bitpos;
        }
    }
    return out;
}

std::vector<uint8_t> unpack_codes(std::span<const uint8_t> packed, int bits, int64_t count) {
    if (packed.size() * 8 < static_cast<size_t>(count) * static_cast<size_t>(bits))
        throw std::invalid_argument("unpack_codes: buffer too short");
    std::vector<uint8_t> out(static_cast<size_t>(count), 0);
    size_t bitpos = 0;
    for (int64_t i = 0; i < count; ++i) {
        uint8_t c = 0;
        for (int b = 0; b < bits; ++b) {
            if (packed[bitpos >> 3] & (1u << (bitpos & 7))) c |= static_cast<uint8_t>(1u << b);
            ++bitpos;
        }
        out[static_cast<size_t>(i)] = c;
    }
    return out;
}

QuantizedBlock quantize_group(std::span<const float> x, const QuantConfig& cfg) {
    cfg.validate();
    if (x.empty()) throw std::invalid_argument("quantize_group: empty input");
    if (static_cast<int64_t>(x.size()) > cfg.group_size)
        throw std::invalid_argument("quantize_group: input longer than group_size");

    float cmin, cmax;
    if (cfg.clip_lo > 0.0 || cfg.clip_hi > 0.0) {
        std::vector<float> sorted(x.begin(), x.end());
        std::sort(sorted.begin(), sorted.end());
        auto n = static_cast<double>(sorted.size() - 1);
        auto lo = static_cast<size_t>(std::llround(cfg.clip_lo * n));
        auto hi = static_cast<size_t>(std::llround((1.0 - cfg.clip_hi) * n));
        cmin = sorted[lo];
        cmax = sorted[hi];
    } else {
        auto [mn, mx] = std::minmax_element(x.begin(), x.end());
        cmin = *mn;
        cmax = *mx;
    }

    const auto qmax = static_cast<double>(cfg.qmax());
    float raw_scale = static_cast<float>((static_cast<double>(cmax) - cmin) / qmax);
    if (raw_scale < kScaleFloor) raw_scale = kScaleFloor;

    QuantizedBlock blk;
    // Store the smallest e4m3 value >= raw scale: an undershooting scale
    // widens codes past the clamp boundary and breaks the half-step
    // reconstruction bound at the extremes.
    blk.scale_e4m3 = e4m3_encode_ceil(raw_scale);
    const double s = blk.scale();
    double zero = rhaz(-static_cast<double>(cmin) / s);
    zero = std::clamp(zero, 0.0, qmax);
    blk.zero_point = static_cast<uint8_t>(zero);
    blk.count = static_cast<int64_t>(x.size());

    std::vector<uint8_t> codes(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double q = rhaz(static_cast<double>(x[i]) / s) + zero;
        q = std::clamp(q, 0.0, qmax);
        codes[i] = static_cast<uint8_t>(q);
    }
    blk.codes = pack_codes(codes, cfg.bits);
    return blk;
}

std::vector<float> dequantize_group(const QuantizedBlock& b, const QuantConfig& cfg) {
    cfg.validate();
    auto codes = unpack_codes(b.codes, cfg.bits, b.count);
    std::vector<float> out(codes.size());
    float s = b.scale();
    for (size_t i = 0; i < codes.size(); ++i)
        out[i] = s * (static_cast<float>(codes[i]) - static_cast<float>(b.zero_point));
    return out;
}

std::vector<QuantizedBlock> quantize_token(std::span<const float> row, const QuantConfig& cfg) {
    cfg.validate();
    std::vector<QuantizedBlock> blocks;
    blocks.reserve((row.size() + static_cast<size_t>(cfg.group_size) - 1) /
                   static_cast<size_t>(cfg.group_size));
    for (size_t off = 0; off < row.size(); off += static_cast<size_t>(cfg.group_size)) {
        size_t len = std::min(static_cast<size_t>(cfg.group_size), row.size() - off);
        blocks.push_back(quantize_group(row.subspan(off, len), cfg));
    }
    return blocks;
}

std::vector<float> dequantize_token(const std::vector<QuantizedBlock>& blocks,
                                    const QuantConfig& cfg) {
    std::vector<float> out;
    for (const auto& b : blocks) {
        auto part = dequantize_group(b, cfg);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

double average_bits(const QuantConfig& cfg, double sink_fraction) {
    cfg.validate();
    if (sink_fraction < 0.0 || sink_fraction > 1.0)
        throw std::invalid_argument("sink_fraction must be in [0, 1]");
    double meta = 16.0 / static_cast<double>(cfg.group_size);  // 8b scale + 8b zero per group
    return (1.0 - sink_fraction) * (static_cast<double>(cfg.bits) + meta) + sink_fraction * 16.0;
}

void serialize_block(const QuantizedBlock& b, std::vector<uint8_t>& out) {
    out.push_back(b.scale_e4m3);
    out.push_back(b.zero_point);
    out.insert(out.end(), b.codes.begin(), b.codes.end());
}

QuantizedBlock deserialize_block(std::span<const uint8_t> in, size_t& offset, int bits,
                                 int64_t count) {
    size_t nbytes = (static_cast<size_t>(count) * static_cast<size_t>(bits) + 7) / 8;
    if (offset + 2 + nbytes > in.size())
        throw std::runtime_error("deserialize_block: truncated input");
    QuantizedBlock b;
    b.scale_e4m3 = in[offset++];
    b.zero_point = in[offset++];
    b.codes.assign(in.begin() + static_cast<ptrdiff_t>(offset),
                   in.begin() + static_cast<ptrdiff_t>(offset + nbytes));
    b.count = count;
    offset += nbytes;
    return b;
}

}  // namespace rotatekv
