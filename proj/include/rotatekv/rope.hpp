#pragma once

#include <cstdint>
#include <span>

#include "rotatekv/tensor.hpp"

namespace rotatekv {

// Rotary position embedding, LLaMA-family convention: half-split pairing
// (channel i pairs with i + d/2), theta_i = base^(-2i/d).
struct RopeConfig {
    int64_t head_dim = 0;
    double base = 10000.0;
};

// x: [b,h,s,d]; positions: absolute position per token, length s.
Tensor apply_rope(const Tensor& x, const RopeConfig& cfg, std::span<const int64_t> positions);
Tensor apply_rope_inverse(const Tensor& x, const RopeConfig& cfg, std::span<const int64_t> positions);

// Row variant: x is [..., h*d] with heads-major channels; RoPE applied per
// head slice. rows = x.numel()/(h*d) must equal positions.size().
Tensor apply_rope_rows(const Tensor& x, const RopeConfig& cfg, int64_t num_heads,
                       std::span<const int64_t> positions, bool inverse = false);

}  // namespace rotatekv
