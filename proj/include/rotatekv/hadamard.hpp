#pragma once

#include <cstdint>
#include <span>

#include "rotatekv/tensor.hpp"

namespace rotatekv {

// Grouped-head Walsh-Hadamard rotation: one transform spans the concatenated
// channels of heads_per_group adjacent heads.
struct RotationPlan {
    int64_t head_dim = 0;         // d
    int64_t heads_per_group = 0;  // g
    int64_t num_heads = 0;        // h
    int64_t matrix_dim = 0;       // n = g*d, power of two

    static RotationPlan make(int64_t head_dim, int64_t heads_per_group, int64_t num_heads);
};

inline constexpr int kMaxHadamardLog2 = 13;

// Normalized Walsh-Hadamard matrix H_{2^k}; entries +-2^{-k/2}.
Tensor walsh_hadamard(int k);

// In-place fast Walsh-Hadamard transform; length must be a power of two.
// Equals multiplication by walsh_hadamard(log2 n); involutory.
void fwht_inplace(std::span<float> v);

// Applies the grouped FWHT to each token's (group of g heads, flattened to
// g*d channels). The transform is its own inverse; the flag only makes call
// sites read as forward/inverse pairs.
Tensor rotate_grouped_heads(const Tensor& keys_bhsd, const RotationPlan& plan, bool inverse);

// Same rotation on a [..., h*d] tensor whose trailing axis is heads-major
// concatenated channels (each row is one token).
Tensor rotate_rows(const Tensor& x, const RotationPlan& plan, bool inverse);
void rotate_row_inplace(std::span<float> row, const RotationPlan& plan);

// Per-token, per-layer FWHT butterfly count: (h/g) * (g*d) * log2(g*d).
int64_t rotation_flops(const RotationPlan& plan);

}  // namespace rotatekv
