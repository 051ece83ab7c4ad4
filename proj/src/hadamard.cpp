#include "rotatekv/hadamard.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace rotatekv {

namespace {

bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

int log2_exact(int64_t n) { return std::countr_zero(static_cast<uint64_t>(n)); }

}  // namespace

RotationPlan RotationPlan::make(int64_t head_dim, int64_t heads_per_group, int64_t num_heads) {
    RotationPlan p;
    p.head_dim = head_dim;
    p.heads_per_group = heads_per_group;
    p.num_heads = num_heads;
    p.matrix_dim = heads_per_group * head_dim;
    if (head_dim < 1 || heads_per_group < 1 || num_heads < 1)
        throw std::invalid_argument("rotation plan dimensions must be positive");
    if (num_heads % heads_per_group != 0)
        throw std::invalid_argument("heads_per_group must divide num_heads");
    if (!is_pow2(p.matrix_dim))
        throw std::invalid_argument("rotation matrix dimension must be a power of two");
    if (log2_exact(p.matrix_dim) > kMaxHadamardLog2)
        throw std::invalid_argument("rotation matrix dimension exceeds 2^13");
    return p;
}

Tensor walsh_hadamard(int k) {
    if (k < 0) throw std::invalid_argument("walsh_hadamard: k must be >= 0");
    if (k > kMaxHadamardLog2) throw std::invalid_argument("walsh_hadamard: dimension overflow");
    int64_t n = int64_t{1} << k;
    Tensor h({n, n});
    float scale = static_cast<float>(std::pow(2.0, -0.5 * k));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
            h.at2(i, j) = (std::popcount(static_cast<uint64_t>(i & j)) & 1) ? -scale : scale;
    return h;
}

void fwht_inplace(std::span<float> v) {
    size_t n = v.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fwht_inplace: length must be a power of two");
    for (size_t half = 1; half < n; half <<= 1) {
        for (size_t base = 0; base < n; base += 2 * half) {
            for (size_t i = base; i < base + half; ++i) {
                float a = v[i];
                float b = v[i + half];
                v[i] = a + b;
                v[i + half] = a - b;
            }
        }
    }
    // single normalization pass: 2^{-k/2}
    float scale = 1.0f / std::sqrt(static_cast<float>(n));
    for (float& x : v) x *= scale;
}

void rotate_row_inplace(std::span<float> row, const RotationPlan& plan) {
    int64_t n = plan.matrix_dim;
    if (static_cast<int64_t>(row.size()) != plan.num_heads * plan.head_dim)
        throw std::invalid_argument("rotate_row_inplace: row length mismatch");
    int64_t groups = plan.num_heads / plan.heads_per_group;
    for (int64_t g = 0; g < groups; ++g)
        fwht_inplace(row.subspan(static_cast<size_t>(g * n), static_cast<size_t>(n)));
}

Tensor rotate_rows(const Tensor& x, const RotationPlan& plan, bool /*inverse*/) {
    int64_t channels = plan.num_heads * plan.head_dim;
    if (x.ndim() < 1 || x.dim(x.ndim() - 1) != channels)
        throw std::invalid_argument("rotate_rows: trailing dimension must be h*d");
    Tensor out = x;
    int64_t rows = x.numel() / channels;
    for (int64_t r = 0; r < rows; ++r)
        rotate_row_inplace(std::span<float>(out.data() + r * channels, static_cast<size_t>(channels)), plan);
    return out;
}

Tensor rotate_grouped_heads(const Tensor& keys, const RotationPlan& plan, bool /*inverse*/) {
    if (keys.ndim() != 4)
        throw std::invalid_argument("rotate_grouped_heads: expected [b,h,s,d]");
    int64_t b = keys.dim(0), h = keys.dim(1), s = keys.dim(2), d = keys.dim(3);
    if (h != plan.num_heads || d != plan.head_dim)
        throw std::invalid_argument("rotate_grouped_heads: shape does not match plan");
    Tensor out = keys;
    int64_t groups = h / plan.heads_per_group;
    std::vector<float> buf(static_cast<size_t>(plan.matrix_dim));
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t si = 0; si < s; ++si) {
            for (int64_t g = 0; g < groups; ++g) {
                // gather the group's heads for this token into one vector
                for (int64_t gh = 0; gh < plan.heads_per_group; ++gh) {
                    int64_t head = g * plan.heads_per_group + gh;
                    for (int64_t di = 0; di < d; ++di)
                        buf[static_cast<size_t>(gh * d + di)] = out.at4(bi, head, si, di);
                }
                fwht_inplace(buf);
                for (int64_t gh = 0; gh < plan.heads_per_group; ++gh) {
                    int64_t head = g * plan.heads_per_group + gh;
                    for (int64_t di = 0; di < d; ++di)
                        out.at4(bi, head, si, di) = buf[static_cast<size_t>(gh * d + di)];
                }
            }
        }
    }
    return out;
}

int64_t rotation_flops(const RotationPlan& plan) {
    int64_t n = plan.matrix_dim;
    int64_t groups = plan.num_heads / plan.heads_per_group;
    return groups * n * log2_exact(n);
}

}  // namespace rotatekv
