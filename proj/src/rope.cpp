#include "rotatekv/rope.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace rotatekv {

namespace {

void check_cfg(const RopeConfig& cfg) {
    if (cfg.head_dim < 2 || cfg.head_dim % 2 != 0)
        throw std::invalid_argument("rope: head_dim must be even and >= 2");
    if (cfg.base <= 1.0) throw std::invalid_argument("rope: base must be > 1");
}

std::vector<double> make_thetas(const RopeConfig& cfg) {
    int64_t half = cfg.head_dim / 2;
    std::vector<double> thetas(static_cast<size_t>(half));
    for (int64_t i = 0; i < half; ++i)
        thetas[static_cast<size_t>(i)] =
            std::pow(cfg.base, -2.0 * static_cast<double>(i) / static_cast<double>(cfg.head_dim));
    return thetas;
}

void rope_head_inplace(float* head, int64_t d, const std::vector<double>& thetas, int64_t pos,
                       double dir) {
    int64_t half = d / 2;
    for (int64_t i = 0; i < half; ++i) {
        double angle = dir * static_cast<double>(pos) * thetas[static_cast<size_t>(i)];
        double c = std::cos(angle), s = std::sin(angle);
        double a = head[i], b = head[i + half];
        head[i] = static_cast<float>(a * c - b * s);
        head[i + half] = static_cast<float>(a * s + b * c);
    }
}

}  // namespace

static Tensor rope_bhsd(const Tensor& x, const RopeConfig& cfg, std::span<const int64_t> positions,
                        double dir) {
    check_cfg(cfg);
    if (x.ndim() != 4) throw std::invalid_argument("rope: expected [b,h,s,d]");
    int64_t b = x.dim(0), h = x.dim(1), s = x.dim(2), d = x.dim(3);
    if (d != cfg.head_dim) throw std::invalid_argument("rope: head_dim mismatch");
    if (static_cast<int64_t>(positions.size()) != s)
        throw std::invalid_argument("rope: need one position per token");
    auto thetas = make_thetas(cfg);
    Tensor out = x;
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t hi = 0; hi < h; ++hi)
            for (int64_t si = 0; si < s; ++si)
                rope_head_inplace(out.data() + ((bi * h + hi) * s + si) * d, d, thetas,
                                  positions[static_cast<size_t>(si)], dir);
    return out;
}

Tensor apply_rope(const Tensor& x, const RopeConfig& cfg, std::span<const int64_t> positions) {
    return rope_bhsd(x, cfg, positions, 1.0);
}

Tensor apply_rope_inverse(const Tensor& x, const RopeConfig& cfg,
                          std::span<const int64_t> positions) {
    return rope_bhsd(x, cfg, positions, -1.0);
}

Tensor apply_rope_rows(const Tensor& x, const RopeConfig& cfg, int64_t num_heads,
                       std::span<const int64_t> positions, bool inverse) {
    check_cfg(cfg);
    int64_t channels = num_heads * cfg.head_dim;
    if (x.ndim() < 1 || x.dim(x.ndim() - 1) != channels)
        throw std::invalid_argument("rope rows: trailing dimension must be h*d");
    int64_t rows = x.numel() / channels;
    if (static_cast<int64_t>(positions.size()) != rows)
        throw std::invalid_argument("rope rows: need one position per row");
    auto thetas = make_thetas(cfg);
    double dir = inverse ? -1.0 : 1.0;
    Tensor out = x;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t hi = 0; hi < num_heads; ++hi)
            rope_head_inplace(out.data() + r * channels + hi * cfg.head_dim, cfg.head_dim, thetas,
                              positions[static_cast<size_t>(r)], dir);
    return out;
}

}  // namespace rotatekv
