#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rotatekv/hadamard.hpp"
#include "rotatekv/quant.hpp"
#include "rotatekv/tensor.hpp"

namespace rotatekv {

// Calibrated per-layer channel permutation over the h*d channel space.
struct ReorderPlan {
    std::vector<std::vector<int32_t>> perm;      // perm[l][j] = source channel of slot j
    std::vector<std::vector<int32_t>> inverse;   // inverse[l][perm[l][j]] == j

    int64_t layers() const { return static_cast<int64_t>(perm.size()); }
    int64_t channels() const { return perm.empty() ? 0 : static_cast<int64_t>(perm[0].size()); }

    static ReorderPlan identity(int64_t layers, int64_t channels);

    void save(const std::string& path) const;
    static ReorderPlan load(const std::string& path);

    // FNV-1a over a layer's indices; printed by the calibrate subcommand.
    uint64_t layer_checksum(int64_t layer) const;
};

// Per-layer calibration over post-rotation Keys. Each input tensor is either
// [b,h,s,d] or [tokens, h*d]; channel sums accumulate sequentially in double
// and ties argsort by ascending channel index.
ReorderPlan calibrate_reorder(const std::vector<Tensor>& rotated_keys_per_layer);

// Gathers channels of the trailing axis by the layer's permutation (or
// scatters for the inverse). Roundtrip is bit-exact.
Tensor apply_reorder(const Tensor& x, const ReorderPlan& plan, int64_t layer, bool inverse);

// Per-channel smoothing factors for the Q.K^T-preserving rescale.
struct SmoothingPlan {
    std::vector<float> lambda;  // per channel, all > 0
    double alpha = 0.5;
};

// lambda_j = max|K_j|^alpha / max|Q_j|^(1-alpha), maxima floored at 1e-8.
// keys/queries: [b,h,s,d] or [tokens, h*d].
SmoothingPlan calibrate_smoothing(const Tensor& keys, const Tensor& queries, double alpha);

// Keys are scaled down by lambda (K * Lambda^-1); inverse scales back up.
Tensor apply_smoothing(const Tensor& x, const SmoothingPlan& plan, bool inverse);
// Query side of the identity: Q * Lambda.
Tensor apply_smoothing_queries(const Tensor& q, const SmoothingPlan& plan);

enum class Strategy {
    RotateOnly,
    SmoothOnly,
    ReorderOnly,
    RotateSmooth,
    SmoothRotate,
    RotateReorder,
    ReorderRotate,
};

Strategy parse_strategy(const std::string& name);  // throws on unknown name
std::string strategy_name(Strategy s);
const std::vector<Strategy>& all_strategies();

struct StrategyResult {
    Strategy strategy;
    int bits;
    double key_mse;
    double attn_mse;
};

// Applies the strategy's composition to the Keys, quantizes, undoes the
// transforms, and measures reconstruction and attention-output error against
// the untouched tensors. Inputs are [b,h,s,d].
StrategyResult strategy_ablation(const Tensor& keys, const Tensor& queries, const Tensor& values,
                                 Strategy strategy, const RotationPlan& rotation,
                                 const QuantConfig& quant, double smoothing_alpha = 0.5);

}  // namespace rotatekv
