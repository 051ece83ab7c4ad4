#include "rotatekv/reorder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rotatekv/attention.hpp"

namespace rotatekv {

namespace {

constexpr double kMaxFloor = 1e-8;

// Flattens [b,h,s,d] to token rows; passes [tokens, C] through.
Tensor as_rows(const Tensor& x) {
    if (x.ndim() == 4) return bhsd_to_rows(x);
    if (x.ndim() == 2) return x;
    throw std::invalid_argument("expected [b,h,s,d] or [tokens, channels]");
}

std::vector<int32_t> invert_perm(const std::vector<int32_t>& p) {
    std::vector<int32_t> inv(p.size());
    for (size_t i = 0; i < p.size(); ++i) inv[static_cast<size_t>(p[i])] = static_cast<int32_t>(i);
    return inv;
}

}  // namespace

ReorderPlan ReorderPlan::identity(int64_t layers, int64_t channels) {
    ReorderPlan plan;
    plan.perm.resize(static_cast<size_t>(layers));
    plan.inverse.resize(static_cast<size_t>(layers));
    for (auto& p : plan.perm) {
        p.resize(static_cast<size_t>(channels));
        std::iota(p.begin(), p.end(), 0);
    }
    plan.inverse = plan.perm;
    return plan;
}

void ReorderPlan::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "layers=" << layers() << " channels=" << channels() << "\n";
    for (const auto& p : perm) {
        for (size_t i = 0; i < p.size(); ++i) os << (i ? "," : "") << p[i];
        os << "\n";
    }
}

ReorderPlan ReorderPlan::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::string header;
    std::getline(is, header);
    int64_t layers = 0, channels = 0;
    if (std::sscanf(header.c_str(), "layers=%ld channels=%ld", &layers, &channels) != 2)
        throw std::runtime_error("reorder plan: bad header line");
    ReorderPlan plan;
    for (int64_t l = 0; l < layers; ++l) {
        std::string line;
        if (!std::getline(is, line)) throw std::runtime_error("reorder plan: missing layer line");
        std::vector<int32_t> p;
        p.reserve(static_cast<size_t>(channels));
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) p.push_back(static_cast<int32_t>(std::stol(tok)));
        if (static_cast<int64_t>(p.size()) != channels)
            throw std::runtime_error("reorder plan: wrong channel count in layer line");
        plan.inverse.push_back(invert_perm(p));
        plan.perm.push_back(std::move(p));
    }
    return plan;
}

uint64_t ReorderPlan::layer_checksum(int64_t layer) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (int32_t v : perm[static_cast<size_t>(layer)]) {
        for (int i = 0; i < 4; ++i) {
            h ^= static_cast<uint64_t>((static_cast<uint32_t>(v) >> (8 * i)) & 0xff);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

ReorderPlan calibrate_reorder(const std::vector<Tensor>& rotated_keys_per_layer) {
    if (rotated_keys_per_layer.empty())
        throw std::invalid_argument("calibrate_reorder: empty calibration set");
    ReorderPlan plan;
    for (const auto& layer_keys : rotated_keys_per_layer) {
        Tensor rows = as_rows(layer_keys);
        int64_t n = rows.dim(0), c = rows.dim(1);
        std::vector<double> sums(static_cast<size_t>(c), 0.0);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < c; ++j) sums[static_cast<size_t>(j)] += rows.at2(i, j);
        std::vector<int32_t> p(static_cast<size_t>(c));
        std::iota(p.begin(), p.end(), 0);
        std::stable_sort(p.begin(), p.end(), [&](int32_t a, int32_t b) {
            return sums[static_cast<size_t>(a)] < sums[static_cast<size_t>(b)];
        });
        plan.inverse.push_back(invert_perm(p));
        plan.perm.push_back(std::move(p));
    }
    return plan;
}

Tensor apply_reorder(const Tensor& x, const ReorderPlan& plan, int64_t layer, bool inverse) {
    if (layer < 0 || layer >= plan.layers())
        throw std::invalid_argument("apply_reorder: layer out of range");
    const auto& p = inverse ? plan.inverse[static_cast<size_t>(layer)]
                            : plan.perm[static_cast<size_t>(layer)];
    int64_t c = static_cast<int64_t>(p.size());
    if (x.ndim() < 1 || x.dim(x.ndim() - 1) != c)
        throw std::invalid_argument("apply_reorder: trailing dimension mismatch");
    Tensor out = x;
    int64_t rows = x.numel() / c;
    for (int64_t r = 0; r < rows; ++r) {
        const float* src = x.data() + r * c;
        float* dst = out.data() + r * c;
        for (int64_t j = 0; j < c; ++j) dst[j] = src[p[static_cast<size_t>(j)]];
    }
    return out;
}

SmoothingPlan calibrate_smoothing(const Tensor& keys, const Tensor& queries, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("calibrate_smoothing: alpha must be in [0,1]");
    Tensor krows = as_rows(keys);
    Tensor qrows = as_rows(queries);
    if (krows.dim(1) != qrows.dim(1))
        throw std::invalid_argument("calibrate_smoothing: channel count mismatch");
    int64_t c = krows.dim(1);
    SmoothingPlan plan;
    plan.alpha = alpha;
    plan.lambda.resize(static_cast<size_t>(c));
    for (int64_t j = 0; j < c; ++j) {
        double kmax = kMaxFloor, qmax = kMaxFloor;
        for (int64_t i = 0; i < krows.dim(0); ++i)
            kmax = std::max(kmax, std::abs(static_cast<double>(krows.at2(i, j))));
        for (int64_t i = 0; i < qrows.dim(0); ++i)
            qmax = std::max(qmax, std::abs(static_cast<double>(qrows.at2(i, j))));
        plan.lambda[static_cast<size_t>(j)] =
            static_cast<float>(std::pow(kmax, alpha) / std::pow(qmax, 1.0 - alpha));
    }
    return plan;
}

Tensor apply_smoothing(const Tensor& x, const SmoothingPlan& plan, bool inverse) {
    int64_t c = static_cast<int64_t>(plan.lambda.size());
    if (x.ndim() < 1 || x.dim(x.ndim() - 1) != c)
        throw std::invalid_argument("apply_smoothing: trailing dimension mismatch");
    Tensor out = x;
    int64_t rows = x.numel() / c;
    for (int64_t r = 0; r < rows; ++r) {
        float* dst = out.data() + r * c;
        for (int64_t j = 0; j < c; ++j) {
            float l = plan.lambda[static_cast<size_t>(j)];
            dst[j] = inverse ? dst[j] * l : dst[j] / l;
        }
    }
    return out;
}

Tensor apply_smoothing_queries(const Tensor& q, const SmoothingPlan& plan) {
    return apply_smoothing(q, plan, /*inverse=*/true);  // Q * Lambda
}

Strategy parse_strategy(const std::string& name) {
    for (Strategy s : all_strategies())
        if (strategy_name(s) == name) return s;
    throw std::invalid_argument("unknown strategy: " + name);
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::RotateOnly: return "rotate-only";
        case Strategy::SmoothOnly: return "smooth-only";
        case Strategy::ReorderOnly: return "reorder-only";
        case Strategy::RotateSmooth: return "rotate+smooth";
        case Strategy::SmoothRotate: return "smooth+rotate";
        case Strategy::RotateReorder: return "rotate+reorder";
        case Strategy::ReorderRotate: return "reorder+rotate";
    }
    throw std::invalid_argument("unknown strategy enum");
}

const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> v = {
        Strategy::RotateOnly,   Strategy::SmoothOnly,   Strategy::ReorderOnly,
        Strategy::RotateSmooth, Strategy::SmoothRotate, Strategy::RotateReorder,
        Strategy::ReorderRotate};
    return v;
}

StrategyResult strategy_ablation(const Tensor& keys, const Tensor& queries, const Tensor& values,
                                 Strategy strategy, const RotationPlan& rotation,
                                 const QuantConfig& quant, double smoothing_alpha) {
    int64_t b = keys.dim(0), h = keys.dim(1), s = keys.dim(2), d = keys.dim(3);
    Tensor krows = bhsd_to_rows(keys);
    Tensor qrows = bhsd_to_rows(queries);

    // The composition is tracked as a list of invertible steps so the undo
    // runs in exact reverse order.
    enum class Step { Rotate, Smooth, Reorder };
    std::vector<Step> steps;
    switch (strategy) {
        case Strategy::RotateOnly: steps = {Step::Rotate}; break;
        case Strategy::SmoothOnly: steps = {Step::Smooth}; break;
        case Strategy::ReorderOnly: steps = {Step::Reorder}; break;
        case Strategy::RotateSmooth: steps = {Step::Rotate, Step::Smooth}; break;
        case Strategy::SmoothRotate: steps = {Step::Smooth, Step::Rotate}; break;
        case Strategy::RotateReorder: steps = {Step::Rotate, Step::Reorder}; break;
        case Strategy::ReorderRotate: steps = {Step::Reorder, Step::Rotate}; break;
    }

    Tensor kt = krows;
    Tensor qt = qrows;  // carried along so smoothing calibration sees the same basis
    SmoothingPlan smooth;
    ReorderPlan reorder;
    for (Step st : steps) {
        switch (st) {
            case Step::Rotate:
                kt = rotate_rows(kt, rotation, false);
                qt = rotate_rows(qt, rotation, false);
                break;
            case Step::Smooth:
                smooth = calibrate_smoothing(kt, qt, smoothing_alpha);
                kt = apply_smoothing(kt, smooth, false);
                break;
            case Step::Reorder:
                reorder = calibrate_reorder({kt});
                kt = apply_reorder(kt, reorder, 0, false);
                break;
        }
    }

    // Per-token quantization of the transformed Keys.
    Tensor recon = kt;
    for (int64_t r = 0; r < kt.dim(0); ++r) {
        std::span<const float> row(kt.data() + r * kt.dim(1), static_cast<size_t>(kt.dim(1)));
        auto deq = dequantize_token(quantize_token(row, quant), quant);
        std::copy(deq.begin(), deq.end(), recon.data() + r * kt.dim(1));
    }

    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        switch (*it) {
            case Step::Rotate: recon = rotate_rows(recon, rotation, true); break;
            case Step::Smooth: recon = apply_smoothing(recon, smooth, true); break;
            case Step::Reorder: recon = apply_reorder(recon, reorder, 0, true); break;
        }
    }
    Tensor khat = rows_to_bhsd(recon, b, h, s, d);
    StrategyResult res;
    res.strategy = strategy;
    res.bits = quant.bits;
    res.key_mse = mse(khat, keys);
    Tensor attn_ref = reference_attention(queries, keys, values, /*causal=*/false);
    Tensor attn_q = reference_attention(queries, khat, values, /*causal=*/false);
    res.attn_mse = mse(attn_q, attn_ref);
    return res;
}

}  // namespace rotatekv
