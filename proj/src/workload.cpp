#include "rotatekv/workload.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rotatekv/rng.hpp"

namespace rotatekv {

namespace {

// Outlier channels follow gain * kOutlierNorm * (kOutlierBias + N(0,1)):
// a consistent positive bias (the channel-magnitude consistency the rotation
// exploits) with kOutlierNorm chosen so E|value| = gain * E|N(0,1)|.
constexpr double kOutlierBias = 4.0;
constexpr double kOutlierNorm = 0.199470;  // E|N| / E|kOutlierBias + N|

// Lognormal spread of per-head outlier energy in distinct mode: heavy-tailed
// so that a single head typically dominates its neighborhood, which is the
// regime where grouped rotation balances quantization ranges.
constexpr double kHeadEnergySigma = 1.0;

enum Stream : uint64_t {
    kKeys = 1,
    kQueries = 2,
    kValues = 3,
    kChannelPick = 4,
    kBlockOutput = 5,
    kHeadEnergy = 6,
};

Tensor normal_bhsd(const WorkloadSpec& spec, uint64_t stream) {
    Tensor t({spec.b, spec.h, spec.s, spec.d});
    CounterRng rng(spec.seed ^ (stream * 0xD1B54A32D192ED03ULL));
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.normal(static_cast<uint64_t>(i)));
    return t;
}

// Distinct channels for one head, deterministic under (seed, head).
std::vector<int64_t> pick_channels(const WorkloadSpec& spec, int64_t head) {
    RngStream rng(spec.seed ^ (kChannelPick * 0xD1B54A32D192ED03ULL), static_cast<uint64_t>(head));
    std::vector<int64_t> chosen;
    while (static_cast<int64_t>(chosen.size()) < spec.outlier_channels_per_head) {
        auto c = static_cast<int64_t>(rng.bits() % static_cast<uint64_t>(spec.d));
        if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
    }
    return chosen;
}

}  // namespace

void WorkloadSpec::validate() const {
    if (b < 1 || h < 1 || s < 1 || d < 1 || d_model < 1)
        throw std::invalid_argument("workload: dimensions must be positive");
    if (outlier_channels_per_head < 0 || outlier_channels_per_head >= d)
        throw std::invalid_argument("workload: outlier channel count must be < d");
    for (const auto& m : massive_tokens) {
        if (m.token < 0 || m.token >= s || m.channel < 0 || m.channel >= d_model)
            throw std::invalid_argument("workload: massive activation injection out of range");
    }
}

KVWorkload gen_kv_workload(const WorkloadSpec& spec) {
    spec.validate();
    KVWorkload w;
    w.keys = normal_bhsd(spec, kKeys);
    w.queries = normal_bhsd(spec, kQueries);
    w.values = normal_bhsd(spec, kValues);

    if (spec.outlier_channels_per_head > 0 && spec.outlier_gain != 1.0) {
        std::vector<int64_t> shared = pick_channels(spec, /*head=*/-1);
        RngStream energy(spec.seed ^ (kHeadEnergy * 0xD1B54A32D192ED03ULL));
        for (int64_t hi = 0; hi < spec.h; ++hi) {
            std::vector<int64_t> channels = spec.per_head_distinct ? pick_channels(spec, hi) : shared;
            // Per-head energy imbalance is what grouped-head rotation
            // smooths; only draw it when heads are meant to differ. The
            // distinct mode uses pure multiplicative scaling (zero mean), the
            // shared mode a consistent positive bias that channel reordering
            // can exploit.
            double head_gain = spec.outlier_gain;
            if (spec.per_head_distinct)
                head_gain *= std::exp(kHeadEnergySigma * energy.normal());
            for (int64_t c : channels) {
                for (int64_t bi = 0; bi < spec.b; ++bi) {
                    for (int64_t si = 0; si < spec.s; ++si) {
                        float& v = w.keys.at4(bi, hi, si, c);
                        v = spec.per_head_distinct
                                ? static_cast<float>(head_gain * v)
                                : static_cast<float>(head_gain * kOutlierNorm * (kOutlierBias + v));
                    }
                }
            }
        }
    }
    return w;
}

Tensor gen_block_output_with_sinks(const WorkloadSpec& spec) {
    spec.validate();
    Tensor t({spec.b, spec.s, spec.d_model});
    CounterRng rng(spec.seed ^ (kBlockOutput * 0xD1B54A32D192ED03ULL));
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<float>(rng.normal(static_cast<uint64_t>(i)));
    for (const auto& m : spec.massive_tokens)
        for (int64_t bi = 0; bi < spec.b; ++bi)
            t[(bi * spec.s + m.token) * spec.d_model + m.channel] = m.magnitude;
    return t;
}

}  // namespace rotatekv
