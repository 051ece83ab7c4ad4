#pragma once

#include <cstdint>
#include <vector>

#include "rotatekv/tensor.hpp"

namespace rotatekv {

struct MassiveSpike {
    int64_t token;
    int64_t channel;
    float magnitude;
};

// Synthetic KV distribution mirroring the qualitative structure of real Key
// caches: a few consistently large channels per head, optionally distinct
// across heads, over a standard-normal background.
struct WorkloadSpec {
    int64_t b = 1;
    int64_t h = 8;
    int64_t s = 160;
    int64_t d = 128;
    int64_t d_model = 1024;
    int64_t outlier_channels_per_head = 3;
    double outlier_gain = 20.0;
    bool per_head_distinct = false;
    std::vector<MassiveSpike> massive_tokens;
    uint64_t seed = 42;

    void validate() const;
};

struct KVWorkload {
    Tensor keys;     // [b,h,s,d]
    Tensor queries;  // [b,h,s,d]
    Tensor values;   // [b,h,s,d]
};

// Background ~ N(0,1). Shared-channel mode: outlier channels carry a
// consistent positive bias and inflated spread, normalized so their mean
// |value| is outlier_gain times the background's. With per_head_distinct,
// each head draws its own channel set, a pure multiplicative gain, and an
// energy multiplier, so outlier energy is uneven across heads.
KVWorkload gen_kv_workload(const WorkloadSpec& spec);

// Residual-stream style tensor [b,s,d_model]: N(0,1) background plus the
// spec's injected spikes.
Tensor gen_block_output_with_sinks(const WorkloadSpec& spec);

}  // namespace rotatekv
