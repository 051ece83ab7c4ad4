#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rotatekv/kv_cache.hpp"
#include "rotatekv/tensor.hpp"

namespace rotatekv {

struct MassiveActivation {
    int64_t token;
    int64_t channel;
    float magnitude;
};

// Token indices whose KV rows bypass quantization. Token 0 is always a
// member; indices are strictly increasing.
struct SinkSet {
    int64_t layer = 0;
    std::vector<int64_t> tokens;
    std::vector<MassiveActivation> metadata;  // triggering activations

    bool contains(int64_t token) const;
};

// A token is a sink iff some channel magnitude exceeds both
// rel_threshold * median(|x|) over the whole tensor and abs_floor.
// block_output: [b, s, hidden]; rel_threshold must be > 1.
SinkSet detect_massive_activations(const Tensor& block_output, double rel_threshold = 50.0,
                                   double abs_floor = 0.0);

// Moves the sink tokens' full-precision K/V rows into the cache sidecar.
void route_sinks(LayerKVCache& cache, const SinkSet& sinks, const Tensor& k_rows,
                 const Tensor& v_rows);

// Text form "layer=L tokens=i,j,k", one line per set.
void save_sink_sets(const std::vector<SinkSet>& sets, const std::string& path);
// Detection metadata as CSV (layer,token,channel,magnitude).
void save_sink_metadata_csv(const std::vector<SinkSet>& sets, const std::string& path);

}  // namespace rotatekv
