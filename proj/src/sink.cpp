#include "rotatekv/sink.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace rotatekv {

bool SinkSet::contains(int64_t token) const {
    return std::binary_search(tokens.begin(), tokens.end(), token);
}

SinkSet detect_massive_activations(const Tensor& block_output, double rel_threshold,
                                   double abs_floor) {
    if (block_output.ndim() != 3)
        throw std::invalid_argument("detect_massive_activations: expected [b,s,hidden]");
    if (rel_threshold <= 1.0)
        throw std::invalid_argument("detect_massive_activations: rel_threshold must be > 1");
    int64_t b = block_output.dim(0), s = block_output.dim(1), hidden = block_output.dim(2);
    if (s < 1) throw std::invalid_argument("detect_massive_activations: empty sequence");

    // Deterministic median of |x| over the whole tensor via full sort.
    std::vector<float> mags(static_cast<size_t>(block_output.numel()));
    for (int64_t i = 0; i < block_output.numel(); ++i) mags[static_cast<size_t>(i)] = std::abs(block_output[i]);
    std::sort(mags.begin(), mags.end());
    double median = mags[mags.size() / 2];

    double threshold = rel_threshold * median;
    SinkSet set;
    for (int64_t t = 0; t < s; ++t) {
        bool hit = false;
        for (int64_t bi = 0; bi < b; ++bi) {
            for (int64_t c = 0; c < hidden; ++c) {
                float v = block_output[(bi * s + t) * hidden + c];
                if (std::abs(v) > threshold && std::abs(v) > abs_floor) {
                    set.metadata.push_back({t, c, v});
                    hit = true;
                }
            }
        }
        if (t == 0 || hit) set.tokens.push_back(t);
    }
    return set;
}

void route_sinks(LayerKVCache& cache, const SinkSet& sinks, const Tensor& k_rows,
                 const Tensor& v_rows) {
    if (k_rows.ndim() != 2 || v_rows.ndim() != 2 || !k_rows.same_shape(v_rows))
        throw std::invalid_argument("route_sinks: k_rows/v_rows must be matching [tokens, channels]");
    int64_t channels = k_rows.dim(1);
    if (channels != cache.channels())
        throw std::invalid_argument("route_sinks: channel count mismatch");
    for (int64_t t : sinks.tokens) {
        if (t < 0 || t >= cache.size() || t >= k_rows.dim(0))
            throw std::out_of_range("route_sinks: token index out of range");
        cache.promote_to_sink(t,
                              std::span<const float>(k_rows.data() + t * channels,
                                                     static_cast<size_t>(channels)),
                              std::span<const float>(v_rows.data() + t * channels,
                                                     static_cast<size_t>(channels)));
    }
}

void save_sink_sets(const std::vector<SinkSet>& sets, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    for (const auto& s : sets) {
        os << "layer=" << s.layer << " tokens=";
        for (size_t i = 0; i < s.tokens.size(); ++i) os << (i ? "," : "") << s.tokens[i];
        os << "\n";
    }
}

void save_sink_metadata_csv(const std::vector<SinkSet>& sets, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "layer,token,channel,magnitude\n";
    for (const auto& s : sets)
        for (const auto& m : s.metadata)
            os << s.layer << "," << m.token << "," << m.channel << "," << m.magnitude << "\n";
}

}  // namespace rotatekv
