#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "rotatekv/quant.hpp"
#include "rotatekv/tensor.hpp"

namespace rotatekv {

// Per-layer quantized KV storage. A token index lives either in the packed
// blocks or in the full-precision sink sidecar, never both.
class LayerKVCache {
public:
    LayerKVCache(QuantConfig cfg, int64_t channels) : cfg_(cfg), channels_(channels) {}

    const QuantConfig& config() const { return cfg_; }
    int64_t channels() const { return channels_; }
    int64_t size() const { return static_cast<int64_t>(token_is_sink_.size()); }

    // Appends the next token; rows are the flattened h*d key/value channels.
    void append(std::span<const float> k_row, std::span<const float> v_row, bool sink);

    bool is_sink(int64_t token) const;
    int64_t sink_count() const;
    std::vector<int64_t> sink_tokens() const;
    double sink_fraction() const;

    // Moves already-quantized tokens into the sidecar, replacing their codes
    // with the provided full-precision rows.
    void promote_to_sink(int64_t token, std::span<const float> k_row, std::span<const float> v_row);

    std::vector<float> key_row(int64_t token) const;    // dequantized or sidecar
    std::vector<float> value_row(int64_t token) const;
    Tensor keys() const;    // [tokens, channels]
    Tensor values() const;  // [tokens, channels]

    std::vector<uint8_t> serialize() const;
    static LayerKVCache deserialize(std::span<const uint8_t> bytes);

private:
    QuantConfig cfg_;
    int64_t channels_ = 0;
    std::vector<std::vector<QuantizedBlock>> key_blocks_;    // empty vector for sink tokens
    std::vector<std::vector<QuantizedBlock>> value_blocks_;
    std::map<int64_t, std::pair<std::vector<float>, std::vector<float>>> sink_sidecar_;
    std::vector<uint8_t> token_is_sink_;
};

}  // namespace rotatekv
