#include "rotatekv/kv_cache.hpp"

#include <cstring>
#include <stdexcept>

namespace rotatekv {

void LayerKVCache::append(std::span<const float> k_row, std::span<const float> v_row, bool sink) {
    if (static_cast<int64_t>(k_row.size()) != channels_ ||
        static_cast<int64_t>(v_row.size()) != channels_)
        throw std::invalid_argument("cache append: row length must equal channel count");
    if (sink) {
        sink_sidecar_[size()] = {std::vector<float>(k_row.begin(), k_row.end()),
                                 std::vector<float>(v_row.begin(), v_row.end())};
        key_blocks_.emplace_back();
        value_blocks_.emplace_back();
    } else {
        key_blocks_.push_back(quantize_token(k_row, cfg_));
        value_blocks_.push_back(quantize_token(v_row, cfg_));
    }
    token_is_sink_.push_back(sink ? 1 : 0);
}

bool LayerKVCache::is_sink(int64_t token) const {
    if (token < 0 || token >= size()) throw std::out_of_range("cache: token index out of range");
    return token_is_sink_[static_cast<size_t>(token)] != 0;
}

int64_t LayerKVCache::sink_count() const { return static_cast<int64_t>(sink_sidecar_.size()); }

std::vector<int64_t> LayerKVCache::sink_tokens() const {
    std::vector<int64_t> out;
    out.reserve(sink_sidecar_.size());
    for (const auto& [t, _] : sink_sidecar_) out.push_back(t);
    return out;
}

double LayerKVCache::sink_fraction() const {
    return size() == 0 ? 0.0
                       : static_cast<double>(sink_count()) / static_cast<double>(size());
}

void LayerKVCache::promote_to_sink(int64_t token, std::span<const float> k_row,
                                   std::span<const float> v_row) {
    if (token < 0 || token >= size()) throw std::out_of_range("cache: token index out of range");
    if (static_cast<int64_t>(k_row.size()) != channels_ ||
        static_cast<int64_t>(v_row.size()) != channels_)
        throw std::invalid_argument("cache promote: row length must equal channel count");
    if (is_sink(token)) return;
    key_blocks_[static_cast<size_t>(token)].clear();
    value_blocks_[static_cast<size_t>(token)].clear();
    sink_sidecar_[token] = {std::vector<float>(k_row.begin(), k_row.end()),
                            std::vector<float>(v_row.begin(), v_row.end())};
    token_is_sink_[static_cast<size_t>(token)] = 1;
}

std::vector<float> LayerKVCache::key_row(int64_t token) const {
    if (is_sink(token)) return sink_sidecar_.at(token).first;
    return dequantize_token(key_blocks_[static_cast<size_t>(token)], cfg_);
}

std::vector<float> LayerKVCache::value_row(int64_t token) const {
    if (is_sink(token)) return sink_sidecar_.at(token).second;
    return dequantize_token(value_blocks_[static_cast<size_t>(token)], cfg_);
}

Tensor LayerKVCache::keys() const {
    if (size() == 0) throw std::runtime_error("cache: empty");
    Tensor out({size(), channels_});
    for (int64_t t = 0; t < size(); ++t) {
        auto row = key_row(t);
        std::memcpy(out.data() + t * channels_, row.data(), sizeof(float) * row.size());
    }
    return out;
}

Tensor LayerKVCache::values() const {
    if (size() == 0) throw std::runtime_error("cache: empty");
    Tensor out({size(), channels_});
    for (int64_t t = 0; t < size(); ++t) {
        auto row = value_row(t);
        std::memcpy(out.data() + t * channels_, row.data(), sizeof(float) * row.size());
    }
    return out;
}

namespace {

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64(std::span<const uint8_t> in, size_t& off) {
    if (off + 8 > in.size()) throw std::runtime_error("cache deserialize: truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(in[off + static_cast<size_t>(i)]) << (8 * i);
    off += 8;
    return v;
}

void put_f32(std::vector<uint8_t>& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
}

float get_f32(std::span<const uint8_t> in, size_t& off) {
    if (off + 4 > in.size()) throw std::runtime_error("cache deserialize: truncated");
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(in[off + static_cast<size_t>(i)]) << (8 * i);
    off += 4;
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

std::vector<uint8_t> LayerKVCache::serialize() const {
    std::vector<uint8_t> out;
    out.push_back(static_cast<uint8_t>(cfg_.bits));
    put_u64(out, static_cast<uint64_t>(cfg_.group_size));
    put_u64(out, static_cast<uint64_t>(channels_));
    put_u64(out, static_cast<uint64_t>(size()));
    for (int64_t t = 0; t < size(); ++t) {
        bool sink = is_sink(t);
        out.push_back(sink ? 1 : 0);
        if (sink) {
            const auto& [k, v] = sink_sidecar_.at(t);
            for (float f : k) put_f32(out, f);
            for (float f : v) put_f32(out, f);
        } else {
            for (const auto& b : key_blocks_[static_cast<size_t>(t)]) serialize_block(b, out);
            for (const auto& b : value_blocks_[static_cast<size_t>(t)]) serialize_block(b, out);
        }
    }
    return out;
}

LayerKVCache LayerKVCache::deserialize(std::span<const uint8_t> bytes) {
    size_t off = 0;
    if (bytes.empty()) throw std::runtime_error("cache deserialize: empty input");
    QuantConfig cfg;
    cfg.bits = bytes[off++];
    cfg.group_size = static_cast<int64_t>(get_u64(bytes, off));
    auto channels = static_cast<int64_t>(get_u64(bytes, off));
    auto tokens = static_cast<int64_t>(get_u64(bytes, off));
    LayerKVCache cache(cfg, channels);
    for (int64_t t = 0; t < tokens; ++t) {
        if (off >= bytes.size()) throw std::runtime_error("cache deserialize: truncated");
        bool sink = bytes[off++] != 0;
        if (sink) {
            std::vector<float> k(static_cast<size_t>(channels)), v(static_cast<size_t>(channels));
            for (auto& f : k) f = get_f32(bytes, off);
            for (auto& f : v) f = get_f32(bytes, off);
            cache.append(k, v, true);
        } else {
            std::vector<QuantizedBlock> kb, vb;
            for (int64_t c = 0; c < channels; c += cfg.group_size) {
                int64_t len = std::min(cfg.group_size, channels - c);
                kb.push_back(deserialize_block(bytes, off, cfg.bits, len));
            }
            for (int64_t c = 0; c < channels; c += cfg.group_size) {
                int64_t len = std::min(cfg.group_size, channels - c);
                vb.push_back(deserialize_block(bytes, off, cfg.bits, len));
            }
            cache.key_blocks_.push_back(std::move(kb));
            cache.value_blocks_.push_back(std::move(vb));
            cache.token_is_sink_.push_back(0);
        }
    }
    return cache;
}

}  // namespace rotatekv
