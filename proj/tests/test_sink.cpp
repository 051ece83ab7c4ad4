#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "rotatekv/attention.hpp"
#include "rotatekv/quant.hpp"
#include "rotatekv/rng.hpp"
#include "rotatekv/sink.hpp"
#include "rotatekv/workload.hpp"

using namespace rotatekv;

TEST_CASE("constructed massive activations are detected at the right tokens") {
    WorkloadSpec spec;
    spec.b = 1;
    spec.s = 128;
    spec.d_model = 4096;
    spec.massive_tokens = {{0, 1415, 100.0f}, {110, 2533, 100.0f}};
    Tensor block = gen_block_output_with_sinks(spec);
    SinkSet set = detect_massive_activations(block, 50.0, 0.0);
    CHECK(set.tokens == std::vector<int64_t>{0, 110});
    bool saw_1415 = false, saw_2533 = false;
    for (const auto& m : set.metadata) {
        if (m.token == 0 && m.channel == 1415) saw_1415 = true;
        if (m.token == 110 && m.channel == 2533) saw_2533 = true;
    }
    CHECK(saw_1415);
    CHECK(saw_2533);
}

TEST_CASE("no spikes yields only token zero") {
    WorkloadSpec spec;
    spec.s = 64;
    spec.d_model = 256;
    Tensor block = gen_block_output_with_sinks(spec);
    SinkSet set = detect_massive_activations(block, 50.0, 0.0);
    CHECK(set.tokens == std::vector<int64_t>{0});
}

TEST_CASE("sub-threshold spike is not detected") {
    WorkloadSpec spec;
    spec.s = 64;
    spec.d_model = 256;
    spec.massive_tokens = {{20, 100, 5.0f}};  // well under 50x the median
    Tensor block = gen_block_output_with_sinks(spec);
    SinkSet set = detect_massive_activations(block, 50.0, 0.0);
    CHECK(set.tokens == std::vector<int64_t>{0});
}

TEST_CASE("single-token sequence yields token zero") {
    Tensor block({1, 1, 16});
    for (int64_t i = 0; i < 16; ++i) block[i] = 0.1f;
    SinkSet set = detect_massive_activations(block, 50.0, 0.0);
    CHECK(set.tokens == std::vector<int64_t>{0});
}

TEST_CASE("validation errors") {
    Tensor block({1, 4, 8});
    CHECK_THROWS(detect_massive_activations(block, 1.0, 0.0));
    Tensor flat({4, 8});
    CHECK_THROWS(detect_massive_activations(flat, 50.0, 0.0));
}

TEST_CASE("detection is scale-equivariant") {
    WorkloadSpec spec;
    spec.s = 96;
    spec.d_model = 512;
    spec.massive_tokens = {{7, 31, 120.0f}};
    Tensor block = gen_block_output_with_sinks(spec);
    SinkSet base = detect_massive_activations(block, 50.0, 0.0);
    Tensor scaled = block;
    for (int64_t i = 0; i < scaled.numel(); ++i) scaled[i] *= 3.7f;
    SinkSet after = detect_massive_activations(scaled, 50.0, 0.0);
    CHECK(base.tokens == after.tokens);
    CHECK(base.tokens == std::vector<int64_t>{0, 7});
}

TEST_CASE("route_sinks stores exact rows and rejects bad indices") {
    QuantConfig cfg;
    cfg.bits = 2;
    cfg.group_size = 8;
    LayerKVCache cache(cfg, 16);
    Tensor k({4, 16}), v({4, 16});
    CounterRng rng(51);
    for (int64_t i = 0; i < k.numel(); ++i) {
        k[i] = static_cast<float>(rng.normal(2 * i));
        v[i] = static_cast<float>(rng.normal(2 * i + 1));
    }
    for (int64_t t = 0; t < 4; ++t)
        cache.append(std::span<const float>(k.data() + t * 16, 16),
                     std::span<const float>(v.data() + t * 16, 16), false);
    SinkSet sinks;
    sinks.tokens = {0, 2};
    route_sinks(cache, sinks, k, v);
    CHECK(cache.sink_tokens() == std::vector<int64_t>{0, 2});
    for (int64_t c = 0; c < 16; ++c) {
        CHECK(cache.key_row(2)[size_t(c)] == k.at2(2, c));
        CHECK(cache.value_row(2)[size_t(c)] == v.at2(2, c));
    }
    SinkSet bad;
    bad.tokens = {9};
    CHECK_THROWS(route_sinks(cache, bad, k, v));

    // Sidecar accounting matches the quantizer formula.
    CHECK(average_bits(cfg, cache.sink_fraction()) ==
          doctest::Approx((1 - 0.5) * (2 + 16.0 / 8) + 0.5 * 16));
}

TEST_CASE("retaining a concentrated-attention sink lowers attention error") {
    // Token 0 carries a huge key aligned with every query, so attention mass
    // concentrates there; keeping it full-precision must not hurt.
    int64_t s = 24, d = 16;
    Tensor k({1, 1, s, d}), q({1, 1, s, d}), v({1, 1, s, d});
    CounterRng rng(52);
    for (int64_t i = 0; i < k.numel(); ++i) {
        k[i] = static_cast<float>(rng.normal(3 * i) * 0.3);
        q[i] = static_cast<float>(rng.normal(3 * i + 1) * 0.3);
        v[i] = static_cast<float>(rng.normal(3 * i + 2));
    }
    for (int64_t c = 0; c < d; ++c) {
        k.at4(0, 0, 0, c) = 6.0f;
        for (int64_t t = 0; t < s; ++t) q.at4(0, 0, t, c) += 1.0f;
    }
    Tensor ref = reference_attention(q, k, v, false);

    QuantConfig cfg;
    cfg.bits = 2;
    cfg.group_size = 16;
    auto run = [&](bool keep_sink) {
        LayerKVCache cache(cfg, d);
        for (int64_t t = 0; t < s; ++t)
            cache.append(std::span<const float>(k.data() + t * d, size_t(d)),
                         std::span<const float>(v.data() + t * d, size_t(d)),
                         keep_sink && t == 0);
        Tensor kq = cache.keys().reshape({1, 1, s, d});
        Tensor vq = cache.values().reshape({1, 1, s, d});
        return mse(reference_attention(q, kq, vq, false), ref);
    };
    CHECK(run(true) <= run(false));
}

TEST_CASE("sink set text serialization") {
    SinkSet a;
    a.layer = 0;
    a.tokens = {0, 5};
    a.metadata = {{5, 3, 99.0f}};
    std::string path = "/tmp/rotatekv_test_sinks.txt";
    save_sink_sets({a}, path);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line == "layer=0 tokens=0,5");
    std::remove(path.c_str());

    std::string csv = "/tmp/rotatekv_test_sinks.csv";
    save_sink_metadata_csv({a}, csv);
    std::ifstream cs(csv);
    std::getline(cs, line);
    CHECK(line == "layer,token,channel,magnitude");
    std::getline(cs, line);
    CHECK(line == "0,5,3,99");
    std::remove(csv.c_str());
}
