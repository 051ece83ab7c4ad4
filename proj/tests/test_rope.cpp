#include <doctest.h>

#include <cmath>
#include <vector>

#include "rotatekv/rng.hpp"
#include "rotatekv/rope.hpp"

using namespace rotatekv;

namespace {

Tensor random_bhsd(int64_t b, int64_t h, int64_t s, int64_t d, uint64_t seed) {
    Tensor t({b, h, s, d});
    CounterRng rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(i));
    return t;
}

}  // namespace

TEST_CASE("position zero is the identity") {
    Tensor x = random_bhsd(1, 2, 3, 8, 21);
    std::vector<int64_t> pos{0, 0, 0};
    RopeConfig cfg{8};
    Tensor y = apply_rope(x, cfg, pos);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("d=2 unit rotation") {
    Tensor x({1, 1, 1, 2}, {1.0f, 0.0f});
    std::vector<int64_t> pos{1};
    RopeConfig cfg{2};  // theta_0 = base^0 = 1
    Tensor y = apply_rope(x, cfg, pos);
    CHECK(y[0] == doctest::Approx(std::cos(1.0)));
    CHECK(y[1] == doctest::Approx(std::sin(1.0)));
}

TEST_CASE("per-pair norm preserved") {
    Tensor x = random_bhsd(1, 2, 4, 16, 22);
    std::vector<int64_t> pos{0, 1, 2, 3};
    RopeConfig cfg{16};
    Tensor y = apply_rope(x, cfg, pos);
    for (int64_t h = 0; h < 2; ++h) {
        for (int64_t s = 0; s < 4; ++s) {
            for (int64_t i = 0; i < 8; ++i) {
                double nx = std::hypot(x.at4(0, h, s, i), x.at4(0, h, s, i + 8));
                double ny = std::hypot(y.at4(0, h, s, i), y.at4(0, h, s, i + 8));
                CHECK(ny == doctest::Approx(nx).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("inverse undoes apply") {
    Tensor x = random_bhsd(2, 2, 5, 32, 23);
    std::vector<int64_t> pos{0, 3, 7, 11, 100};
    RopeConfig cfg{32};
    Tensor y = apply_rope_inverse(apply_rope(x, cfg, pos), cfg, pos);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-6));
}

TEST_CASE("angles are additive in position") {
    Tensor x = random_bhsd(1, 1, 1, 16, 24);
    RopeConfig cfg{16};
    std::vector<int64_t> p3{3}, p5{5}, p8{8};
    Tensor once = apply_rope(apply_rope(x, cfg, p3), cfg, p5);
    Tensor direct = apply_rope(x, cfg, p8);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(once[i] == doctest::Approx(direct[i]).epsilon(1e-5));
}

TEST_CASE("odd head_dim rejected") {
    Tensor x({1, 1, 1, 3});
    std::vector<int64_t> pos{0};
    RopeConfig cfg{3};
    CHECK_THROWS(apply_rope(x, cfg, pos));
}

TEST_CASE("attention logits depend only on relative position") {
    RopeConfig cfg{64};
    CounterRng rng(25);
    std::vector<float> qv(64), kv(64);
    for (uint64_t i = 0; i < 64; ++i) {
        qv[i] = static_cast<float>(rng.normal(2 * i));
        kv[i] = static_cast<float>(rng.normal(2 * i + 1));
    }
    auto dot_at = [&](int64_t mq, int64_t mk) {
        Tensor q({1, 1, 1, 64}, std::vector<float>(qv.begin(), qv.end()));
        Tensor k({1, 1, 1, 64}, std::vector<float>(kv.begin(), kv.end()));
        std::vector<int64_t> pq{mq}, pk{mk};
        Tensor qr = apply_rope(q, cfg, pq), kr = apply_rope(k, cfg, pk);
        double dot = 0;
        for (int64_t i = 0; i < 64; ++i) dot += double(qr[i]) * kr[i];
        return dot;
    };
    CHECK(dot_at(7, 3) == doctest::Approx(dot_at(27, 23)).epsilon(1e-5));
    CHECK(dot_at(12, 0) == doctest::Approx(dot_at(112, 100)).epsilon(1e-5));
}

TEST_CASE("rope breaks channel-magnitude consistency") {
    // Channel constant across tokens becomes token-varying after RoPE.
    int64_t s = 32, d = 16;
    Tensor x({1, 1, s, d});
    for (int64_t t = 0; t < s; ++t)
        for (int64_t c = 0; c < d; ++c) x.at4(0, 0, t, c) = (c == 2) ? 5.0f : 0.5f;
    std::vector<int64_t> pos(static_cast<size_t>(s));
    for (int64_t t = 0; t < s; ++t) pos[static_cast<size_t>(t)] = t;
    Tensor y = apply_rope(x, RopeConfig{d}, pos);
    double mean = 0;
    for (int64_t t = 0; t < s; ++t) mean += y.at4(0, 0, t, 2);
    mean /= double(s);
    double var = 0;
    for (int64_t t = 0; t < s; ++t) {
        double dev = y.at4(0, 0, t, 2) - mean;
        var += dev * dev;
    }
    CHECK(std::sqrt(var / double(s)) > 0.1);
}

TEST_CASE("row variant matches bhsd variant") {
    Tensor x = random_bhsd(1, 4, 6, 16, 26);
    std::vector<int64_t> pos{0, 1, 2, 3, 4, 5};
    RopeConfig cfg{16};
    Tensor a = bhsd_to_rows(apply_rope(x, cfg, pos));
    Tensor b = apply_rope_rows(bhsd_to_rows(x), cfg, 4, pos);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
}
