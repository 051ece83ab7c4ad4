#include <doctest.h>

#include <cstdio>
#include <vector>

#include "rotatekv/reorder.hpp"
#include "rotatekv/rng.hpp"

using namespace rotatekv;

namespace {

Tensor random_rows(int64_t n, int64_t c, uint64_t seed) {
    Tensor t({n, c});
    CounterRng rng(seed);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(i));
    return t;
}

}  // namespace

TEST_CASE("ascending argsort of channel sums") {
    Tensor keys({1, 3}, {3.0f, -5.0f, 1.0f});
    ReorderPlan plan = calibrate_reorder({keys});
    REQUIRE(plan.layers() == 1);
    CHECK(plan.perm[0] == std::vector<int32_t>{1, 2, 0});
    CHECK(plan.inverse[0][1] == 0);
    CHECK(plan.inverse[0][2] == 1);
    CHECK(plan.inverse[0][0] == 2);
}

TEST_CASE("equal sums keep identity order (stable tie-break)") {
    Tensor keys({2, 4}, {1, 1, 1, 1, -1, -1, -1, -1});
    ReorderPlan plan = calibrate_reorder({keys});
    CHECK(plan.perm[0] == std::vector<int32_t>{0, 1, 2, 3});
}

TEST_CASE("token order does not affect calibration") {
    Tensor a({3, 4}, {1, 5, -2, 0, 2, -1, 3, 1, 0, 0, 1, -4});
    Tensor b({3, 4}, {0, 0, 1, -4, 1, 5, -2, 0, 2, -1, 3, 1});
    CHECK(calibrate_reorder({a}).perm == calibrate_reorder({b}).perm);
}

TEST_CASE("calibration accepts bhsd input and rejects empty sets") {
    Tensor x({1, 2, 3, 4});
    CounterRng rng(41);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal(i));
    ReorderPlan plan = calibrate_reorder({x});
    CHECK(plan.channels() == 8);
    CHECK_THROWS(calibrate_reorder({}));
}

TEST_CASE("apply_reorder round-trip is bit-exact") {
    Tensor x = random_rows(7, 12, 42);
    Tensor noisy({1, 12});
    CounterRng rng(43);
    for (int64_t i = 0; i < 12; ++i) noisy[i] = static_cast<float>(rng.normal(i));
    ReorderPlan plan = calibrate_reorder({noisy});
    Tensor y = apply_reorder(x, plan, 0, false);
    Tensor back = apply_reorder(y, plan, 0, true);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(back[i] == x[i]);

    ReorderPlan ident = ReorderPlan::identity(1, 12);
    Tensor same = apply_reorder(x, ident, 0, false);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(same[i] == x[i]);
}

TEST_CASE("plan save/load round-trips byte-identically") {
    Tensor noisy = random_rows(4, 10, 44);
    ReorderPlan plan = calibrate_reorder({noisy});
    std::string p1 = "/tmp/rotatekv_test_plan1.txt", p2 = "/tmp/rotatekv_test_plan2.txt";
    plan.save(p1);
    ReorderPlan loaded = ReorderPlan::load(p1);
    CHECK(loaded.perm == plan.perm);
    loaded.save(p2);
    FILE* f1 = std::fopen(p1.c_str(), "rb");
    FILE* f2 = std::fopen(p2.c_str(), "rb");
    REQUIRE(f1);
    REQUIRE(f2);
    int c1, c2;
    do {
        c1 = std::fgetc(f1);
        c2 = std::fgetc(f2);
        CHECK(c1 == c2);
    } while (c1 != EOF && c2 != EOF);
    std::fclose(f1);
    std::fclose(f2);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
    CHECK(plan.layer_checksum(0) == loaded.layer_checksum(0));
}

TEST_CASE("smoothing factors and the Q/K identity") {
    // alpha=1: lambda = max|K_j|.
    Tensor k({2, 2}, {4.0f, 1.0f, -2.0f, 0.5f});
    Tensor q({2, 2}, {1.0f, 2.0f, -1.0f, 0.25f});
    SmoothingPlan p1 = calibrate_smoothing(k, q, 1.0);
    CHECK(p1.lambda[0] == doctest::Approx(4.0));
    CHECK(p1.lambda[1] == doctest::Approx(1.0));
    Tensor ks = apply_smoothing(k, p1, false);
    CHECK(ks.at2(0, 0) == doctest::Approx(1.0));  // max scaled down to 1

    // alpha=0: lambda = 1/max|Q_j|.
    SmoothingPlan p0 = calibrate_smoothing(k, q, 0.0);
    CHECK(p0.lambda[0] == doctest::Approx(1.0));
    CHECK(p0.lambda[1] == doctest::Approx(0.5));

    // (Q Lambda)(K Lambda^-1)^T == Q K^T.
    Tensor kr = random_rows(5, 8, 45), qr = random_rows(5, 8, 46);
    SmoothingPlan p = calibrate_smoothing(kr, qr, 0.5);
    Tensor ksm = apply_smoothing(kr, p, false);
    Tensor qsm = apply_smoothing_queries(qr, p);
    for (int64_t i = 0; i < 5; ++i) {
        for (int64_t j = 0; j < 5; ++j) {
            double ref = 0, got = 0;
            for (int64_t c = 0; c < 8; ++c) {
                ref += double(qr.at2(i, c)) * kr.at2(j, c);
                got += double(qsm.at2(i, c)) * ksm.at2(j, c);
            }
            CHECK(got == doctest::Approx(ref).epsilon(1e-5));
        }
    }

    // Smoothing inverts to 1e-6 relative.
    Tensor back = apply_smoothing(ksm, p, true);
    for (int64_t i = 0; i < kr.numel(); ++i)
        CHECK(back[i] == doctest::Approx(kr[i]).epsilon(1e-6));
}

TEST_CASE("strategy names parse both ways") {
    for (Strategy s : all_strategies()) CHECK(parse_strategy(strategy_name(s)) == s);
    CHECK(all_strategies().size() == 7);
    CHECK_THROWS(parse_strategy("rotate+confuse"));
}

TEST_CASE("high-precision ablation reconstructs almost exactly") {
    // At 8 bits every strategy's transform chain inverts cleanly; the tiny
    // residual is pure quantization noise.
    Tensor k({1, 2, 6, 8}), q({1, 2, 6, 8}), v({1, 2, 6, 8});
    CounterRng rng(47);
    for (int64_t i = 0; i < k.numel(); ++i) {
        k[i] = static_cast<float>(rng.normal(3 * i));
        q[i] = static_cast<float>(rng.normal(3 * i + 1));
        v[i] = static_cast<float>(rng.normal(3 * i + 2));
    }
    RotationPlan rot = RotationPlan::make(8, 1, 2);
    QuantConfig cfg;
    cfg.bits = 8;
    cfg.group_size = 16;
    for (Strategy s : all_strategies()) {
        StrategyResult r = strategy_ablation(k, q, v, s, rot, cfg);
        CHECK(r.key_mse < 1e-3);
    }
}
