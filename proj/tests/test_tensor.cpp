#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "rotatekv/rng.hpp"
#include "rotatekv/tensor.hpp"

using namespace rotatekv;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/rotatekv_test_") + name;
}

}  // namespace

TEST_CASE("reshape keeps flat data") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor flat = t.reshape({6});
    CHECK(flat.ndim() == 1);
    for (int64_t i = 0; i < 6; ++i) CHECK(flat[i] == t[i]);

    Tensor four({1, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) four[i] = static_cast<float>(i);
    Tensor sq = four.reshape({4, 2});
    for (int64_t i = 0; i < 8; ++i) CHECK(sq[i] == four[i]);
}

TEST_CASE("reshape rejects element-count mismatch") {
    Tensor t({2, 3});
    CHECK_THROWS(t.reshape({5}));
}

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS(Tensor({2, 0}));
    CHECK_THROWS(Tensor({3}, {1.0f, 2.0f}));
}

TEST_CASE("dump round trip is bitwise exact") {
    Tensor t({3, 4});
    CounterRng rng(99);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(i) * 1e-3);
    std::string path = temp_path("dump.rkvt");
    save_dump(t, path);
    Tensor back = load_dump(path);
    REQUIRE(back.same_shape(t));
    CHECK(std::memcmp(back.data(), t.data(), sizeof(float) * t.numel()) == 0);
    std::remove(path.c_str());
}

TEST_CASE("dump rejects bad magic and truncation") {
    std::string path = temp_path("dump_bad.rkvt");
    {
        std::ofstream os(path, std::ios::binary);
        os << "XXXXgarbage";
    }
    CHECK_THROWS(load_dump(path));

    Tensor t({2, 2}, {1, 2, 3, 4});
    save_dump(t, path);
    {
        // Chop the payload short.
        std::ifstream is(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os.write(all.data(), static_cast<std::streamsize>(all.size() - 6));
    }
    CHECK_THROWS(load_dump(path));
    std::remove(path.c_str());
}

TEST_CASE("mse and max_abs_diff") {
    Tensor a({2, 2}, {0, 0, 0, 0});
    Tensor b({2, 2}, {1, -1, 2, 0});
    CHECK(mse(a, b) == doctest::Approx(6.0 / 4.0));
    CHECK(max_abs_diff(a, b) == doctest::Approx(2.0));
}

TEST_CASE("bhsd/rows layout bridge") {
    // b=1, h=2, s=2, d=2: row t must be [head0 channels, head1 channels].
    Tensor x({1, 2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) x[i] = static_cast<float>(i);
    Tensor rows = bhsd_to_rows(x);
    REQUIRE(rows.dim(0) == 2);
    REQUIRE(rows.dim(1) == 4);
    // token 0: head0 = (0,1), head1 = (4,5)
    CHECK(rows.at2(0, 0) == 0.0f);
    CHECK(rows.at2(0, 1) == 1.0f);
    CHECK(rows.at2(0, 2) == 4.0f);
    CHECK(rows.at2(0, 3) == 5.0f);
    Tensor back = rows_to_bhsd(rows, 1, 2, 2, 2);
    for (int64_t i = 0; i < 8; ++i) CHECK(back[i] == x[i]);
}
