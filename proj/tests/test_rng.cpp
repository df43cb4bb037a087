#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "twostream/rng.hpp"

using namespace twostream;

TEST_CASE("counter rng is a pure function of key and index", "[rng]") {
    CounterRng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    CHECK(hash_at(42, 7) == hash_at(42, 7));
    CHECK(hash_at(42, 7) != hash_at(42, 8));
    CHECK(hash_at(42, 7) != hash_at(43, 7));
}

TEST_CASE("derived keys separate streams", "[rng]") {
    CHECK(derive_key(1, 2) != derive_key(1, 3));
    CHECK(derive_key(1, 2) != derive_key(2, 2));
    CHECK(derive_key(1, 2, 3) == derive_key(derive_key(1, 2), 3));
}

TEST_CASE("unit draws land in [0,1) and look uniform", "[rng]") {
    CounterRng rng(7);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double u = rng.next_unit();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sumsq += u * u;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean - 0.5) < 0.005);
    CHECK(std::abs(var - 1.0 / 12.0) < 0.005);
}

TEST_CASE("next_below covers its range without gross bias", "[rng]") {
    CounterRng rng(99);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[rng.next_below(7)];
    for (int c : counts) {
        CHECK(c > 9000);
        CHECK(c < 11000);
    }
}

TEST_CASE("normal draws match the first two moments", "[rng]") {
    CounterRng rng(123);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = rng.next_normal();
        sum += z;
        sumsq += z * z;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("seeded shuffle is deterministic", "[rng]") {
    std::vector<int> a{1, 2, 3, 4, 5, 6, 7, 8}, b = a;
    CounterRng r1(5), r2(5);
    shuffle(a, r1);
    shuffle(b, r2);
    CHECK(a == b);
}
