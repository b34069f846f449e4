#include <doctest.h>

#include <numeric>
#include <vector>

#include "provmark/core/rng.hpp"

using provmark::Rng;

TEST_CASE("rng determinism for equal seeds") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(43);
    CHECK(Rng(42).next_u64() != c.next_u64());
}

TEST_CASE("rng uniform stays in range") {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        double u = r.uniform(-2.0, 3.0);
        CHECK(u >= -2.0);
        CHECK(u < 3.0);
        int64_t k = r.below(7);
        CHECK(k >= 0);
        CHECK(k < 7);
    }
}

TEST_CASE("rng normal has standard moments") {
    Rng r(7);
    const int n = 40000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        s += x;
        s2 += x * x;
    }
    double mean = s / n;
    double var = s2 / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(var == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("rng shuffle is a permutation and seed-stable") {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    Rng(5).shuffle(v);
    Rng(5).shuffle(w);
    CHECK(v == w);
    std::sort(w.begin(), w.end());
    std::vector<int> sorted(50);
    std::iota(sorted.begin(), sorted.end(), 0);
    CHECK(w == sorted);
}

TEST_CASE("rng state round-trips through text, including the normal spare") {
    Rng r(11);
    r.normal();  // leaves a cached spare
    std::string s = r.state();
    Rng q(999);
    q.restore(s);
    for (int i = 0; i < 20; ++i) CHECK(r.normal() == q.normal());
    for (int i = 0; i < 20; ++i) CHECK(r.next_u64() == q.next_u64());
}

TEST_CASE("rng fork produces decorrelated child streams") {
    Rng root(3);
    Rng a = root.fork(1);
    Rng b = root.fork(2);
    int equal = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++equal;
    CHECK(equal == 0);
}
