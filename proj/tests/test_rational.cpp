#include <doctest.h>

#include "psync/rational.hpp"

using psync::Q;

TEST_CASE("rational normalisation and parsing") {
    CHECK(Q(6, 4) == Q(3, 2));
    CHECK(Q(3, -6) == Q(-1, 2));
    CHECK(Q::parse("1.004") == Q(251, 250));
    CHECK(Q::parse("-2.5") == Q(-5, 2));
    CHECK(Q::parse("1001/1000").str() == "1001/1000");
    CHECK(Q::parse("7").str() == "7");
    CHECK_THROWS(Q::parse("1/0"));
    CHECK_THROWS(Q::parse("abc"));
}

TEST_CASE("rational ordering and rounding") {
    CHECK(Q(1, 3) < Q(1, 2));
    CHECK(Q(-1, 3) > Q(-1, 2));
    CHECK(Q(7, 2).floor() == Q(3));
    CHECK(Q(-7, 2).floor() == Q(-4));
    CHECK(Q(7, 2).ceil() == Q(4));
    CHECK(Q(7, 2).ceil_to(Q(1, 3)) == Q(11, 3));
    CHECK(Q(4).next_multiple(Q(2)) == Q(6));
    CHECK(Q(1, 8).decimal(3) == "0.125");
}

TEST_CASE("rational promotes to arbitrary precision on overflow") {
    const Q big = Q(1LL << 62) * Q(1LL << 62);
    CHECK(big.big());
    CHECK(big / Q(1LL << 62) == Q(1LL << 62));
    CHECK(!(big / Q(1LL << 62)).big());
    const Q tiny(1, (1LL << 62) + 1);
    CHECK((tiny * tiny).sign() > 0);
    CHECK(tiny * tiny < tiny);
    CHECK(big.num_str() == "21267647932558653966460912964485513216");
}

TEST_CASE("rational arithmetic matches a brute-force fraction oracle") {
    // Cross-multiplication on small integers as the independent reference.
    for (long long a = -6; a <= 6; ++a)
        for (long long b = 1; b <= 5; ++b)
            for (long long c = -6; c <= 6; ++c)
                for (long long e = 1; e <= 5; ++e) {
                    const Q x(a, b), y(c, e);
                    CHECK((x + y) * Q(b * e) == Q(a * e + c * b));
                    CHECK((x * y) * Q(b * e) == Q(a * c));
                    CHECK((x < y) == (a * e < c * b));
                }
}
