#include <doctest.h>

#include "psync/consensus.hpp"

using namespace psync;

namespace {

std::vector<int> bits(int mask, int n) {
    std::vector<int> v;
    for (int i = 0; i < n; ++i) v.push_back((mask >> i) & 1);
    return v;
}

}  // namespace

TEST_CASE("silent wrapper adds exactly two rounds") {
    for (int f = 0; f <= 2; ++f) {
        const int n = 3 * f + 1;
        CHECK(routine_rounds("phase-king", n, f) == 3 * (f + 1));
        CHECK(routine_rounds("phase-king-silent", n, f) == routine_rounds("phase-king", n, f) + 2);
    }
}

TEST_CASE("phase king: agreement and validity over every input and faulty node, n=4") {
    for (const std::string name : {"phase-king", "phase-king-silent"}) {
        const auto make = routine_factory(name);
        const int R = routine_rounds(name, 4, 1);
        for (int bad = 0; bad < 4; ++bad)
            for (int mask = 0; mask < 16; ++mask)
                for (uint64_t k = 0; k < 12; ++k) {
                    std::vector<bool> faulty(4, false);
                    faulty[static_cast<size_t>(bad)] = true;
                    const auto in = bits(mask, 4);
                    const SyncRun r = run_sync(make, 4, 1, in, faulty, scripted_adversary(k, R), k);
                    CHECK(r.rounds == R);
                    int y = -1, ones = 0, zeros = 0;
                    bool agree = true;
                    for (int v = 0; v < 4; ++v) {
                        if (v == bad) continue;
                        agree = agree && (y < 0 || r.outputs[static_cast<size_t>(v)] == y);
                        y = r.outputs[static_cast<size_t>(v)];
                        (in[static_cast<size_t>(v)] ? ones : zeros)++;
                    }
                    CHECK(agree);
                    if (ones == 0) CHECK(y == 0);
                    if (zeros == 0) CHECK(y == 1);
                    if (ones == 0 && name == "phase-king-silent") CHECK(r.correct_messages == 0);
                }
    }
}

TEST_CASE("truncated mock agrees at least half the time") {
    const auto make = routine_factory("mock-expected");
    uint64_t agree = 0;
    const uint64_t N = 2000;
    for (uint64_t s = 0; s < N; ++s) {
        std::vector<bool> faulty{false, false, false, true};
        const auto in = bits(static_cast<int>(s % 8), 4);
        const int R = routine_rounds("mock-expected", 4, 1);
        const SyncRun r = run_sync(make, 4, 1, in, faulty, scripted_adversary(s, R), s);
        agree += r.outputs[0] == r.outputs[1] && r.outputs[1] == r.outputs[2];
    }
    CHECK(agree * 2 >= N);
}

// Frozen outputs of tests/oracle/oracle.py for z = 2.5758293035489004.
TEST_CASE("Wilson interval matches the oracle") {
    const double z = 2.5758293035489004;
    const Wilson a = wilson(50, 100, z);
    CHECK(a.lower == doctest::Approx(0.375279625045).epsilon(1e-10));
    CHECK(a.upper == doctest::Approx(0.624720374955).epsilon(1e-10));
    CHECK(wilson(5000, 10000, z).lower == doctest::Approx(0.487125123948).epsilon(1e-10));
    CHECK(wilson(9, 10, z).upper == doctest::Approx(0.988148496589).epsilon(1e-10));
}
