#include <doctest.h>

#include "psync/harness.hpp"
#include "psync/main_pulser.hpp"

using namespace psync;

namespace {

Record pulse(const Q& t, int node) { return {t, static_cast<uint16_t>(node), 0, RecKind::Pulse, 0, 0, 0, 0}; }

}  // namespace

TEST_CASE("stabilisation detector finds the start of the regular suffix") {
    std::vector<Record> recs;
    recs.push_back(pulse(Q(1), 0));
    recs.push_back(pulse(Q(7), 2));
    for (int k = 0; k < 20; ++k)
        for (int v = 0; v < 3; ++v) recs.push_back(pulse(Q(20 + 10 * k) + Q(v, 4), v));
    const Stabilisation s = detect_stabilisation(recs, 0, {0, 1, 2}, Q(9), Q(11), Q(1), Q(215));
    CHECK(s.found);
    CHECK(s.conclusive);
    CHECK(s.t == Q(20));
    CHECK(s.max_skew == Q(1, 2));
    CHECK(s.min_gap == Q(10));
    CHECK(s.groups == 20);
}

TEST_CASE("stabilisation detector rejects a missing pulse and short traces") {
    std::vector<Record> recs;
    for (int k = 0; k < 20; ++k)
        for (int v = 0; v < 3; ++v)
            if (!(k == 15 && v == 1)) recs.push_back(pulse(Q(10 * k), v));
    const Stabilisation s = detect_stabilisation(recs, 0, {0, 1, 2}, Q(9), Q(11), Q(1), Q(195));
    CHECK(s.found);
    CHECK(s.t == Q(160));
    CHECK(s.conclusive);
    const std::vector<Record> head(recs.begin(), recs.begin() + 9);
    const Stabilisation h = detect_stabilisation(head, 0, {0, 1, 2}, Q(9), Q(11), Q(1), Q(25));
    CHECK(h.found);
    CHECK(!h.conclusive);
    // Faulty node 1 is ignored when it is not listed as correct.
    CHECK(detect_stabilisation(recs, 0, {0, 2}, Q(9), Q(11), Q(1), Q(195)).t == Q(0));
}

TEST_CASE("ST pulser run stays within its skew and gap bounds") {
    Scenario s;
    s.system = SystemKind::St;
    s.faults = {{3, Behaviour::Equivocator}};
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        const RunResult r = run_scenario(s, seed);
        INFO(r.run_id);
        CHECK(r.passed());
    }
}

TEST_CASE("main pulser with oracle resync stabilises") {
    Scenario s;
    s.system = SystemKind::Main;
    s.theta = Q(1004, 1000);
    s.faults = {{2, Behaviour::Random, Q(0), Q(5)}};
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        const RunResult r = run_scenario(s, seed);
        INFO(r.run_id);
        REQUIRE(r.first_failure() == nullptr);
        CHECK(r.metrics["stabilisation"]["found"].get<bool>());
    }
}

TEST_CASE("resync with a byzantine block still emits a good pulse") {
    Scenario s;
    s.system = SystemKind::Resync;
    s.n = 7;
    s.f = 2;
    s.theta = Q(1001, 1000);
    s.faults = {{0, Behaviour::Spoiler, Q(0), Q(40)}, {1, Behaviour::Random, Q(0), Q(40)}};
    const RunResult r = run_scenario(s, 4);
    CHECK(r.passed());
    CHECK(r.metrics["correct_block"] == 1);
}

TEST_CASE("a voter that passes before its block pulses arrive still votes") {
    Scenario s;
    s.system = SystemKind::Resync;
    s.n = 7;
    s.f = 2;
    s.theta = Q(1001, 1000);
    s.clocks.segment = Q(500);
    s.faults = {{0, Behaviour::Spoiler, Q(0), Q(20)}, {1, Behaviour::Equivocator, Q(0), Q(50)}};
    const RunResult r = run_scenario(s, 159);
    INFO(r.run_id);
    CHECK(r.first_failure() == nullptr);
}
