#include <doctest.h>

#include "psync/machine.hpp"

using namespace psync;

namespace {

// Sender machine fires at local time 1; receiver counts pulses from masked senders.
GroupSpec two_machines(uint64_t senders) {
    GroupSpec g;
    g.name = "t";
    g.tags = {"hello"};
    g.timers = {{"T", Q(1)}};
    g.buffers = {{"hello", 0, false, Q(0), senders}};
    MachineDef s;
    s.name = "sender";
    s.states = {{"IDLE", false, -1, -1, {0}, {}}, {"SENT", true, 0, -1, {}, {}}};
    s.transitions = {{0, 1, Guard::timer(0), ""}};
    MachineDef r;
    r.name = "receiver";
    r.states = {{"WAIT", false, -1, -1, {}, {}}, {"GOT", false, -1, -1, {}, {}}};
    r.transitions = {{0, 1, Guard::count(0, Cmp::Ge, 2), ""}};
    g.machines = {s, r};
    g.validate();
    return g;
}

std::vector<Record> run(const GroupSpec& g, const std::vector<Q>& rates) {
    std::vector<ClockFn> clocks;
    for (const Q& r : rates) clocks.push_back(ClockFn::constant(r));
    const int n = static_cast<int>(rates.size());
    Engine e(n, DelayModel::constant(Q(1), Q(1, 4)), clocks);
    std::vector<int> members;
    for (int v = 0; v < n; ++v) members.push_back(v);
    const uint32_t inst = e.add_instance({"t", members, g.tags});
    for (int v = 0; v < n; ++v) e.attach(inst, v, std::make_unique<MachineGroup>(&g, inst, v, members));
    e.start();
    e.advance(Q(5));
    return e.records();
}

}  // namespace

TEST_CASE("timer guard fires exactly at local expiry") {
    const GroupSpec g = two_machines(~0ULL);
    const auto recs = run(g, {Q(1), Q(2), Q(1)});
    for (const auto& r : recs)
        if (r.kind == RecKind::Transition && r.a == 0 && r.c == 1) CHECK(r.t == (r.node == 1 ? Q(1, 2) : Q(1)));
}

TEST_CASE("sliding-window and flag buffers honour the sender mask") {
    const GroupSpec all = two_machines(~0ULL);
    const GroupSpec one = two_machines(1ULL << 1);
    auto got = [](const std::vector<Record>& recs) {
        int k = 0;
        for (const auto& r : recs) k += r.kind == RecKind::Transition && r.a == 1 && r.c == 1;
        return k;
    };
    CHECK(got(run(all, {Q(1), Q(1), Q(1)})) == 3);
    // Only node 1 is stored, so the threshold of two is never reached.
    CHECK(got(run(one, {Q(1), Q(1), Q(1)})) == 0);
}

TEST_CASE("dangling references are rejected") {
    GroupSpec g = two_machines(~0ULL);
    g.machines[1].transitions.push_back({0, 7, Guard::always(), ""});
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("dump lists every machine, state and guard") {
    const std::string d = two_machines(~0ULL).dump();
    CHECK(d.find("sender") != std::string::npos);
    CHECK(d.find("GOT") != std::string::npos);
    CHECK(d.find("hello") != std::string::npos);
}
