#include <doctest.h>

#include <sstream>

#include "psync/sim.hpp"

using namespace psync;

TEST_CASE("piecewise clock read and inverse round-trip") {
    ClockFn c(Q(5), {{Q(0), Q(1)}, {Q(10), Q(11, 10)}, {Q(20), Q(1)}});
    CHECK(c.read(Q(0)) == Q(5));
    CHECK(c.read(Q(10)) == Q(15));
    CHECK(c.read(Q(20)) == Q(26));
    CHECK(c.read(Q(25)) == Q(31));
    for (int i = 0; i <= 60; ++i) {
        const Q t(i, 2);
        CHECK(c.inverse(c.read(t)) == t);
    }
    CHECK(c.inverse(Q(0)) == Q(0));
    CHECK_NOTHROW(c.validate(Q(11, 10)));
    CHECK_THROWS(c.validate(Q(105, 100)));
}

TEST_CASE("clock rates outside [1, theta] are rejected") {
    CHECK_THROWS(ClockFn::constant(Q(9, 10)).validate(Q(11, 10)));
    CHECK_NOTHROW(ClockFn::constant(Q(11, 10)).validate(Q(11, 10)));
}

TEST_CASE("random delays stay in (0, d) and keep channels FIFO") {
    DelayModel m = DelayModel::random(Q(1), 7, 1000, false);
    m.reset_channels(3);
    Q last[3][3];
    for (int i = 0; i < 2000; ++i) {
        const int from = i % 3, to = (i / 3) % 3;
        const Q t(i / 7, 3);
        const Q at = m.deliver(from, to, t);
        CHECK(t < at);
        CHECK(at < t + Q(1));
        CHECK(!(at < last[from][to]));
        last[from][to] = at;
    }
}

TEST_CASE("bimodal delays reach both ends of the range") {
    DelayModel m = DelayModel::random(Q(1), 3, 1000, true);
    m.reset_channels(2);
    int low = 0, high = 0;
    for (int i = 0; i < 400; ++i) {
        const Q t(i * 2);
        const Q dl = m.deliver(0, 1, t) - t;
        low += dl < Q(1, 10);
        high += Q(9, 10) < dl;
    }
    CHECK(low > 50);
    CHECK(high > 50);
}

namespace {

struct Ping : Component {
    uint32_t inst;
    explicit Ping(uint32_t i) : inst(i) {}
    void on_start(Engine& e, int node) override {
        if (node == 0) e.wake_local(node, inst, Q(3));
    }
    void on_message(Engine& e, int node, int from, uint16_t tag, const std::string&) override {
        e.record(node, inst, RecKind::Note, tag, static_cast<uint16_t>(from));
    }
    void on_wake(Engine& e, int node) override { e.broadcast(node, inst, 4); }
};

}  // namespace

TEST_CASE("engine delivers broadcasts, counts bits and replays deterministically") {
    auto run = [](std::ostream* csv) {
        Engine e(3, DelayModel::random(Q(1), 11), {ClockFn::constant(Q(1)), ClockFn::constant(Q(1)), ClockFn::constant(Q(1))});
        const uint32_t inst = e.add_instance({"ping", {0, 1, 2}, {}, {}, {"got"}});
        for (int v = 0; v < 3; ++v) e.attach(inst, v, std::make_unique<Ping>(inst));
        if (csv) e.set_csv(csv, "r");
        e.start();
        e.advance(Q(10));
        return std::make_tuple(e.records(), e.trace_hash(), e.bits_sent());
    };
    std::ostringstream a;
    auto [recs, h1, bits] = run(&a);
    auto [recs2, h2, bits2] = run(nullptr);
    CHECK(h1 == h2);
    REQUIRE(recs.size() == 3);
    for (const auto& r : recs) {
        CHECK(Q(3) < r.t);
        CHECK(r.t < Q(4));
        CHECK(r.b == 0);
    }
    CHECK(bits[0] == 1);
    CHECK(bits[1] == 0);

    std::istringstream in(a.str());
    std::string line;
    size_t i = 0;
    while (std::getline(in, line)) {
        std::string id;
        const Record r = Engine::parse_csv(line, &id);
        CHECK(id == "r");
        CHECK(r.t == recs[i].t);
        CHECK(r.node == recs[i].node);
        CHECK(r.a == recs[i].a);
        ++i;
    }
    CHECK(i == recs.size());
    CHECK_THROWS_AS(Engine::parse_csv("r,1/2,0.5"), std::invalid_argument);
}
