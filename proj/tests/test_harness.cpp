#include <doctest.h>

#include <sstream>

#include "psync/harness.hpp"
#include "psync/solvers.hpp"

using namespace psync;
using nlohmann::json;

namespace {

Scenario base(SystemKind k) {
    Scenario s;
    s.system = k;
    s.name = system_name(k);
    switch (k) {
    case SystemKind::St:
    case SystemKind::Consensus: s.faults = {{1, Behaviour::Random, Q(0), Q(2)}}; break;
    case SystemKind::Main:
        s.theta = Q(1004, 1000);
        s.faults = {{3, Behaviour::Equivocator, Q(0), Q(5)}};
        break;
    case SystemKind::Resync:
    case SystemKind::Recursion:
        s.n = 7;
        s.f = 2;
        s.theta = Q(1001, 1000);
        s.init = k == SystemKind::Recursion ? "random-top" : "random";
        s.settle = Q(3000);
        s.faults = {{3, Behaviour::Random, Q(0), Q(20)}, {4, Behaviour::Spoiler, Q(0), Q(20)}};
        break;
    }
    return s;
}

}  // namespace

TEST_CASE("scenario parsing: defaults, rationals and round trip") {
    const Scenario s = parse_scenario(json::parse(R"({"system":"main","theta":"1004/1000","n":4,"f":1,
        "faults":[{"node":2,"behaviour":"spoiler","period":"3/2"}],"assert":"skew,gaps"})"));
    CHECK(s.system == SystemKind::Main);
    CHECK(s.theta == Q(251, 250));
    CHECK(s.faults.at(0).kind == Behaviour::Spoiler);
    CHECK(s.faults.at(0).period == Q(3, 2));
    CHECK(s.asserts == std::vector<std::string>{"skew", "gaps"});
    const Scenario t = parse_scenario(scenario_json(s));
    CHECK(scenario_json(t) == scenario_json(s));
}

TEST_CASE("scenario errors name the offending field") {
    auto err = [](const char* text) {
        try {
            parse_scenario(json::parse(text));
        } catch (const ScenarioError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(err(R"({"n":4,"f":2})").find("n > 3f") != std::string::npos);
    CHECK(err(R"({"theta":"x"})").find("$.theta") != std::string::npos);
    CHECK(err(R"({"bogus":1})").find("$.bogus") != std::string::npos);
    CHECK(err(R"({"faults":[{"node":9}]})").find("out of range") != std::string::npos);
    CHECK(err(R"({"faults":[{"node":1,"behaviour":"evil"}]})").find("$.faults[0].behaviour") != std::string::npos);
    CHECK(err(R"({"assert":["nope"]})").find("nope") != std::string::npos);
}

TEST_CASE("infeasible drift bound is reported by name") {
    Scenario s = base(SystemKind::Recursion);
    s.theta = Q(12, 10);
    CHECK_THROWS_WITH_AS(run_scenario(s, 1), doctest::Contains("(2+sqrt(32))/7"), InfeasibleError);
}

TEST_CASE("runs are byte-identical on re-run and offline metrics equal in-run metrics") {
    for (SystemKind k : {SystemKind::St, SystemKind::Consensus, SystemKind::Main, SystemKind::Resync,
                         SystemKind::Recursion}) {
        const Scenario s = base(k);
        INFO(system_name(k));
        std::ostringstream a, b;
        RunOptions oa, ob;
        oa.csv = &a;
        ob.csv = &b;
        const RunResult r1 = run_scenario(s, 9, oa);
        const RunResult r2 = run_scenario(s, 9, ob);
        CHECK(r1.trace_hash == r2.trace_hash);
        CHECK(a.str() == b.str());
        CHECK(r1.passed());
        std::istringstream in(a.str());
        const RunResult off = evaluate_trace(s, 9, in);
        CHECK(off.metrics == r1.metrics);
    }
}

TEST_CASE("assert filter keeps only the enabled groups") {
    Scenario s = base(SystemKind::St);
    s.asserts = {"skew"};
    const RunResult r = run_scenario(s, 2);
    REQUIRE(r.checks.size() == 1);
    CHECK(r.checks[0].group == "skew");
}

TEST_CASE("sweep: empty grid gives an empty table, missing grid one cell") {
    const Scenario s = base(SystemKind::St);
    CHECK(sweep(s, json::object(), {1, 2}, 1).empty());
    CHECK(sweep(s, json::parse(R"({"init_spread":[]})"), {1}, 1).empty());
    const auto one = sweep(s, std::nullopt, {1, 2, 3}, 2);
    REQUIRE(one.size() == 1);
    CHECK(one[0].runs == 3);
    CHECK(one[0].violations == 0);
    const auto grid = sweep(s, json::parse(R"({"init_spread":["0","5","10"]})"), {1, 2}, 2);
    REQUIRE(grid.size() == 3);
    for (const auto& c : grid) CHECK(c.passed == 2);
}
