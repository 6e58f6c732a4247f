// End-to-end acceptance suite: one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "psync/consensus.hpp"
#include "psync/harness.hpp"
#include "psync/recursion.hpp"
#include "psync/solvers.hpp"

using namespace psync;

namespace {

// Wall-clock limits per criterion, in seconds.
constexpr double kLimitSt = 10;
constexpr double kLimitConsensus = 30;
constexpr double kLimitMock = 30;
constexpr double kLimitMain = 120;
constexpr double kLimitResync = 120;
constexpr double kLimitRecursion = 300;

// Agreement thresholds for the truncated mock routine.
constexpr double kMockRate = 0.5;
constexpr double kMockWilsonLower = 0.48;
constexpr double kZ99 = 2.5758293035489004;

struct Outcome {
    bool ok = true;
    std::string detail;
    std::vector<std::string> notes;
    void fail(const std::string& why) {
        if (ok) detail = why;
        ok = false;
    }
};

int failures = 0;
std::map<std::string, LemmaTally> lemmas;
std::vector<std::pair<Scenario, uint64_t>> replay;

void report(int id, const char* title, const Outcome& o, double secs, double limit) {
    const bool ok = o.ok && secs < limit;
    if (!ok) ++failures;
    std::string detail = o.detail;
    if (o.ok && !(secs < limit)) detail = "runtime over limit";
    std::printf("%s  %d. %-44s %7.2fs (limit %.0fs)  %s\n", ok ? "PASS" : "FAIL", id, title, secs, limit, detail.c_str());
    for (const auto& n : o.notes) std::printf("        %s\n", n.c_str());
    std::fflush(stdout);
}

double timed(const std::function<void()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void absorb(const RunResult& r, Outcome& o, uint64_t seed) {
    for (const auto& t : r.lemmas) {
        auto& agg = lemmas[t.name];
        agg.name = t.name;
        agg.merge(t);
    }
    if (const Check* c = r.first_failure())
        o.fail("seed " + std::to_string(seed) + ": " + c->group + "/" + c->name + " " + c->detail);
}

double qd(const nlohmann::json& j) { return Q::parse(j.get<std::string>()).to_double(); }

// ---------------------------------------------------------------- 1

void st_pulser() {
    Outcome o;
    Q worst_skew(0);
    const double secs = timed([&] {
        for (uint64_t seed = 1; seed <= 100; ++seed) {
            Scenario s;
            s.name = "st";
            s.system = SystemKind::St;
            s.theta = Q(11, 10);
            s.tau = Q(10);
            s.init_spread = s.tau;
            s.faults = {{static_cast<int>(seed % 4), seed % 2 ? Behaviour::Random : Behaviour::Equivocator, Q(0), Q(1, 2)}};
            const RunResult r = run_scenario(s, seed);
            absorb(r, o, seed);
            if (r.metrics.contains("max_skew")) worst_skew = qmax(worst_skew, Q::parse(r.metrics["max_skew"]));
            if (seed <= 3) replay.emplace_back(s, seed);
        }
    });
    if (o.ok) o.detail = "100 seeds, first window/skew/gaps exact; worst skew " + worst_skew.decimal(4) + " < 2d";
    report(1, "ST pulser bounds", o, secs, kLimitSt);
}

// ---------------------------------------------------------------- 2

void consensus() {
    Outcome o;
    uint64_t runs = 0, silent_runs = 0;
    const int R = routine_rounds("phase-king", 4, 1);
    const int Rs = routine_rounds("phase-king-silent", 4, 1);
    const double secs = timed([&] {
        if (Rs != R + 2) o.fail("wrapper rounds " + std::to_string(Rs) + " != " + std::to_string(R) + " + 2");
        const auto make = routine_factory("phase-king-silent");
        Rng mixed(77);
        for (uint64_t k = 0; k < 1000; ++k) {
            std::vector<bool> faulty(4, false);
            const int bad = static_cast<int>(k % 4);
            faulty[static_cast<size_t>(bad)] = true;
            const auto script = scripted_adversary(k, Rs);
            for (int mode = 0; mode < 3; ++mode) {
                std::vector<int> in(4);
                for (auto& x : in) x = mode == 2 ? static_cast<int>(mixed.below(2)) : mode;
                const SyncRun r = run_sync(make, 4, 1, in, faulty, script, k);
                ++runs;
                if (r.rounds != Rs) o.fail("adversary " + std::to_string(k) + ": ran " + std::to_string(r.rounds) + " rounds");
                int y = -1;
                bool agree = true;
                for (int v = 0; v < 4; ++v) {
                    if (v == bad) continue;
                    const int out = r.outputs[static_cast<size_t>(v)];
                    agree = agree && (y < 0 || out == y);
                    y = out;
                }
                if (!agree) o.fail("adversary " + std::to_string(k) + ": agreement violated");
                if (mode < 2 && y != mode) o.fail("adversary " + std::to_string(k) + ": validity violated on all-" + std::to_string(mode));
                if (mode == 0) {
                    ++silent_runs;
                    if (r.correct_messages) o.fail("adversary " + std::to_string(k) + ": correct node spoke on all-0");
                }
            }
        }
    });
    if (o.ok)
        o.detail = std::to_string(runs) + " runs, 1000 adversaries; validity, agreement, silence on " +
                   std::to_string(silent_runs) + " all-0 runs; R'=" + std::to_string(Rs) + "=R+2";
    report(2, "Consensus: phase king + silent wrapper", o, secs, kLimitConsensus);
}

// ---------------------------------------------------------------- 3

void mock() {
    Outcome o;
    uint64_t agree = 0;
    const uint64_t N = 10000;
    Wilson w{};
    const double secs = timed([&] {
        const auto make = routine_factory("mock-expected");
        const int R = routine_rounds("mock-expected", 4, 1);
        Rng rng(99);
        for (uint64_t s = 0; s < N; ++s) {
            std::vector<bool> faulty(4, false);
            const int bad = static_cast<int>(s % 4);
            faulty[static_cast<size_t>(bad)] = true;
            std::vector<int> in(4);
            for (auto& x : in) x = static_cast<int>(rng.below(2));
            const SyncRun r = run_sync(make, 4, 1, in, faulty, scripted_adversary(s, R), s);
            int y = -1;
            bool ok = true;
            for (int v = 0; v < 4; ++v) {
                if (v == bad) continue;
                ok = ok && (y < 0 || r.outputs[static_cast<size_t>(v)] == y);
                y = r.outputs[static_cast<size_t>(v)];
            }
            agree += ok;
        }
        w = wilson(agree, N, kZ99);
    });
    char buf[160];
    std::snprintf(buf, sizeof buf, "agreement %llu/%llu = %.4f, Wilson 99%% lower %.4f", static_cast<unsigned long long>(agree),
                  static_cast<unsigned long long>(N), w.rate, w.lower);
    o.detail = buf;
    if (w.rate < kMockRate || w.lower < kMockWilsonLower) o.ok = false;
    report(3, "Mock routine + truncating wrapper", o, secs, kLimitMock);
}

// ---------------------------------------------------------------- 4

void solvers() {
    Outcome o;
    int rows = 0;
    const double secs = timed([&] {
        auto tally = [&](const std::vector<Row>& rs, const std::string& what) {
            rows += static_cast<int>(rs.size());
            for (const auto& r : rs)
                if (!r.ok) o.fail(what + ": " + r.name);
        };
        struct Case {
            Q theta, phi;
            int n, f;
        };
        // At theta=1.004 only the single-level n=4 plan is feasible.
        const Case cases[] = {{Q(1001, 1000), Q(1025, 1000), 7, 2},
                              {Q(1001, 1000), Q(1021, 1000), 4, 1},
                              {Q(1004, 1000), Q(1021, 1000), 4, 1}};
        for (const auto& [theta, phi, n, f] : cases) {
            const std::string tag = "theta=" + theta.str() + " n=" + std::to_string(n);
            tally(check_st(solve_st(theta, Q(1), Q(10))), tag + " st");
            try {
                const Plan p = plan_recursion(n, f, theta, phi, Q(1), "phase-king-silent");
                for (const auto& L : p.levels) {
                    if (L.base) continue;
                    tally(check_st(L.main.st), tag + " st");
                    tally(check_main(L.main), tag + " main");
                    tally(check_resync(L.resync), tag + " resync");
                }
            } catch (const InfeasibleError& e) {
                o.fail(tag + " rejected: " + e.what());
            }
        }
        MainInputs mi;
        mi.theta = Q(11, 10);
        mi.rounds = routine_rounds("phase-king-silent", 4, 1);
        mi.rho = mi.theta * Q(4);
        try {
            solve_main(mi);
            o.fail("theta=1.1 accepted by the main solver");
        } catch (const InfeasibleError& e) {
            if (std::string(e.what()).find("(2+sqrt(32))/7") == std::string::npos) o.fail(std::string("wrong bound: ") + e.what());
            else o.notes.push_back(std::string("theta=1.1 rejected: ") + e.what());
        }
        ResyncInputs ri;
        ri.theta = Q(1004, 1000);
        ri.phi = Q(31, 30) / (ri.theta * ri.theta);  // exactly on the bound
        ri.psi = Q(1000);
        try {
            solve_resync(ri);
            o.fail("theta^2 phi = 31/30 accepted by the resync solver");
        } catch (const InfeasibleError& e) {
            o.notes.push_back(std::string("theta^2 phi = 31/30 rejected: ") + e.what());
        }
        const Q prod = Q(1004, 1000) * Q(1004, 1000) * Q(1021, 1000);
        if (!(prod < Q(31, 30))) o.fail("theta=1.004, phi=1.021 product check");
        ri.phi = Q(1021, 1000);
        try {
            tally(check_resync(solve_resync(ri)), "theta=1.004 phi=1.021 resync");
            o.notes.push_back("theta=1.004, phi=1.021 accepted: theta^2 phi = " + prod.str() + " < 31/30");
        } catch (const InfeasibleError& e) {
            o.fail(std::string("theta=1.004, phi=1.021 rejected: ") + e.what());
        }
    });
    if (o.ok) o.detail = std::to_string(rows) + " rows hold by exact substitution";
    report(4, "Timeout solvers", o, secs, 5);
}

// ---------------------------------------------------------------- 5

const Behaviour kMainFaults[] = {Behaviour::Random, Behaviour::Equivocator, Behaviour::StateMimic, Behaviour::Silent};

void main_pulser() {
    Outcome o;
    double worst = 0;
    const double secs = timed([&] {
        for (uint64_t seed = 1; seed <= 200; ++seed) {
            Scenario s;
            s.name = "main";
            s.system = SystemKind::Main;
            s.theta = Q(1004, 1000);
            s.init = "random";
            s.faults = {{static_cast<int>(seed % 4), kMainFaults[seed % 4], Q(0), Q(5)}};
            const RunResult r = run_scenario(s, seed);
            absorb(r, o, seed);
            const auto& st = r.metrics["stabilisation"];
            if (st.contains("bound") && !r.metrics["good_resync"].empty())
                worst = std::max(worst, qd(st["t"]) - qd(r.metrics["good_resync"][0]));
            if (seed <= 3) replay.emplace_back(s, seed);
        }
    });
    if (o.ok) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "200 seeds; worst stabilisation %.1f after the good resync pulse", worst);
        o.detail = buf;
    }
    report(5, "Main pulser with oracle resync", o, secs, kLimitMain);
}

// ---------------------------------------------------------------- 6

void resync() {
    Outcome o;
    double latest = 0;
    const double secs = timed([&] {
        for (uint64_t seed = 1; seed <= 200; ++seed) {
            Scenario s;
            s.name = "resync";
            s.system = SystemKind::Resync;
            s.n = 7;
            s.f = 2;
            s.theta = Q(1001, 1000);
            s.phi = Q(1025, 1000);
            s.clocks.segment = Q(500);
            // Both faults in one block make it Byzantine; alternate which block.
            const int first = seed % 2 ? 0 : 3;
            s.faults = {{first, Behaviour::Spoiler, Q(0), Q(20)},
                        {first + 1, seed % 3 ? Behaviour::Random : Behaviour::Equivocator, Q(0), Q(50)}};
            const RunResult r = run_scenario(s, seed);
            absorb(r, o, seed);
            if (!r.metrics["good_resync"].empty()) latest = std::max(latest, qd(r.metrics["good_resync"][0]));
            if (seed <= 3) replay.emplace_back(s, seed);
        }
    });
    if (o.ok) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "200 seeds; latest first good resync pulse at %.1f", latest);
        o.detail = buf;
    }
    report(6, "Resync: good pulse and spacing bounds", o, secs, kLimitResync);
}

// ---------------------------------------------------------------- 7

void recursion() {
    Outcome o;
    std::map<std::string, double> worst_stab, worst_ratio;
    const double secs = timed([&] {
        for (const auto& [label, a, b] : {std::tuple{"one block {3,4}", 3, 4}, std::tuple{"split {0,3}", 0, 3}}) {
            for (uint64_t seed = 1; seed <= 100; ++seed) {
                Scenario s;
                s.name = std::string("recursion-") + std::to_string(a) + std::to_string(b);
                s.system = SystemKind::Recursion;
                s.n = 7;
                s.f = 2;
                s.theta = Q(1001, 1000);
                s.phi = Q(1025, 1000);
                s.init = "random-top";
                s.settle = Q(4000);
                s.clocks.segment = Q(200);
                s.faults = {{a, seed % 2 ? Behaviour::Random : Behaviour::StateMimic, Q(0), Q(5)},
                            {b, seed % 3 ? Behaviour::Equivocator : Behaviour::Spoiler, Q(0), Q(5)}};
                const RunResult r = run_scenario(s, seed);
                absorb(r, o, seed);
                const auto& m = r.metrics;
                if (m.contains("stabilisation") && m["stabilisation"]["found"].get<bool>())
                    worst_stab[label] = std::max(worst_stab[label], qd(m["stabilisation"]["t"]));
                if (m.contains("bits"))
                    for (const auto& [v, x] : m["bits"].items()) worst_ratio[label] = std::max(worst_ratio[label], qd(x["rate"]) / qd(x["budget"]));
                if (seed <= 3) replay.emplace_back(s, seed);
            }
        }
    });
    for (const auto& [label, t] : worst_stab) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "%s: latest stabilisation %.1f, worst bit rate %.3f x budget", label.c_str(), t,
                      worst_ratio[label]);
        o.notes.push_back(buf);
    }
    if (o.ok) o.detail = "200 runs stabilised with skew <= 2d and bit rate <= 2x budget";
    report(7, "Full recursion n=7, f=2", o, secs, kLimitRecursion);
}

// ---------------------------------------------------------------- 8

void determinism() {
    Outcome o;
    const double secs = timed([&] {
        for (const auto& [s, seed] : replay) {
            std::ostringstream a, b;
            RunOptions oa, ob;
            oa.csv = &a;
            ob.csv = &b;
            const RunResult r1 = run_scenario(s, seed, oa);
            const RunResult r2 = run_scenario(s, seed, ob);
            if (a.str() != b.str() || r1.trace_hash != r2.trace_hash) o.fail(r1.run_id + " differs on re-run");
        }
    });
    if (o.ok) o.detail = std::to_string(replay.size()) + " runs re-executed, traces byte-identical";
    report(8, "Deterministic traces", o, secs, 120);
}

// ---------------------------------------------------------------- 9

void lemma_suite() {
    Outcome o;
    for (const char* name : {"input-wait", "separation", "consistent-init", "resync-grouping", "resync-bounds"}) {
        auto it = lemmas.find(name);
        if (it == lemmas.end() || it->second.checked == 0) {
            o.fail(std::string(name) + " never exercised");
            continue;
        }
        const auto& t = it->second;
        o.notes.push_back(std::string(name) + ": " + std::to_string(t.checked) + " instances, " +
                          std::to_string(t.violations) + " violations");
        if (t.violations) o.fail(std::string(name) + ": " + t.examples.front());
    }
    if (o.ok) o.detail = "zero violations across criteria 5-7";
    report(9, "Trace-level lemma suite", o, 0, 1);
}

}  // namespace

int main() {
    st_pulser();
    consensus();
    mock();
    solvers();
    main_pulser();
    resync();
    recursion();
    determinism();
    lemma_suite();
    std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
