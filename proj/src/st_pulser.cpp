#include "psync/st_pulser.hpp"

#include <algorithm>

namespace psync {

GroupSpec st_spec(int n, int f, const StTimeouts& st, bool embedded) {
    GroupSpec g;
    g.name = embedded ? "st-embedded" : "st";
    g.tags = {"propose"};
    g.signals = {"init"};
    if (embedded) g.signals.push_back("halt");
    g.timers = {{"T0", st.T0}, {"T1", st.T1}, {"T2", st.T2}, {"T3", st.T3}};
    g.buffers = {{"propose", 0, false, Q(0)}};
    MachineDef m;
    m.name = "st";
    enum { RESET, START, READY, PROPOSE, PULSE, OFF };
    m.states = {
        {"RESET", false, -1, -1, {0}, {}},
        {"START", false, -1, -1, {1}, {0}},
        {"READY", false, -1, -1, {3}, {0}},
        {"PROPOSE", false, 0, -1, {}, {}},
        {"PULSE", true, -1, -1, {2}, {}},
    };
    m.transitions.push_back({-1, RESET, Guard::signal(0), "init"});
    if (embedded) {
        m.states.push_back({"OFF", false, -1, -1, {}, {0}});
        m.initial = OFF;
        m.transitions.push_back({-1, OFF, Guard::signal(1), "halt"});
    }
    auto flags = [](Cmp c, int k) { return Guard::count(0, c, k); };
    m.transitions.push_back({RESET, START, Guard::timer(0), ""});
    m.transitions.push_back({START, PROPOSE, Guard::any({Guard::timer(1), flags(Cmp::Gt, f)}), ""});
    m.transitions.push_back({PROPOSE, PULSE, flags(Cmp::Ge, n - f), ""});
    m.transitions.push_back({PULSE, READY, Guard::timer(2), ""});
    m.transitions.push_back({READY, PROPOSE, Guard::any({Guard::timer(3), flags(Cmp::Gt, f)}), ""});
    g.machines.push_back(std::move(m));
    g.validate();
    return g;
}

StMeasure measure_st(const std::vector<Record>& recs, uint32_t inst, const std::vector<int>& correct,
                     const std::vector<Q>& after) {
    StMeasure m;
    m.nodes = correct;
    m.pulses.resize(correct.size());
    std::vector<int> idx(64, -1);
    for (size_t i = 0; i < correct.size(); ++i) idx[static_cast<size_t>(correct[i])] = static_cast<int>(i);
    for (const auto& r : recs) {
        if (r.inst != inst || r.kind != RecKind::Pulse) continue;
        int i = idx[r.node];
        if (i < 0 || r.t < after[r.node]) continue;
        m.pulses[static_cast<size_t>(i)].push_back(r.t);
    }
    m.count = SIZE_MAX;
    for (const auto& p : m.pulses) m.count = std::min(m.count, p.size());
    if (m.pulses.empty()) m.count = 0;
    for (size_t k = 0; k < m.count; ++k) {
        Q lo = m.pulses[0][k], hi = lo;
        for (const auto& p : m.pulses) {
            lo = qmin(lo, p[k]);
            hi = qmax(hi, p[k]);
        }
        m.start.push_back(lo);
        m.skew.push_back(hi - lo);
        if (k) m.gaps.push_back(lo - m.start[k - 1]);
    }
    return m;
}

}  // namespace psync
