#include "psync/main_pulser.hpp"

#include <algorithm>
#include <bit>

namespace psync {

namespace {
enum MainState { PULSE, WAIT, RECOVER };
enum AuxState { LISTEN, READ, INPUT0, INPUT1, RUN0, RUN1, OUTPUT0, OUTPUT1 };
}  // namespace

GroupSpec main_spec(int n, int f, const MainTimeouts& m) {
    GroupSpec g;
    g.name = "main";
    g.tags = {"pulse", "wait"};
    g.signals = {"done1", "done0", "out1", "out0"};
    g.timers = {{"T1", m.T1},           {"T_wait", m.T_wait},           {"T_listen", m.T_listen},
                {"T2", m.T2},           {"T_consensus", m.T_consensus}, {"T_active", m.T_active}};
    enum { T1, TW, TL, T2, TC, TA };
    g.buffers = {{"pulse", 0, true, Q(2) * m.T1}, {"wait", 1, true, m.T_listen}};
    enum { BP, BW };
    enum { DONE1, DONE0, OUT1, OUT0 };

    MachineDef mm;
    mm.name = "main";
    mm.states = {
        {"PULSE", true, 0, -1, {T1}, {}},
        {"WAIT", false, 1, -1, {TW}, {}},
        {"RECOVER", false, -1, -1, {}, {}},
    };
    mm.transitions = {
        {PULSE, WAIT, Guard::all({Guard::timer(T1), Guard::count(BP, Cmp::Ge, n - f)}), ""},
        {PULSE, RECOVER, Guard::timer(T1), ""},
        {WAIT, PULSE, Guard::signal(OUT1), ""},
        {RECOVER, PULSE, Guard::signal(OUT1), ""},
        {WAIT, RECOVER, Guard::any({Guard::timer(TW), Guard::signal(OUT0)}), ""},
    };

    MachineDef ax;
    ax.name = "aux";
    ax.states = {
        {"LISTEN", false, -1, -1, {}, {}},
        {"READ", false, -1, -1, {TL}, {}},
        {"INPUT0", false, -1, -1, {T2}, {}},
        {"INPUT1", false, -1, -1, {T2}, {}},
        {"RUN0", false, -1, -1, {TC}, {}},
        {"RUN1", false, -1, -1, {TC}, {}},
        {"OUTPUT0", false, -1, OUT0, {}, {}},
        {"OUTPUT1", false, -1, OUT1, {}, {}},
    };
    const Guard recover = Guard::state_is(0, RECOVER);
    const Guard fresh_wait = Guard::all({Guard::received(1), Guard::count(BW, Cmp::Gt, f)});
    ax.transitions = {
        {LISTEN, RUN1, Guard::all({Guard::expiry(TA), recover}), "G3"},
        {LISTEN, READ, Guard::count(BW, Cmp::Gt, f), "G4"},
        {READ, INPUT1, Guard::count(BW, Cmp::Ge, n - f), ""},
        {READ, INPUT0, Guard::timer(TL), ""},
        {INPUT0, INPUT0, fresh_wait, "G4"},
        {INPUT1, INPUT1, fresh_wait, "G4"},
        {INPUT1, RUN1, Guard::all({Guard::timer(T2), Guard::negate(recover)}), ""},
        {INPUT1, RUN0, Guard::all({Guard::timer(T2), recover}), ""},
        {INPUT0, RUN0, Guard::timer(T2), ""},
        {RUN0, OUTPUT1, Guard::signal(DONE1), ""},
        {RUN1, OUTPUT1, Guard::signal(DONE1), ""},
        {RUN0, OUTPUT0, Guard::any({Guard::signal(DONE0), Guard::timer(TC)}), ""},
        {RUN1, OUTPUT0, Guard::any({Guard::signal(DONE0), Guard::timer(TC)}), ""},
        {RUN0, READ, fresh_wait, "G4"},
        {RUN1, READ, fresh_wait, "G4"},
        {OUTPUT0, LISTEN, Guard::always(), ""},
        {OUTPUT1, LISTEN, Guard::always(), ""},
    };
    g.machines = {std::move(mm), std::move(ax)};
    g.validate();
    return g;
}

MainNode::MainNode(const GroupSpec* spec, uint32_t inst, int node, std::vector<int> members, ConsensusNode* cons)
    : MachineGroup(spec, inst, node, std::move(members)), cons_(cons) {
    aux_ = spec_->machine("aux");
    run0_ = spec_->state(aux_, "RUN0");
    run1_ = spec_->state(aux_, "RUN1");
    t_active_ = spec_->timer("T_active");
    if (cons_) cons_->set_done([this](Engine& e, int y) { consensus_done(e, y); });
}

void MainNode::on_start(Engine& e, int node) {
    prev_aux_ = state(aux_);
    if (clean_start())
        reset_timer(e, t_active_);
    else
        MachineGroup::on_start(e, node);
}

void MainNode::resync(Engine& e) {
    e.record(node_, inst_, RecKind::Note, NoteResync);
    reset_timer(e, t_active_);
}

void MainNode::consensus_done(Engine& e, int output) { raise(e, spec_->signal(output ? "done1" : "done0")); }

void MainNode::on_enter(Engine& e, int machine, int s) {
    if (machine != aux_) return;
    const bool was_run = prev_aux_ == run0_ || prev_aux_ == run1_;
    prev_aux_ = s;
    if (!cons_) return;
    if (s == run0_ || s == run1_) {
        cons_->start_run(e, s == run1_ ? 1 : 0);
    } else if (was_run) {
        if (cons_->running()) {
            ++aborts_;
            e.record(node_, inst_, RecKind::Note, NoteAbort);
        }
        cons_->halt(e);
    }
}

void MainNode::on_pulse(Engine& e) {
    if (pulse_hook_) pulse_hook_(e);
}

// ------------------------------------------------------------ stabilisation

Stabilisation detect_stabilisation(const std::vector<Record>& recs, uint32_t inst, const std::vector<int>& correct,
                                   const Q& phi_minus, const Q& phi_plus, const Q& sigma, const Q& t_end) {
    std::vector<std::pair<Q, int>> p;
    uint64_t mask = 0;
    for (int v : correct) mask |= 1ULL << v;
    for (const auto& r : recs)
        if (r.inst == inst && r.kind == RecKind::Pulse && ((mask >> r.node) & 1ULL)) p.emplace_back(r.t, r.node);
    std::stable_sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const size_t P = p.size();
    const size_t k = correct.size();
    std::vector<uint8_t> good(P + 1, 0);
    std::vector<size_t> next(P + 1, P);
    for (size_t i = P; i-- > 0;) {
        size_t j = i;
        uint64_t seen = 0;
        bool distinct = true;
        while (j < P && p[j].first < p[i].first + sigma) {
            uint64_t bit = 1ULL << p[j].second;
            if (seen & bit) distinct = false;
            seen |= bit;
            ++j;
        }
        next[i] = j;
        const size_t size = j - i;
        if (!distinct) continue;
        if (size == k) {
            if (j == P)
                good[i] = t_end < p[i].first + phi_plus;
            else {
                Q gap = p[j].first - p[i].first;
                good[i] = !(gap < phi_minus) && !(phi_plus < gap) && good[j];
            }
        } else if (j == P && size < k) {
            good[i] = t_end < p[i].first + sigma;
        }
    }
    Stabilisation s;
    for (size_t i = 0; i < P; ++i) {
        if (!good[i]) continue;
        s.found = true;
        s.t = p[i].first;
        s.conclusive = !(t_end - s.t < Q(3) * phi_plus);
        bool first = true;
        for (size_t g = i; g < P; g = next[g]) {
            const size_t j = next[g];
            if (j - g == k) s.max_skew = qmax(s.max_skew, p[j - 1].first - p[g].first);
            ++s.groups;
            if (j < P) {
                Q gap = p[j].first - p[g].first;
                if (first) {
                    s.min_gap = s.max_gap = gap;
                    first = false;
                } else {
                    s.min_gap = qmin(s.min_gap, gap);
                    s.max_gap = qmax(s.max_gap, gap);
                }
            }
        }
        break;
    }
    return s;
}

// ------------------------------------------------------------ lemma checks

void LemmaTally::add(bool ok, const std::string& what) {
    ++checked;
    if (ok) return;
    ++violations;
    if (examples.size() < 5) examples.push_back(what);
}

void LemmaTally::merge(const LemmaTally& o) {
    checked += o.checked;
    violations += o.violations;
    for (const auto& x : o.examples)
        if (examples.size() < 5) examples.push_back(x);
}

namespace {

struct Entry {
    Q t;
    int node;
};

struct MainTrace {
    std::vector<Entry> waits, input1, runs, g3;
};

MainTrace collect(const std::vector<Record>& recs, uint32_t inst, const GroupSpec& spec, const std::vector<int>& correct) {
    uint64_t mask = 0;
    for (int v : correct) mask |= 1ULL << v;
    const int main = spec.machine("main"), aux = spec.machine("aux");
    const int wait = spec.state(main, "WAIT");
    const int listen = spec.state(aux, "LISTEN"), in1 = spec.state(aux, "INPUT1");
    const int run0 = spec.state(aux, "RUN0"), run1 = spec.state(aux, "RUN1");
    MainTrace tr;
    for (const auto& r : recs) {
        if (r.inst != inst || r.kind != RecKind::Transition || !((mask >> r.node) & 1ULL)) continue;
        if (r.a == main && r.c == wait) tr.waits.push_back({r.t, r.node});
        if (r.a != aux) continue;
        if (r.c == in1 && r.b != in1) tr.input1.push_back({r.t, r.node});
        if (r.c == run0 || r.c == run1) tr.runs.push_back({r.t, r.node});
        if (r.b == listen && r.c == run1) tr.g3.push_back({r.t, r.node});
    }
    return tr;
}

// Entries with lo <= t < hi.
template <class F>
void each_in(const std::vector<Entry>& v, const Q& lo, const Q& hi, F f) {
    auto it = std::lower_bound(v.begin(), v.end(), lo, [](const Entry& e, const Q& x) { return e.t < x; });
    for (; it != v.end() && it->t < hi; ++it) f(*it);
}

bool any_in(const std::vector<Entry>& v, const Q& lo, const Q& hi) {
    bool hit = false;
    each_in(v, lo, hi, [&](const Entry&) { hit = true; });
    return hit;
}

std::string at(const Q& t, int node) { return "t=" + t.decimal(3) + " node " + std::to_string(node); }

}  // namespace

LemmaTally check_input_wait(const std::vector<Record>& recs, uint32_t inst, const GroupSpec& spec,
                            const std::vector<int>& correct, int f, const MainTimeouts& m, const Q& t_end) {
    (void)t_end;
    LemmaTally tally;
    tally.name = "input-wait";
    const MainTrace tr = collect(recs, inst, spec, correct);
    const Q& d = m.in.d;
    for (const auto& e : tr.input1) {
        if (e.t < m.T_listen + d) continue;
        uint64_t who = 0;
        // (t - T_listen - d, t]
        for (auto it = std::upper_bound(tr.waits.begin(), tr.waits.end(), e.t - m.T_listen - d,
                                        [](const Q& x, const Entry& w) { return x < w.t; });
             it != tr.waits.end() && !(e.t < it->t); ++it)
            who |= 1ULL << it->node;
        tally.add(std::popcount(who) > f, at(e.t, e.node) + ": " + std::to_string(std::popcount(who)) + " waits");
    }
    return tally;
}

LemmaTally check_separation(const std::vector<Record>& recs, uint32_t inst, const GroupSpec& spec,
                            const std::vector<int>& correct, int f, const MainTimeouts& m, const Q& t_end) {
    (void)f;
    LemmaTally tally;
    tally.name = "separation";
    const MainTrace tr = collect(recs, inst, spec, correct);
    const Q& d = m.in.d;
    const Q& th = m.in.theta;
    const Q settle = Q(3) * m.T1 + m.T_listen + Q(2) * d;
    for (const auto& e : tr.waits) {
        if (e.t < settle) continue;
        const Q lo = e.t + Q(3) * m.T1 + d;
        const Q hi = e.t + m.T2 / th - Q(2) * m.T1 - d;
        if (t_end < hi) continue;
        if (any_in(tr.g3, e.t - settle, e.t + m.T2 / th)) continue;
        std::string bad;
        each_in(tr.waits, lo, hi, [&](const Entry& w) {
            if (bad.empty()) bad = " vs WAIT at " + at(w.t, w.node);
        });
        tally.add(bad.empty(), at(e.t, e.node) + bad);
    }
    return tally;
}

LemmaTally check_consistent_init(const std::vector<Record>& recs, uint32_t inst, const GroupSpec& spec,
                                 const std::vector<int>& correct, int f, const MainTimeouts& m, const Q& t_end) {
    (void)f;
    LemmaTally tally;
    tally.name = "consistent-init";
    const MainTrace tr = collect(recs, inst, spec, correct);
    const Q& d = m.in.d;
    const Q& th = m.in.theta;
    for (const auto& e : tr.input1) {
        if (e.t < m.T_listen + d) continue;
        const Q t0 = e.t - m.T_listen - d + m.T2 / th;
        if (t_end < t0 + m.tau) continue;
        if (any_in(tr.g3, e.t - m.T_listen - Q(3) * m.T1 - Q(3) * d, t0 + m.tau)) continue;
        uint64_t who = 0;
        each_in(tr.runs, t0, t0 + m.tau, [&](const Entry& r) { who |= 1ULL << r.node; });
        std::string missing;
        for (int v : correct)
            if (!((who >> v) & 1ULL)) missing += " " + std::to_string(v);
        tally.add(missing.empty(), at(e.t, e.node) + ": no run in window at" + missing);
    }
    return tally;
}

}  // namespace psync
