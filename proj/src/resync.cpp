#include "psync/resync.hpp"

#include <algorithm>
#include <bit>

namespace psync {

Partition partition_blocks(const std::vector<int>& members, int f) {
    Partition p;
    const size_t n0 = members.size() / 2;
    p.block[0].assign(members.begin(), members.begin() + static_cast<long>(n0));
    p.block[1].assign(members.begin() + static_cast<long>(n0), members.end());
    p.f[0] = (f - 1) / 2;
    p.f[1] = f - 1 - p.f[0];
    return p;
}

namespace {
enum Voter { IDLE, VOTE, LISTEN, PASS, GO, FAIL, LATE, PASS_SILENT, PASS_LATE };
enum Validator { WAIT, RESYNC, HOLD, IGNORE };
}  // namespace

GroupSpec resync_spec(const std::vector<int>& members, int f, const Partition& p, const ResyncTimeouts& r) {
    const int n = static_cast<int>(members.size());
    GroupSpec g;
    g.name = "resync";
    g.tags = {"pulse0", "pulse1", "vote0", "vote1"};
    g.signals = {"go0", "fail0", "go1", "fail1"};
    for (int h = 0; h < 2; ++h) {
        const std::string H = std::to_string(h);
        const size_t hs = static_cast<size_t>(h);
        g.timers.push_back({"T_max" + H, r.T_max[hs]});
        g.timers.push_back({"T_vote" + H, r.T_vote});
        g.timers.push_back({"T_min" + H, r.T_min[hs]});
        g.timers.push_back({"T_cool" + H, r.T_cool});
        uint64_t mask = 0;
        for (int v : p.block[hs]) mask |= 1ULL << v;
        g.buffers.push_back({"pulse" + H, h, true, r.T_idle, mask});
        g.buffers.push_back({"vote_att" + H, 2 + h, true, r.T_att});
        g.buffers.push_back({"vote_pass" + H, 2 + h, true, r.T_vote});
    }
    for (int h = 0; h < 2; ++h) {
        const std::string H = std::to_string(h);
        const int tmax = 4 * h, tvote = 4 * h + 1, tmin = 4 * h + 2, tcool = 4 * h + 3;
        const int bp = 3 * h, batt = 3 * h + 1, bpass = 3 * h + 2;
        const int go = 2 * h, fail = 2 * h + 1;
        const int nh = static_cast<int>(p.block[static_cast<size_t>(h)].size());
        const int fh = p.f[static_cast<size_t>(h)];

        MachineDef v;
        v.name = "voter" + H;
        v.states = {
            {"IDLE", false, -1, -1, {tmax}, {bp, batt, bpass}},
            {"VOTE", false, 2 + h, -1, {tvote}, {}},
            {"LISTEN", false, -1, -1, {tvote}, {}},
            {"PASS", false, -1, -1, {}, {}},
            {"GO", false, -1, go, {}, {}},
            {"FAIL", false, -1, fail, {}, {}},
            {"LATE_VOTE", false, 2 + h, -1, {}, {}},
            {"PASS_SILENT", false, -1, -1, {}, {}},
            {"PASS_LATE_VOTE", false, 2 + h, -1, {}, {}},
        };
        v.transitions = {
            {IDLE, VOTE, Guard::count(bp, Cmp::Ge, nh - fh), ""},
            {IDLE, LISTEN, Guard::count(batt, Cmp::Gt, f), ""},
            {IDLE, FAIL, Guard::timer(tmax), ""},
            {VOTE, PASS, Guard::count(bpass, Cmp::Ge, n - f), ""},
            {LISTEN, PASS_SILENT, Guard::count(bpass, Cmp::Ge, n - f), ""},
            {LISTEN, LATE, Guard::count(bp, Cmp::Ge, nh - fh), ""},
            {LATE, PASS, Guard::count(bpass, Cmp::Ge, n - f), ""},
            {LATE, FAIL, Guard::timer(tvote), ""},
            {VOTE, FAIL, Guard::timer(tvote), ""},
            {LISTEN, FAIL, Guard::timer(tvote), ""},
            {PASS, GO, Guard::timer(tvote), ""},
            {PASS_SILENT, PASS_LATE, Guard::count(bp, Cmp::Ge, nh - fh), ""},
            {PASS_SILENT, GO, Guard::timer(tvote), ""},
            {PASS_LATE, GO, Guard::timer(tvote), ""},
            {GO, IDLE, Guard::always(), ""},
            {FAIL, IDLE, Guard::always(), ""},
        };

        MachineDef w;
        w.name = "validator" + H;
        w.states = {
            {"WAIT", false, -1, -1, {}, {}},
            {"RESYNC", true, -1, -1, {}, {}},
            {"HOLD", false, -1, -1, {tmin}, {}},
            {"IGNORE", false, -1, -1, {tcool}, {}},
        };
        const Guard any = Guard::any({Guard::signal(go), Guard::signal(fail)});
        w.transitions = {
            {WAIT, RESYNC, Guard::signal(go), ""},
            {WAIT, IGNORE, Guard::signal(fail), ""},
            {RESYNC, HOLD, Guard::always(), ""},
            {HOLD, WAIT, Guard::timer(tmin), ""},
            {HOLD, IGNORE, any, ""},
            {IGNORE, IGNORE, Guard::signal(fail), ""},
            {IGNORE, WAIT, Guard::timer(tcool), ""},
        };
        g.machines.push_back(std::move(v));
        g.machines.push_back(std::move(w));
    }
    g.validate();
    return g;
}

ResyncNode::ResyncNode(const GroupSpec* spec, uint32_t inst, int node, std::vector<int> members, Q dedup)
    : MachineGroup(spec, inst, node, std::move(members)), dedup_(std::move(dedup)) {}

void ResyncNode::block_pulse(Engine& e, int h) {
    const size_t hs = static_cast<size_t>(h);
    const Q local = e.local(node_);
    if (has_block_[hs] && local < last_block_[hs] + dedup_) return;
    has_block_[hs] = true;
    last_block_[hs] = local;
    e.broadcast(node_, inst_, static_cast<uint16_t>(h));
}

void ResyncNode::on_pulse(Engine& e) {
    if (has_out_ && last_out_ == e.now()) return;
    has_out_ = true;
    last_out_ = e.now();
    e.record(node_, inst_, RecKind::Note, NoteOutput);
    if (out_) out_(e);
}

// ------------------------------------------------------------ trace checks

ResyncTrace collect_resync(const std::vector<Record>& recs, uint32_t inst, const GroupSpec& spec, int n) {
    ResyncTrace tr;
    for (auto& b : tr.resync) b.resize(static_cast<size_t>(n));
    tr.outputs.resize(static_cast<size_t>(n));
    const int val0 = spec.machine("validator0"), val1 = spec.machine("validator1");
    for (const auto& r : recs) {
        if (r.inst != inst) continue;
        if (r.kind == RecKind::Pulse) {
            if (r.a == val0) tr.resync[0][r.node].push_back(r.t);
            if (r.a == val1) tr.resync[1][r.node].push_back(r.t);
        } else if (r.kind == RecKind::Note && r.a == ResyncNode::NoteOutput) {
            tr.outputs[r.node].push_back(r.t);
        }
    }
    return tr;
}

std::vector<Q> check_good_resync(const ResyncTrace& tr, const std::vector<int>& correct, const Q& rho, const Q& psi,
                                 const Q& t_end) {
    std::vector<std::pair<Q, int>> all;
    for (int v : correct)
        for (const Q& t : tr.outputs[static_cast<size_t>(v)]) all.emplace_back(t, v);
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Q> good;
    for (size_t i = 0; i < all.size(); ++i) {
        if (i && all[i - 1].first == all[i].first) continue;
        const Q& t = all[i].first;
        if (t_end < t + rho + psi) break;
        uint64_t seen = 0;
        bool ok = true;
        size_t j = i;
        for (; j < all.size() && all[j].first < t + rho; ++j) {
            const uint64_t bit = 1ULL << all[j].second;
            if (seen & bit) ok = false;
            seen |= bit;
        }
        if (std::popcount(seen) != static_cast<int>(correct.size())) ok = false;
        if (j < all.size() && all[j].first < t + rho + psi) ok = false;
        if (ok) good.push_back(t);
    }
    return good;
}

namespace {

std::string at(const Q& t, int node, int h) {
    return "block " + std::to_string(h) + " node " + std::to_string(node) + " t=" + t.decimal(3);
}

}  // namespace

LemmaTally check_grouping(const ResyncTrace& tr, const std::vector<int>& correct, const ResyncTimeouts& r,
                          const Q& t_end) {
    LemmaTally tally;
    tally.name = "resync-grouping";
    const Q& d = r.in.d;
    const Q W = Q(2) * (r.T_vote + d);
    const Q C = r.T_cool / r.in.theta;
    for (int h = 0; h < 2; ++h) {
        const auto& rs = tr.resync[static_cast<size_t>(h)];
        for (int v : correct)
            for (const Q& t : rs[static_cast<size_t>(v)]) {
                if (t < r.T_star || t_end < t + C) continue;
                const Q lo = t - Q(2) * r.T_vote - d;
                std::vector<Q> cand{lo, t};
                for (int u : correct)
                    for (const Q& x : rs[static_cast<size_t>(u)])
                        for (const Q& y : {x, x - W, x - C})
                            if (!(y < lo) && !(t < y)) cand.push_back(y);
                std::sort(cand.begin(), cand.end());
                cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
                const size_t base = cand.size();
                for (size_t i = 0; i + 1 < base; ++i) cand.push_back((cand[i] + cand[i + 1]) / Q(2));
                bool found = false;
                for (const Q& ts : cand) {
                    bool all = true;
                    for (int u : correct) {
                        const auto& xs = rs[static_cast<size_t>(u)];
                        auto it = std::lower_bound(xs.begin(), xs.end(), ts);
                        if (it == xs.end()) continue;
                        if (!(ts + W < *it) || !(*it < ts + C)) continue;
                        all = false;
                        break;
                    }
                    if (all) {
                        found = true;
                        break;
                    }
                }
                tally.add(found, at(t, v, h));
            }
    }
    return tally;
}

LemmaTally check_resync_bounds(const ResyncTrace& tr, const std::vector<int>& correct, const ResyncTimeouts& r, int k,
                               const Q& t_end) {
    LemmaTally tally;
    tally.name = "resync-bounds";
    const Q C = r.T_cool / r.in.theta;
    Q rk0;
    bool has_rk0 = false;
    if (k >= 0)
        for (int v : correct)
            for (const Q& t : tr.resync[static_cast<size_t>(k)][static_cast<size_t>(v)])
                if (!(t < r.T_star)) {
                    if (!has_rk0 || t < rk0) rk0 = t;
                    has_rk0 = true;
                    break;
                }
    for (int h = 0; h < 2; ++h) {
        const Q& lm = r.lambda_minus[static_cast<size_t>(h)];
        const Q& lp = r.lambda_plus[static_cast<size_t>(h)];
        for (int v : correct) {
            const auto& xs = tr.resync[static_cast<size_t>(h)][static_cast<size_t>(v)];
            for (size_t i = 0; i < xs.size(); ++i) {
                const bool strict = h == k && has_rk0 && !(xs[i] < rk0);
                if (i + 1 < xs.size()) {
                    const Q gap = xs[i + 1] - xs[i];
                    const bool regular = !(gap < lm) && !(lp < gap);
                    const bool cooled = !(gap < C);
                    tally.add(regular || (!strict && cooled), at(xs[i], v, h) + " gap " + gap.decimal(3));
                } else {
                    const Q rest = t_end - xs[i];
                    if (!(lp < rest)) continue;
                    if (strict || rest < C) {
                        if (strict) tally.add(false, at(xs[i], v, h) + " no successor");
                        continue;
                    }
                    tally.add(true, "");
                }
            }
        }
    }
    return tally;
}

}  // namespace psync
