#include "psync/machine.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace psync {

namespace {

int find(const std::vector<std::string>& v, const std::string& s, const char* what) {
    auto it = std::find(v.begin(), v.end(), s);
    if (it == v.end()) throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
    return static_cast<int>(it - v.begin());
}

template <class T>
int find_named(const std::vector<T>& v, const std::string& s, const char* what) {
    for (size_t i = 0; i < v.size(); ++i)
        if (v[i].name == s) return static_cast<int>(i);
    throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
}

void collect(const Guard& g, uint64_t& signals, bool& received, std::vector<int>& timers) {
    switch (g.kind) {
    case Guard::Kind::Signal: signals |= 1ULL << g.a; break;
    case Guard::Kind::Received: received = true; break;
    case Guard::Kind::Timer: timers.push_back(g.a); break;
    default: break;
    }
    for (const auto& k : g.kids) collect(k, signals, received, timers);
}

}  // namespace

int GroupSpec::tag(const std::string& s) const { return find(tags, s, "tag"); }
int GroupSpec::signal(const std::string& s) const { return find(signals, s, "signal"); }
int GroupSpec::timer(const std::string& s) const { return find_named(timers, s, "timer"); }
int GroupSpec::buffer(const std::string& s) const { return find_named(buffers, s, "buffer"); }
int GroupSpec::machine(const std::string& s) const { return find_named(machines, s, "machine"); }
int GroupSpec::state(int m, const std::string& s) const {
    return find_named(machines[static_cast<size_t>(m)].states, s, "state");
}

void GroupSpec::validate() const {
    auto bad = [&](const std::string& why) { throw std::invalid_argument(name + ": " + why); };
    if (signals.size() > 64) bad("too many signals");
    for (const auto& b : buffers) {
        if (b.tag < 0 || b.tag >= static_cast<int>(tags.size())) bad("buffer " + b.name + " has no tag");
        if (b.window && b.length.sign() <= 0) bad("window " + b.name + " needs positive length");
    }
    std::function<void(const Guard&)> check = [&](const Guard& g) {
        switch (g.kind) {
        case Guard::Kind::Timer:
        case Guard::Kind::Expiry:
            if (g.a < 0 || g.a >= static_cast<int>(timers.size())) bad("guard references unknown timer");
            break;
        case Guard::Kind::Count:
            if (g.a < 0 || g.a >= static_cast<int>(buffers.size())) bad("guard references unknown buffer");
            break;
        case Guard::Kind::Signal:
            if (g.a < 0 || g.a >= static_cast<int>(signals.size())) bad("guard references unknown signal");
            break;
        case Guard::Kind::Received:
            if (g.a < 0 || g.a >= static_cast<int>(tags.size())) bad("guard references unknown tag");
            break;
        case Guard::Kind::StateIs:
            if (g.a < 0 || g.a >= static_cast<int>(machines.size()) || g.b < 0 ||
                g.b >= static_cast<int>(machines[static_cast<size_t>(g.a)].states.size()))
                bad("guard references unknown state");
            break;
        case Guard::Kind::Not:
            if (g.kids.size() != 1) bad("negation takes one operand");
            break;
        default: break;
        }
        for (const auto& k : g.kids) check(k);
    };
    for (const auto& m : machines) {
        const int ns = static_cast<int>(m.states.size());
        if (m.initial < 0 || m.initial >= ns) bad(m.name + ": bad initial state");
        for (const auto& s : m.states) {
            if (s.broadcast >= static_cast<int>(tags.size())) bad(s.name + ": unknown broadcast tag");
            if (s.emit >= static_cast<int>(signals.size())) bad(s.name + ": unknown emitted signal");
            for (int t : s.reset_timers)
                if (t < 0 || t >= static_cast<int>(timers.size())) bad(s.name + ": unknown timer reset");
            for (int b : s.clear_buffers)
                if (b < 0 || b >= static_cast<int>(buffers.size())) bad(s.name + ": unknown buffer clear");
        }
        for (const auto& t : m.transitions) {
            if (t.from < -1 || t.from >= ns || t.to < 0 || t.to >= ns) bad(m.name + ": transition out of range");
            check(t.guard);
        }
    }
}

std::string GroupSpec::guard_str(const Guard& g) const {
    auto join = [&](const char* op) {
        std::string s = "(";
        for (size_t i = 0; i < g.kids.size(); ++i) {
            if (i) s += op;
            s += guard_str(g.kids[i]);
        }
        return s + ")";
    };
    switch (g.kind) {
    case Guard::Kind::True: return "true";
    case Guard::Kind::Timer: return "<" + timers[static_cast<size_t>(g.a)].name + ">";
    case Guard::Kind::Expiry: return "expiry <" + timers[static_cast<size_t>(g.a)].name + ">";
    case Guard::Kind::Count:
        return "#" + buffers[static_cast<size_t>(g.a)].name + (g.cmp == Cmp::Ge ? " >= " : " > ") + std::to_string(g.k);
    case Guard::Kind::Signal: return "signal " + signals[static_cast<size_t>(g.a)];
    case Guard::Kind::StateIs:
        return machines[static_cast<size_t>(g.a)].name + " in " +
               machines[static_cast<size_t>(g.a)].states[static_cast<size_t>(g.b)].name;
    case Guard::Kind::Received: return "received " + tags[static_cast<size_t>(g.a)];
    case Guard::Kind::And: return join(" and ");
    case Guard::Kind::Or: return join(" or ");
    case Guard::Kind::Not: return "not " + guard_str(g.kids[0]);
    }
    return "?";
}

std::string GroupSpec::dump() const {
    std::ostringstream os;
    os << "group " << name << "\n";
    os << "  tags:";
    for (const auto& t : tags) os << ' ' << t;
    os << "\n  signals:";
    for (const auto& s : signals) os << ' ' << s;
    os << "\n  timers:\n";
    for (const auto& t : timers) os << "    " << t.name << " = " << t.duration << " (" << t.duration.decimal(4) << ")\n";
    os << "  buffers:\n";
    for (const auto& b : buffers) {
        os << "    " << b.name << ": " << tags[static_cast<size_t>(b.tag)];
        if (b.senders != ~0ULL) {
            os << " from {";
            bool first = true;
            for (int v = 0; v < 64; ++v)
                if ((b.senders >> v) & 1ULL) {
                    os << (first ? "" : ",") << v;
                    first = false;
                }
            os << "}";
        }
        if (b.window)
            os << " sliding window " << b.length << " (" << b.length.decimal(4) << ")\n";
        else
            os << " memory flags\n";
    }
    for (const auto& m : machines) {
        os << "  machine " << m.name << " (initial " << m.states[static_cast<size_t>(m.initial)].name << ")\n";
        for (const auto& s : m.states) {
            os << "    state " << s.name;
            if (s.pulse) os << " [pulse]";
            if (s.broadcast >= 0) os << " [broadcast " << tags[static_cast<size_t>(s.broadcast)] << "]";
            if (s.emit >= 0) os << " [emit " << signals[static_cast<size_t>(s.emit)] << "]";
            for (int t : s.reset_timers) os << " [reset " << timers[static_cast<size_t>(t)].name << "]";
            for (int b : s.clear_buffers) os << " [clear " << buffers[static_cast<size_t>(b)].name << "]";
            os << "\n";
        }
        for (const auto& t : m.transitions) {
            os << "    " << (t.from < 0 ? std::string("*") : m.states[static_cast<size_t>(t.from)].name) << " -> "
               << m.states[static_cast<size_t>(t.to)].name << " : " << guard_str(t.guard);
            if (!t.label.empty()) os << "   # " << t.label;
            os << "\n";
        }
    }
    return os.str();
}

// ---------------------------------------------------------------- runtime

MachineGroup::MachineGroup(const GroupSpec* spec, uint32_t inst, int node, std::vector<int> members)
    : spec_(spec), inst_(inst), node_(node), members_(std::move(members)) {
    const size_t nm = spec_->machines.size();
    cur_.resize(nm);
    for (size_t m = 0; m < nm; ++m) cur_[m] = spec_->machines[m].initial;
    expiry_.assign(spec_->timers.size(), Q(0));
    fired_.assign(spec_->timers.size(), 1);
    edge_.assign(spec_->timers.size(), 0);
    flags_.assign(spec_->buffers.size(), 0);
    int maxnode = 0;
    for (int v : members_) maxnode = std::max(maxnode, v);
    if (maxnode >= 64) throw std::invalid_argument("node ids must be below 64");
    window_.assign(spec_->buffers.size(), std::vector<Q>(static_cast<size_t>(maxnode) + 1));
    window_has_.assign(spec_->buffers.size(), 0);
    pending_.assign(nm, 0);
    stimulus_.assign(nm, -1);
    buffers_of_tag_.resize(spec_->tags.size());
    for (size_t b = 0; b < spec_->buffers.size(); ++b)
        buffers_of_tag_[static_cast<size_t>(spec_->buffers[b].tag)].push_back(static_cast<int>(b));
    std::function<void(const Guard&)> edges = [&](const Guard& g) {
        if (g.kind == Guard::Kind::Expiry) edge_timers_.push_back(g.a);
        for (const auto& k : g.kids) edges(k);
    };
    for (const auto& md : spec_->machines)
        for (const auto& t : md.transitions) edges(t.guard);
    std::sort(edge_timers_.begin(), edge_timers_.end());
    edge_timers_.erase(std::unique(edge_timers_.begin(), edge_timers_.end()), edge_timers_.end());
    trans_signals_.resize(nm);
    trans_received_.resize(nm);
    timers_of_state_.resize(nm);
    for (size_t m = 0; m < nm; ++m) {
        const auto& md = spec_->machines[m];
        timers_of_state_[m].resize(md.states.size());
        std::vector<int> wild;
        for (const auto& t : md.transitions) {
            uint64_t sig = 0;
            bool rec = false;
            std::vector<int> tm;
            collect(t.guard, sig, rec, tm);
            trans_signals_[m].push_back(sig);
            trans_received_[m].push_back(rec ? 1 : 0);
            if (t.from < 0) {
                wild.insert(wild.end(), tm.begin(), tm.end());
            } else {
                auto& dst = timers_of_state_[m][static_cast<size_t>(t.from)];
                dst.insert(dst.end(), tm.begin(), tm.end());
            }
        }
        for (auto& v : timers_of_state_[m]) {
            v.insert(v.end(), wild.begin(), wild.end());
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }
    }
}

int MachineGroup::count(const Q& local, int buf) const {
    const BufferDef& bd = spec_->buffers[static_cast<size_t>(buf)];
    if (!bd.window) return std::popcount(flags_[static_cast<size_t>(buf)]);
    uint64_t has = window_has_[static_cast<size_t>(buf)];
    if (!has) return 0;
    Q cutoff = local - bd.length;
    int c = 0;
    const auto& w = window_[static_cast<size_t>(buf)];
    while (has) {
        int v = std::countr_zero(has);
        has &= has - 1;
        if (cutoff < w[static_cast<size_t>(v)]) ++c;
    }
    return c;
}

bool MachineGroup::eval(const Guard& g, int m, const Q& local) const {
    switch (g.kind) {
    case Guard::Kind::True: return true;
    case Guard::Kind::Timer: return timer_expired(local, g.a);
    case Guard::Kind::Expiry: return edge_[static_cast<size_t>(g.a)] != 0;
    case Guard::Kind::Count: {
        int c = count(local, g.a);
        return g.cmp == Cmp::Ge ? c >= g.k : c > g.k;
    }
    case Guard::Kind::Signal: return (pending_[static_cast<size_t>(m)] >> g.a) & 1ULL;
    case Guard::Kind::StateIs: return cur_[static_cast<size_t>(g.a)] == g.b;
    case Guard::Kind::Received: return stimulus_[static_cast<size_t>(m)] == g.a;
    case Guard::Kind::And:
        for (const auto& k : g.kids)
            if (!eval(k, m, local)) return false;
        return true;
    case Guard::Kind::Or:
        for (const auto& k : g.kids)
            if (eval(k, m, local)) return true;
        return false;
    case Guard::Kind::Not: return !eval(g.kids[0], m, local);
    }
    return false;
}

void MachineGroup::enter(Engine& e, int m, int s, const Q& local) {
    const StateDef& sd = spec_->machines[static_cast<size_t>(m)].states[static_cast<size_t>(s)];
    int from = cur_[static_cast<size_t>(m)];
    cur_[static_cast<size_t>(m)] = s;
    e.record(node_, inst_, RecKind::Transition, static_cast<uint16_t>(m), static_cast<uint16_t>(from),
             static_cast<uint16_t>(s));
    for (int b : sd.clear_buffers) {
        flags_[static_cast<size_t>(b)] = 0;
        window_has_[static_cast<size_t>(b)] = 0;
    }
    for (int t : sd.reset_timers) {
        expiry_[static_cast<size_t>(t)] = local + spec_->timers[static_cast<size_t>(t)].duration;
        fired_[static_cast<size_t>(t)] = 0;
        edge_[static_cast<size_t>(t)] = 0;
    }
    if (sd.broadcast >= 0) e.broadcast(node_, inst_, static_cast<uint16_t>(sd.broadcast));
    if (sd.pulse) {
        e.record(node_, inst_, RecKind::Pulse, static_cast<uint16_t>(m), static_cast<uint16_t>(s));
        on_pulse(e);
    }
    if (sd.emit >= 0) {
        for (auto& p : pending_) p |= 1ULL << sd.emit;
        on_emit(e, sd.emit);
    }
    on_enter(e, m, s);
}

void MachineGroup::step(Engine& e) {
    const Q local = e.local(node_);
    if (!started_) {
        started_ = true;
        if (clean_start_)
            for (size_t m = 0; m < cur_.size(); ++m) enter(e, static_cast<int>(m), spec_->machines[m].initial, local);
    }
    for (int t : edge_timers_)
        if (!fired_[static_cast<size_t>(t)] && timer_expired(local, t)) {
            fired_[static_cast<size_t>(t)] = 1;
            edge_[static_cast<size_t>(t)] = 1;
        }
    const size_t nm = cur_.size();
    int budget = 16 * static_cast<int>(nm) + 16;
    bool moved = true;
    while (moved) {
        moved = false;
        for (size_t m = 0; m < nm && !moved; ++m) {
            const auto& md = spec_->machines[m];
            for (size_t i = 0; i < md.transitions.size(); ++i) {
                const auto& t = md.transitions[i];
                if (t.from >= 0 && t.from != cur_[m]) continue;
                if (!eval(t.guard, static_cast<int>(m), local)) continue;
                if (--budget < 0)
                    throw CycleError(spec_->name + ": zero-delay transition cycle at node " + std::to_string(node_) +
                                     ", t=" + e.now().str() + ", machine " + md.name + " state " +
                                     md.states[static_cast<size_t>(cur_[m])].name);
                pending_[m] &= ~trans_signals_[m][i];
                if (trans_received_[m][i]) stimulus_[m] = -1;
                enter(e, static_cast<int>(m), t.to, local);
                moved = true;
                break;
            }
        }
    }
    std::fill(pending_.begin(), pending_.end(), 0);
    std::fill(stimulus_.begin(), stimulus_.end(), -1);
    std::fill(edge_.begin(), edge_.end(), 0);
    schedule(e, local);
}

void MachineGroup::reset_timer(Engine& e, int t) {
    const Q local = e.local(node_);
    expiry_[static_cast<size_t>(t)] = local + spec_->timers[static_cast<size_t>(t)].duration;
    fired_[static_cast<size_t>(t)] = 0;
    step(e);
}

void MachineGroup::post_signal(int signal) {
    for (auto& p : pending_) p |= 1ULL << signal;
}

void MachineGroup::schedule(Engine& e, const Q& local) {
    const Q* best = nullptr;
    for (size_t m = 0; m < cur_.size(); ++m)
        for (int t : timers_of_state_[m][static_cast<size_t>(cur_[m])]) {
            const Q& x = expiry_[static_cast<size_t>(t)];
            if (local < x && (!best || x < *best)) best = &x;
        }
    for (int t : edge_timers_) {
        const Q& x = expiry_[static_cast<size_t>(t)];
        if (!fired_[static_cast<size_t>(t)] && local < x && (!best || x < *best)) best = &x;
    }
    if (best) e.wake_local(node_, inst_, *best);
}

void MachineGroup::on_start(Engine& e, int) { step(e); }

void MachineGroup::on_message(Engine& e, int, int from, uint16_t tag, const std::string& payload) {
    if (tag >= spec_->tags.size()) {
        on_foreign(e, from, tag, payload);
        return;
    }
    if (std::find(members_.begin(), members_.end(), from) == members_.end()) return;
    const auto& bufs = buffers_of_tag_[tag];
    if (!bufs.empty()) {
        const Q local = e.local(node_);
        for (int b : bufs) {
            if (!((spec_->buffers[static_cast<size_t>(b)].senders >> from) & 1ULL)) continue;
            if (spec_->buffers[static_cast<size_t>(b)].window) {
                window_[static_cast<size_t>(b)][static_cast<size_t>(from)] = local;
                window_has_[static_cast<size_t>(b)] |= 1ULL << from;
            } else {
                flags_[static_cast<size_t>(b)] |= 1ULL << from;
            }
        }
    }
    std::fill(stimulus_.begin(), stimulus_.end(), static_cast<int>(tag));
    step(e);
}

void MachineGroup::on_wake(Engine& e, int) { step(e); }

void MachineGroup::on_signal(Engine& e, int, int signal) { raise(e, signal); }

void MachineGroup::raise(Engine& e, int signal) {
    for (auto& p : pending_) p |= 1ULL << signal;
    step(e);
}

void MachineGroup::randomize(Engine& e, Rng& rng) {
    clean_start_ = false;
    const Q local = e.local(node_);
    for (size_t m = 0; m < cur_.size(); ++m)
        cur_[m] = static_cast<int>(rng.below(spec_->machines[m].states.size()));
    for (size_t t = 0; t < expiry_.size(); ++t)
        expiry_[t] = local + spec_->timers[t].duration * Q(rng.range(0, 1000), 1000);
    for (int t : edge_timers_) fired_[static_cast<size_t>(t)] = 0;
    for (size_t b = 0; b < spec_->buffers.size(); ++b) {
        uint64_t mask = 0;
        for (int v : members_)
            if (rng.chance(0.5)) mask |= 1ULL << v;
        mask &= spec_->buffers[b].senders;
        if (spec_->buffers[b].window) {
            window_has_[b] = mask;
            for (int v : members_)
                if ((mask >> v) & 1ULL)
                    window_[b][static_cast<size_t>(v)] = local - spec_->buffers[b].length * Q(rng.range(0, 999), 1000);
        } else {
            flags_[b] = mask;
        }
    }
}

std::string MachineGroup::describe(const GroupSpec& spec, const Record& r) {
    if (r.a >= spec.machines.size()) return "?";
    const auto& md = spec.machines[r.a];
    auto sname = [&](uint16_t s) { return s < md.states.size() ? md.states[s].name : std::string("?"); };
    if (r.kind == RecKind::Transition) return md.name + ":" + sname(r.b) + "->" + sname(r.c);
    if (r.kind == RecKind::Pulse) return md.name + ":pulse";
    return md.name;
}

}  // namespace psync
