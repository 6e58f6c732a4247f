#include "psync/sim.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

namespace psync {

Rng::Rng(uint64_t seed) : gen_(seed ^ 0x9e3779b97f4a7c15ULL) {}

uint64_t Rng::next() { return gen_(); }

uint64_t Rng::below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return x % n;
}

int64_t Rng::range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo) + 1));
}

double Rng::unit() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

Rng Rng::fork(uint64_t salt) { return Rng(next() ^ (salt * 0xbf58476d1ce4e5b9ULL)); }

// ---------------------------------------------------------------- clocks

ClockFn::ClockFn() : ClockFn(Q(0), {{Q(0), Q(1)}}) {}

ClockFn::ClockFn(Q offset, std::vector<Segment> segments) : offset_(std::move(offset)), segs_(std::move(segments)) {
    if (segs_.empty() || segs_.front().start != Q(0)) throw std::invalid_argument("clock must start with a segment at t=0");
    base_.push_back(Q(0));
    for (size_t i = 1; i < segs_.size(); ++i) {
        if (!(segs_[i - 1].start < segs_[i].start)) throw std::invalid_argument("clock segment starts must increase");
        base_.push_back(base_.back() + segs_[i - 1].rate * (segs_[i].start - segs_[i - 1].start));
    }
}

ClockFn ClockFn::constant(Q rate, Q offset) { return ClockFn(std::move(offset), {{Q(0), std::move(rate)}}); }

Q ClockFn::read(const Q& t) const {
    if (segs_.size() == 1) return offset_ + segs_[0].rate * t;
    auto it = std::upper_bound(segs_.begin() + 1, segs_.end(), t,
                               [](const Q& x, const Segment& s) { return x < s.start; });
    const size_t i = static_cast<size_t>(it - segs_.begin()) - 1;
    return offset_ + base_[i] + segs_[i].rate * (t - segs_[i].start);
}

Q ClockFn::inverse(const Q& c) const {
    Q rel = c - offset_;
    if (rel.sign() <= 0) return Q(0);
    auto it = std::upper_bound(base_.begin() + 1, base_.end(), rel);
    const size_t i = static_cast<size_t>(it - base_.begin()) - 1;
    return segs_[i].start + (rel - base_[i]) / segs_[i].rate;
}

void ClockFn::validate(const Q& theta) const {
    if (offset_.sign() < 0) throw std::invalid_argument("clock offset must be non-negative");
    for (const auto& s : segs_)
        if (s.rate < Q(1) || s.rate > theta)
            throw std::invalid_argument("clock rate " + s.rate.str() + " outside [1, " + theta.str() + "]");
}

// ---------------------------------------------------------------- delays

DelayModel DelayModel::constant(Q d, Q delay) {
    DelayModel m;
    m.kind_ = Kind::Constant;
    m.d_ = std::move(d);
    m.delay_ = std::move(delay);
    if (m.delay_.sign() <= 0 || !(m.delay_ < m.d_)) throw DelayError("constant delay must lie in (0, d)");
    return m;
}

DelayModel DelayModel::per_edge(Q d, int n, std::vector<Q> table) {
    DelayModel m;
    m.kind_ = Kind::PerEdge;
    m.d_ = std::move(d);
    if (static_cast<int>(table.size()) != n * n) throw DelayError("per-edge delay table must be n*n");
    for (const auto& q : table)
        if (q.sign() <= 0 || !(q < m.d_)) throw DelayError("per-edge delay must lie in (0, d)");
    m.table_ = std::move(table);
    m.table_n_ = n;
    return m;
}

DelayModel DelayModel::random(Q d, uint64_t seed, int64_t grid, bool bimodal) {
    DelayModel m;
    m.kind_ = bimodal ? Kind::Bimodal : Kind::Random;
    m.d_ = std::move(d);
    m.rng_ = Rng(seed);
    if (grid < 4) throw DelayError("delay grid must be at least 4");
    m.grid_ = grid;
    return m;
}

DelayModel DelayModel::callback(Q d, Callback cb) {
    DelayModel m;
    m.kind_ = Kind::Callback;
    m.d_ = std::move(d);
    m.cb_ = std::move(cb);
    return m;
}

void DelayModel::reset_channels(int n) {
    n_ = n;
    ch_.assign(static_cast<size_t>(n) * static_cast<size_t>(n), Channel{});
}

DelayModel::Channel& DelayModel::channel(int from, int to) {
    return ch_[static_cast<size_t>(from) * static_cast<size_t>(n_) + static_cast<size_t>(to)];
}

Q DelayModel::deliver(int from, int to, const Q& t) {
    Channel& c = channel(from, to);
    Q at;
    switch (kind_) {
    case Kind::Constant:
        at = t + delay_;
        break;
    case Kind::PerEdge:
        at = t + table_[static_cast<size_t>(from * table_n_ + to)];
        break;
    case Kind::Random:
    case Kind::Bimodal: {
        Q step = d_ / Q(grid_);
        int64_t top = grid_ - 2;
        int64_t k;
        if (kind_ == Kind::Bimodal) {
            int64_t edge = std::max<int64_t>(1, grid_ / 50);
            double u = rng_.unit();
            if (u < 0.45)
                k = rng_.range(0, edge);
            else if (u < 0.9)
                k = rng_.range(top - edge, top);
            else
                k = rng_.range(0, top);
        } else {
            k = rng_.range(0, top);
        }
        at = t.next_multiple(step) + step * Q(k);
        if (c.used) {
            Q lower = (c.last_send == t) ? c.last_delivery : c.last_delivery + step;
            if (at < lower) at = lower;
        }
        break;
    }
    case Kind::Callback:
        at = t + cb_(from, to, t);
        break;
    }
    Q delay = at - t;
    if (delay.sign() <= 0 || !(delay < d_))
        throw DelayError("delay " + delay.str() + " on channel " + std::to_string(from) + "->" + std::to_string(to) +
                         " at t=" + t.str() + " outside (0, d)");
    if (c.used) {
        bool ok = (c.last_send == t) ? !(at < c.last_delivery) : (c.last_delivery < at);
        if (!ok)
            throw DelayError("delivery on channel " + std::to_string(from) + "->" + std::to_string(to) +
                             " breaks FIFO order at t=" + t.str());
    }
    c.used = true;
    c.last_send = t;
    c.last_delivery = at;
    return at;
}

// ---------------------------------------------------------------- engine

Engine::Engine(int n, DelayModel delays, std::vector<ClockFn> clocks)
    : n_(n), delays_(std::move(delays)), clocks_(std::move(clocks)), bits_(n, 0), msgs_(n, 0) {
    if (static_cast<int>(clocks_.size()) != n) throw std::invalid_argument("one clock per node required");
    delays_.reset_channels(n);
}

uint32_t Engine::add_instance(InstanceInfo info) {
    insts_.push_back(std::move(info));
    comps_.emplace_back(n_);
    pending_wake_.emplace_back(n_);
    has_wake_.emplace_back(n_, 0);
    inst_bits_.emplace_back(n_, 0);
    return static_cast<uint32_t>(insts_.size() - 1);
}

void Engine::attach(uint32_t inst, int node, std::unique_ptr<Component> c) { comps_[inst][node] = std::move(c); }

Component* Engine::component(uint32_t inst, int node) const { return comps_[inst][node].get(); }

void Engine::push(Event e) {
    e.seq = seq_++;
    heap_.push_back(std::move(e));
    std::push_heap(heap_.begin(), heap_.end(), Later{});
}

void Engine::send(int node, uint32_t inst, uint16_t tag, const std::string& payload, const std::vector<int>& to,
                  int bits) {
    if (faulty(node)) {
        adv_->on_faulty_send(*this, node, inst, tag, payload, to);
        return;
    }
    bits_[node] += static_cast<uint64_t>(bits);
    inst_bits_[inst][node] += static_cast<uint64_t>(bits);
    msgs_[node] += 1;
    for (int r : to) {
        Event e{delays_.deliver(node, r, now_), 0, EvKind::Delivery, static_cast<uint16_t>(r),
                static_cast<uint16_t>(node), inst, tag, 0, payload};
        push(std::move(e));
        if (faulty(r)) adv_->observe(*this, node, r, inst, tag, payload);
    }
}

void Engine::broadcast(int node, uint32_t inst, uint16_t tag, const std::string& payload, int bits) {
    send(node, inst, tag, payload, insts_[inst].members, bits);
}

void Engine::inject(int from, int to, uint32_t inst, uint16_t tag, const std::string& payload) {
    if (!faulty(from)) throw std::logic_error("only faulty nodes may inject messages");
    Event e{delays_.deliver(from, to, now_), 0, EvKind::Delivery, static_cast<uint16_t>(to),
            static_cast<uint16_t>(from), inst, tag, 0, payload};
    push(std::move(e));
}

void Engine::wake_local(int node, uint32_t inst, const Q& c) { wake_ref(node, inst, qmax(clocks_[node].inverse(c), now_)); }

void Engine::wake_ref(int node, uint32_t inst, const Q& t) {
    auto& has = has_wake_[inst][node];
    auto& pend = pending_wake_[inst][node];
    if (has && !(t < pend)) return;
    has = 1;
    pend = t;
    push(Event{t, 0, EvKind::Wake, static_cast<uint16_t>(node), 0, inst, 0, 0, {}});
}

void Engine::adversary_wake(int node, const Q& t, uint64_t token) {
    push(Event{qmax(t, now_), 0, EvKind::AdvWake, static_cast<uint16_t>(node), 0, 0, 0, token, {}});
}

void Engine::external_signal(int node, uint32_t inst, int signal, const Q& at) {
    push(Event{at, 0, EvKind::Signal, static_cast<uint16_t>(node), 0, inst, static_cast<uint16_t>(signal), 0, {}});
}

void Engine::signal_now(int node, uint32_t inst, int signal) {
    Component* c = component(inst, node);
    if (!c) return;
    if (faulty(node) && !adv_->runs_stack(node)) return;
    if (++depth_ > limits.max_signal_depth) {
        depth_ = 0;
        throw std::runtime_error("zero-delay signal cascade exceeded depth limit at node " + std::to_string(node) +
                                 ", t=" + now_.str());
    }
    c->on_signal(*this, node, signal);
    --depth_;
}

namespace {
inline void fnv(uint64_t& h, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 1099511628211ULL;
    }
}
}  // namespace

void Engine::record(int node, uint32_t inst, RecKind kind, uint16_t a, uint16_t b, uint16_t c, int64_t x) {
    if (now_.big()) {
        for (char ch : now_.str()) fnv(hash_, static_cast<uint8_t>(ch));
    } else {
        fnv(hash_, static_cast<uint64_t>(now_.num()));
        fnv(hash_, static_cast<uint64_t>(now_.den()));
    }
    fnv(hash_, static_cast<uint64_t>(node) | (static_cast<uint64_t>(inst) << 16) | (static_cast<uint64_t>(kind) << 48));
    fnv(hash_, static_cast<uint64_t>(a) | (static_cast<uint64_t>(b) << 16) | (static_cast<uint64_t>(c) << 32));
    fnv(hash_, static_cast<uint64_t>(x));
    const InstanceInfo& info = insts_[inst];
    bool keep = (kind == RecKind::Pulse) ? info.keep_pulses : (kind == RecKind::Note || info.keep_transitions);
    if (!keep) return;
    records_.push_back(Record{now_, static_cast<uint16_t>(node), inst, kind, a, b, c, x});
    if (csv_) {
        const Record& r = records_.back();
        *csv_ << run_id_ << ',' << r.t.str() << ',' << r.t.decimal(6) << ',' << r.node << ',' << kind_name(r.kind)
              << ',' << r.inst << ',' << r.a << ',' << r.b << ',' << r.c << ',' << r.x << ',' << describe(r) << '\n';
    }
}

const char* Engine::kind_name(RecKind k) {
    switch (k) {
    case RecKind::Transition: return "transition";
    case RecKind::Pulse: return "pulse";
    case RecKind::Signal: return "signal";
    case RecKind::Note: return "note";
    }
    return "?";
}

std::string Engine::describe(const Record& r) const {
    const InstanceInfo& info = insts_[r.inst];
    if (info.describe) return info.name + ":" + info.describe(r);
    std::ostringstream os;
    os << info.name << ':';
    if (r.kind == RecKind::Note && r.a < info.notes.size())
        os << info.notes[r.a];
    else
        os << r.a << '/' << r.b << '/' << r.c;
    if (r.x != 0) os << '=' << r.x;
    return os.str();
}

const char* Engine::csv_header() { return "run_id,t,t_decimal,node,kind,inst,a,b,c,x,detail"; }

Record Engine::parse_csv(const std::string& line, std::string* run_id) {
    std::vector<std::string> f;
    size_t pos = 0;
    for (int i = 0; i < 10; ++i) {
        size_t comma = line.find(',', pos);
        if (comma == std::string::npos) throw std::invalid_argument("short trace line: " + line);
        f.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    Record r;
    if (run_id) *run_id = f[0];
    r.t = Q::parse(f[1]);
    r.node = static_cast<uint16_t>(std::stoul(f[3]));
    if (f[4] == "transition") r.kind = RecKind::Transition;
    else if (f[4] == "pulse") r.kind = RecKind::Pulse;
    else if (f[4] == "signal") r.kind = RecKind::Signal;
    else if (f[4] == "note") r.kind = RecKind::Note;
    else throw std::invalid_argument("unknown record kind: " + f[4]);
    r.inst = static_cast<uint32_t>(std::stoul(f[5]));
    r.a = static_cast<uint16_t>(std::stoul(f[6]));
    r.b = static_cast<uint16_t>(std::stoul(f[7]));
    r.c = static_cast<uint16_t>(std::stoul(f[8]));
    r.x = std::stoll(f[9]);
    return r;
}

void Engine::set_csv(std::ostream* os, const std::string& run_id) {
    csv_ = os;
    run_id_ = run_id;
}

uint64_t Engine::bits_of(uint32_t inst, int node) const { return inst_bits_[inst][node]; }

void Engine::start() {
    if (started_) return;
    started_ = true;
    if (adv_) adv_->on_start(*this);
    for (uint32_t i = 0; i < insts_.size(); ++i)
        for (int v = 0; v < n_; ++v)
            if (Component* c = comps_[i][v].get()) {
                if (faulty(v) && !adv_->runs_stack(v)) continue;
                c->on_start(*this, v);
            }
}

void Engine::dispatch(Event& e) {
    int v = e.node;
    if (e.kind == EvKind::AdvWake) {
        if (adv_) adv_->on_wake(*this, v, e.token);
        return;
    }
    Component* c = component(e.inst, v);
    if (e.kind == EvKind::Wake) {
        auto& has = has_wake_[e.inst][v];
        if (has && pending_wake_[e.inst][v] == e.at) has = 0;
    }
    if (!c) return;
    if (faulty(v) && !adv_->runs_stack(v)) return;
    depth_ = 0;
    switch (e.kind) {
    case EvKind::Delivery: c->on_message(*this, v, e.from, e.tag, e.payload); break;
    case EvKind::Wake: c->on_wake(*this, v); break;
    case EvKind::Signal: c->on_signal(*this, v, e.tag); break;
    case EvKind::AdvWake: break;
    }
}

void Engine::advance(const Q& until) {
    start();
    while (!heap_.empty() && !(until < heap_.front().at)) {
        std::pop_heap(heap_.begin(), heap_.end(), Later{});
        Event e = std::move(heap_.back());
        heap_.pop_back();
        if (events_ > 0) {
            auto c = e.at <=> last_at_;
            if (c < 0 || (c == 0 && e.seq < last_seq_)) throw std::logic_error("event processed out of order");
        }
        last_at_ = e.at;
        last_seq_ = e.seq;
        now_ = e.at;
        ++events_;
        dispatch(e);
    }
    if (now_ < until) now_ = until;
}

}  // namespace psync
