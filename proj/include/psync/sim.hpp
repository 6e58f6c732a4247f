#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "psync/rational.hpp"

namespace psync {

class Rng {
public:
    explicit Rng(uint64_t seed = 0);
    uint64_t next();
    // Uniform integer in [0, n). n must be positive.
    uint64_t below(uint64_t n);
    // Uniform integer in [lo, hi].
    int64_t range(int64_t lo, int64_t hi);
    double unit();
    bool chance(double p) { return unit() < p; }
    Rng fork(uint64_t salt);

private:
    std::mt19937_64 gen_;
};

class ClockFn {
public:
    struct Segment {
        Q start;
        Q rate;
    };

    ClockFn();
    ClockFn(Q offset, std::vector<Segment> segments);
    static ClockFn constant(Q rate, Q offset = Q(0));

    Q read(const Q& t) const;
    // Least reference time t >= 0 with read(t) >= c.
    Q inverse(const Q& c) const;
    // Throws if a rate lies outside [1, theta] or segments are malformed.
    void validate(const Q& theta) const;

    const Q& offset() const { return offset_; }
    const std::vector<Segment>& segments() const { return segs_; }

private:
    Q offset_;
    std::vector<Segment> segs_;
    std::vector<Q> base_;  // clock value at each segment start
};

struct DelayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class DelayModel {
public:
    enum class Kind { Constant, PerEdge, Random, Bimodal, Callback };
    using Callback = std::function<Q(int from, int to, const Q& t_send)>;

    DelayModel() = default;
    static DelayModel constant(Q d, Q delay);
    static DelayModel per_edge(Q d, int n, std::vector<Q> table);
    // Delays drawn on the grid d/grid; Bimodal favours the two extremes.
    static DelayModel random(Q d, uint64_t seed, int64_t grid = 1000, bool bimodal = false);
    static DelayModel callback(Q d, Callback cb);

    // Delivery time for a message sent now; in (t, t+d) and FIFO per channel.
    Q deliver(int from, int to, const Q& t_send);
    void reset_channels(int n);

    Kind kind() const { return kind_; }
    const Q& bound() const { return d_; }

private:
    struct Channel {
        bool used = false;
        Q last_send;
        Q last_delivery;
    };
    Kind kind_ = Kind::Constant;
    Q d_{1};
    Q delay_{1, 2};
    std::vector<Q> table_;
    int table_n_ = 0;
    Callback cb_;
    Rng rng_;
    int64_t grid_ = 1000;
    int n_ = 0;
    std::vector<Channel> ch_;
    Channel& channel(int from, int to);
};

enum class RecKind : uint8_t { Transition, Pulse, Signal, Note };

struct Record {
    Q t;
    uint16_t node;
    uint32_t inst;
    RecKind kind;
    uint16_t a, b, c;
    int64_t x;
};

struct InstanceInfo {
    std::string name;
    std::vector<int> members;
    std::vector<std::string> tags;
    std::function<std::string(const Record&)> describe;
    std::vector<std::string> notes;  // labels for Note records
    bool keep_transitions = true;
    bool keep_pulses = true;
    int level = 0;
};

class Engine;

class Component {
public:
    virtual ~Component() = default;
    virtual void on_start(Engine&, int node) { (void)node; }
    virtual void on_message(Engine&, int node, int from, uint16_t tag, const std::string& payload) = 0;
    virtual void on_wake(Engine&, int node) = 0;
    virtual void on_signal(Engine&, int node, int signal) { (void)node, (void)signal; }
};

// Hook consulted for every send by a faulty node and every send to one.
class Adversary {
public:
    virtual ~Adversary() = default;
    virtual bool is_faulty(int node) const = 0;
    // Whether the faulty node's own protocol stack keeps running.
    virtual bool runs_stack(int node) const = 0;
    // A faulty node's stack wants to send; the adversary decides what goes out.
    virtual void on_faulty_send(Engine&, int node, uint32_t inst, uint16_t tag, const std::string& payload,
                                const std::vector<int>& receivers) = 0;
    // A correct node sent something a faulty node will receive.
    virtual void observe(Engine&, int from, int to, uint32_t inst, uint16_t tag, const std::string& payload) = 0;
    virtual void on_wake(Engine&, int node, uint64_t token) = 0;
    virtual void on_start(Engine&) {}
};

struct EngineLimits {
    int max_signal_depth = 64;
};

class Engine {
public:
    Engine(int n, DelayModel delays, std::vector<ClockFn> clocks);

    int n() const { return n_; }
    const Q& now() const { return now_; }
    Q local(int node) const { return clocks_[node].read(now_); }
    const ClockFn& clock(int node) const { return clocks_[node]; }
    const Q& d() const { return delays_.bound(); }

    uint32_t add_instance(InstanceInfo info);
    InstanceInfo& instance(uint32_t id) { return insts_[id]; }
    const InstanceInfo& instance(uint32_t id) const { return insts_[id]; }
    size_t instance_count() const { return insts_.size(); }
    void attach(uint32_t inst, int node, std::unique_ptr<Component> c);
    Component* component(uint32_t inst, int node) const;

    void set_adversary(Adversary* adv) { adv_ = adv; }
    Adversary* adversary() const { return adv_; }
    bool faulty(int node) const { return adv_ && adv_->is_faulty(node); }

    // Protocol-level send from node's component of inst; routed through the
    // adversary for faulty senders.
    void send(int node, uint32_t inst, uint16_t tag, const std::string& payload, const std::vector<int>& to,
              int bits = 1);
    void broadcast(int node, uint32_t inst, uint16_t tag, const std::string& payload = {}, int bits = 1);
    // Raw injection used by the adversary (no interception, sender must be faulty).
    void inject(int from, int to, uint32_t inst, uint16_t tag, const std::string& payload);

    // Wake the component when the node's local clock reaches c.
    void wake_local(int node, uint32_t inst, const Q& c);
    void wake_ref(int node, uint32_t inst, const Q& t);
    void adversary_wake(int node, const Q& t, uint64_t token);
    void external_signal(int node, uint32_t inst, int signal, const Q& at);
    // Synchronous in-node signal to another component.
    void signal_now(int node, uint32_t inst, int signal);

    void record(int node, uint32_t inst, RecKind kind, uint16_t a = 0, uint16_t b = 0, uint16_t c = 0,
                int64_t x = 0);

    void start();
    // Processes every event with at <= until.
    void advance(const Q& until);

    const std::vector<Record>& records() const { return records_; }
    void clear_records() { records_.clear(); }
    uint64_t trace_hash() const { return hash_; }
    uint64_t events_processed() const { return events_; }
    void set_csv(std::ostream* os, const std::string& run_id);
    static const char* csv_header();
    // Inverse of the CSV writer for one line; throws std::invalid_argument.
    static Record parse_csv(const std::string& line, std::string* run_id = nullptr);
    std::string describe(const Record& r) const;
    static const char* kind_name(RecKind k);

    // Broadcast bit counters per node (sends by correct stacks only).
    const std::vector<uint64_t>& bits_sent() const { return bits_; }
    const std::vector<uint64_t>& messages_sent() const { return msgs_; }
    uint64_t bits_of(uint32_t inst, int node) const;

    Rng& rng() { return rng_; }
    void seed(uint64_t s) { rng_ = Rng(s); }
    EngineLimits limits;

private:
    enum class EvKind : uint8_t { Delivery, Wake, Signal, AdvWake };
    struct Event {
        Q at;
        uint64_t seq;
        EvKind kind;
        uint16_t node;
        uint16_t from;
        uint32_t inst;
        uint16_t tag;
        uint64_t token;
        std::string payload;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            auto c = a.at <=> b.at;
            if (c != 0) return c > 0;
            return a.seq > b.seq;
        }
    };

    void push(Event e);
    void dispatch(Event& e);

    int n_;
    Q now_;
    DelayModel delays_;
    std::vector<ClockFn> clocks_;
    std::vector<InstanceInfo> insts_;
    std::vector<std::vector<std::unique_ptr<Component>>> comps_;  // [inst][node]
    std::vector<std::vector<Q>> pending_wake_;                    // [inst][node]
    std::vector<std::vector<uint8_t>> has_wake_;
    std::vector<Event> heap_;
    uint64_t seq_ = 0;
    uint64_t events_ = 0;
    Adversary* adv_ = nullptr;
    std::vector<Record> records_;
    uint64_t hash_ = 1469598103934665603ULL;
    std::ostream* csv_ = nullptr;
    std::string run_id_;
    std::vector<uint64_t> bits_, msgs_;
    std::vector<std::vector<uint64_t>> inst_bits_;  // [inst][node]
    Rng rng_;
    int depth_ = 0;
    bool started_ = false;
    Q last_at_;
    uint64_t last_seq_ = 0;
};

}  // namespace psync
