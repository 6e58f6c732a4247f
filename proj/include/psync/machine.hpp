#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psync/rational.hpp"
#include "psync/sim.hpp"

namespace psync {

enum class Cmp : uint8_t { Ge, Gt };

struct Guard {
    enum class Kind : uint8_t { True, Timer, Expiry, Count, Signal, StateIs, Received, And, Or, Not };
    Kind kind = Kind::True;
    int a = 0;  // timer / buffer / signal / machine / tag
    int b = 0;  // state for StateIs
    int k = 0;  // threshold for Count
    Cmp cmp = Cmp::Ge;
    std::vector<Guard> kids;

    static Guard make(Kind kind, int a = 0, int b = 0, int k = 0, Cmp cmp = Cmp::Ge, std::vector<Guard> kids = {}) {
        Guard g;
        g.kind = kind;
        g.a = a;
        g.b = b;
        g.k = k;
        g.cmp = cmp;
        g.kids = std::move(kids);
        return g;
    }
    static Guard always() { return {}; }
    static Guard timer(int t) { return make(Kind::Timer, t); }
    // True only in the step that observes the timer running out.
    static Guard expiry(int t) { return make(Kind::Expiry, t); }
    static Guard count(int buf, Cmp c, int k) { return make(Kind::Count, buf, 0, k, c); }
    static Guard signal(int s) { return make(Kind::Signal, s); }
    static Guard state_is(int machine, int state) { return make(Kind::StateIs, machine, state); }
    static Guard received(int tag) { return make(Kind::Received, tag); }
    static Guard all(std::vector<Guard> g) { return make(Kind::And, 0, 0, 0, Cmp::Ge, std::move(g)); }
    static Guard any(std::vector<Guard> g) { return make(Kind::Or, 0, 0, 0, Cmp::Ge, std::move(g)); }
    static Guard negate(Guard g) { return make(Kind::Not, 0, 0, 0, Cmp::Ge, {std::move(g)}); }
};

struct StateDef {
    std::string name;
    bool pulse = false;
    int broadcast = -1;  // tag sent to every member on entry
    int emit = -1;       // group signal raised on entry
    std::vector<int> reset_timers;
    std::vector<int> clear_buffers;
};

struct TimerDef {
    std::string name;
    Q duration;
};

struct BufferDef {
    std::string name;
    int tag = 0;
    bool window = false;  // false: memory flags, true: sliding window
    Q length;             // window length in local time
    uint64_t senders = ~0ULL;  // only these senders are stored
};

struct TransitionDef {
    int from = -1;  // -1 matches every state
    int to = 0;
    Guard guard;
    std::string label;
};

struct MachineDef {
    std::string name;
    std::vector<StateDef> states;
    std::vector<TransitionDef> transitions;
    int initial = 0;
};

struct GroupSpec {
    std::string name;
    std::vector<std::string> tags;
    std::vector<std::string> signals;
    std::vector<TimerDef> timers;
    std::vector<BufferDef> buffers;
    std::vector<MachineDef> machines;

    int tag(const std::string& s) const;
    int signal(const std::string& s) const;
    int timer(const std::string& s) const;
    int buffer(const std::string& s) const;
    int machine(const std::string& s) const;
    int state(int machine, const std::string& s) const;

    // Throws std::invalid_argument on dangling references.
    void validate() const;
    std::string guard_str(const Guard& g) const;
    std::string dump() const;
};

struct CycleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runtime for one node's copy of a GroupSpec: all machines share timers,
// buffers and signals and are stepped together within an instant.
class MachineGroup : public Component {
public:
    MachineGroup(const GroupSpec* spec, uint32_t inst, int node, std::vector<int> members);

    void on_start(Engine& e, int node) override;
    void on_message(Engine& e, int node, int from, uint16_t tag, const std::string& payload) override;
    void on_wake(Engine& e, int node) override;
    void on_signal(Engine& e, int node, int signal) override;

    // Clean start: every machine enters its initial state at the first step.
    void set_clean_start(bool clean) { clean_start_ = clean; }
    bool clean_start() const { return clean_start_; }
    // Arbitrary state: random logical states, timer remainders, flags, windows.
    void randomize(Engine& e, Rng& rng);
    void force_state(int machine, int state) { cur_[static_cast<size_t>(machine)] = state; }

    int state(int machine) const { return cur_[static_cast<size_t>(machine)]; }
    bool timer_expired(const Q& local, int t) const { return !(local < expiry_[static_cast<size_t>(t)]); }
    int count(const Q& local, int buf) const;
    const GroupSpec& spec() const { return *spec_; }
    uint32_t inst() const { return inst_; }
    int node() const { return node_; }
    // Raises a group signal and steps the machines.
    void raise(Engine& e, int signal);
    void step(Engine& e);
    // Restart a timer from the current local time.
    void reset_timer(Engine& e, int t);

    static std::string describe(const GroupSpec& spec, const Record& r);

protected:
    virtual void on_enter(Engine& e, int machine, int state) { (void)e, (void)machine, (void)state; }
    virtual void on_pulse(Engine& e) { (void)e; }
    virtual void on_emit(Engine& e, int signal) { (void)e, (void)signal; }
    virtual void on_foreign(Engine& e, int from, uint16_t tag, const std::string& payload) {
        (void)e, (void)from, (void)tag, (void)payload;
    }

    // Marks a signal pending without stepping; safe from inside hooks.
    void post_signal(int signal);

    const GroupSpec* spec_;
    uint32_t inst_;
    int node_;
    std::vector<int> members_;

private:
    bool eval(const Guard& g, int m, const Q& local) const;
    void enter(Engine& e, int m, int s, const Q& local);
    void schedule(Engine& e, const Q& local);

    std::vector<int> cur_;
    std::vector<Q> expiry_;
    std::vector<uint8_t> fired_;          // edge already reported per timer
    std::vector<uint8_t> edge_;           // edge visible in the current step
    std::vector<int> edge_timers_;
    std::vector<uint64_t> flags_;
    std::vector<std::vector<Q>> window_;  // [buffer][node] last receipt
    std::vector<uint64_t> window_has_;
    std::vector<uint64_t> pending_;       // per machine signal bits
    std::vector<int> stimulus_;           // per machine received tag or -1
    std::vector<std::vector<int>> buffers_of_tag_;
    std::vector<std::vector<uint64_t>> trans_signals_;  // [machine][transition]
    std::vector<std::vector<uint8_t>> trans_received_;
    std::vector<std::vector<std::vector<int>>> timers_of_state_;  // [machine][state]
    bool clean_start_ = true;
    bool started_ = false;
};

}  // namespace psync
