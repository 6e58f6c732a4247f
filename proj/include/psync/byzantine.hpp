#pragma once

#include <map>
#include <string>
#include <vector>

#include "psync/sim.hpp"

namespace psync {

enum class Behaviour {
    Silent,       // never sends
    CrashAt,      // runs the protocol correctly until a crash time
    Random,       // random tags to random receivers at random times
    Equivocator,  // echoes correct traffic to a fixed half of the receivers
    StateMimic,   // runs the protocol from an arbitrary state, dropping sends per receiver
    Spoiler,      // fires block pulses and votes to split the voters
};

Behaviour parse_behaviour(const std::string& s);
const char* behaviour_name(Behaviour b);

struct Fault {
    int node = 0;
    Behaviour kind = Behaviour::Silent;
    Q crash_at;
    Q period{1};  // mean spacing of spontaneous sends
};

class FaultPlan : public Adversary {
public:
    FaultPlan(std::vector<Fault> faults, uint64_t seed);

    bool is_faulty(int node) const override { return by_node_.count(node) != 0; }
    bool runs_stack(int node) const override;
    void on_faulty_send(Engine& e, int node, uint32_t inst, uint16_t tag, const std::string& payload,
                        const std::vector<int>& receivers) override;
    void observe(Engine& e, int from, int to, uint32_t inst, uint16_t tag, const std::string& payload) override;
    void on_wake(Engine& e, int node, uint64_t token) override;
    void on_start(Engine& e) override;

    std::vector<int> faulty() const;
    uint64_t injected() const { return injected_; }

private:
    const Fault& fault(int node) const { return faults_[by_node_.at(node)]; }
    void send_some(Engine& e, int from, uint32_t inst, uint16_t tag, const std::string& payload, uint64_t mask);
    std::string garbage(Engine& e, uint32_t inst, uint16_t tag);
    void schedule(Engine& e, int node);

    std::vector<Fault> faults_;
    std::map<int, size_t> by_node_;
    Rng rng_;
    uint64_t injected_ = 0;
    std::map<std::pair<uint32_t, uint16_t>, Q> last_echo_;
};

}  // namespace psync
