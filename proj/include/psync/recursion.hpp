#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "psync/consensus.hpp"
#include "psync/main_pulser.hpp"
#include "psync/resync.hpp"
#include "psync/solvers.hpp"

namespace psync {

struct LevelPlan {
    int depth = 0;
    std::vector<int> members;
    int f = 0;
    bool base = false;  // leader pulser for f = 0
    BaseTimeouts base_t;
    MainTimeouts main;
    ResyncTimeouts resync;
    Partition part;
    int rounds = 0;
    std::array<int, 2> child{-1, -1};
    Q phi_minus, phi_plus;  // accuracy bounds of this level's pulses
    Q stab_by;              // stabilisation bound T(A) from a clean-or-arbitrary start
    Q stab_by_settled;      // same bound when both block pulsers are stable from time 0
    Q bit_rate;             // per-node bits per time unit this level may send
};

struct Plan {
    Q theta, d, phi;
    std::string routine;
    std::vector<LevelPlan> levels;  // levels[0] is the top
    std::string describe() const;
    // Sum of bit_rate over every level containing node v.
    Q bit_budget(int v) const;
};

// Solves every level top-down: each resync table fixes the accuracy its two
// block pulsers must deliver, and each block is solved against that.
Plan plan_recursion(int n, int f, const Q& theta, const Q& phi, const Q& d, const std::string& routine);

class BaseNode : public Component {
public:
    BaseNode(uint32_t inst, int node, int leader, Q period);

    void on_start(Engine& e, int node) override;
    void on_message(Engine& e, int node, int from, uint16_t tag, const std::string& payload) override;
    void on_wake(Engine& e, int node) override;
    void set_pulse_hook(std::function<void(Engine&)> h) { hook_ = std::move(h); }
    void randomize(Rng& rng);

private:
    void pulse(Engine& e);
    uint32_t inst_;
    int node_, leader_;
    Q period_;
    Q next_;
    bool random_ = false;
    Q phase_;
    std::function<void(Engine&)> hook_;
};

enum class InitMode { Clean, Random, RandomTop };

// Live instances of a plan inside one engine.
struct System {
    Plan plan;
    std::vector<std::unique_ptr<GroupSpec>> specs;
    struct Level {
        uint32_t cons = UINT32_MAX, main = UINT32_MAX, resync = UINT32_MAX, base = UINT32_MAX;
        const GroupSpec* main_spec = nullptr;
        const GroupSpec* resync_spec = nullptr;
    };
    std::vector<Level> levels;
    std::vector<MainNode*> top_main;  // indexed by node, may be null
};

// Instantiates the plan; children feed their pulses into the parent's resync.
std::unique_ptr<System> build_system(Engine& e, const Plan& plan, InitMode init, Rng& rng);

std::string instance_describe(const GroupSpec& spec, const std::vector<std::string>& notes, const Record& r);

}  // namespace psync
