#pragma once

#include <array>
#include <functional>
#include <vector>

#include "psync/machine.hpp"
#include "psync/main_pulser.hpp"
#include "psync/solvers.hpp"

namespace psync {

struct Partition {
    std::array<std::vector<int>, 2> block;
    std::array<int, 2> f{0, 0};
};

// Splits members into halves of size floor(n/2) and ceil(n/2) with fault
// budgets floor((f-1)/2) and f-1-floor((f-1)/2).
Partition partition_blocks(const std::vector<int>& members, int f);

// Voter and validator machines for both blocks.
GroupSpec resync_spec(const std::vector<int>& members, int f, const Partition& p, const ResyncTimeouts& r);

class ResyncNode : public MachineGroup {
public:
    ResyncNode(const GroupSpec* spec, uint32_t inst, int node, std::vector<int> members, Q dedup);

    // A pulse of block h's pulser at this node.
    void block_pulse(Engine& e, int h);
    void set_output(std::function<void(Engine&)> out) { out_ = std::move(out); }

    enum Note : uint16_t { NoteOutput = 0 };
    static std::vector<std::string> note_names() { return {"resync-out"}; }

protected:
    void on_pulse(Engine& e) override;

private:
    Q dedup_;
    std::array<Q, 2> last_block_{};
    std::array<bool, 2> has_block_{false, false};
    Q last_out_;
    bool has_out_ = false;
    std::function<void(Engine&)> out_;
};

struct ResyncTrace {
    // [block][node] RESYNC times
    std::array<std::vector<std::vector<Q>>, 2> resync;
    // [node] deduplicated output times
    std::vector<std::vector<Q>> outputs;
};

ResyncTrace collect_resync(const std::vector<Record>& recs, uint32_t inst, const GroupSpec& spec, int n);

// Start times t of good resynchronisation pulses: every correct node outputs
// exactly once in [t, t+rho) and not at all in [t+rho, t+rho+psi).
std::vector<Q> check_good_resync(const ResyncTrace& tr, const std::vector<int>& correct, const Q& rho, const Q& psi,
                                 const Q& t_end);

// After any correct RESYNC of block h at t >= T*, some t* in [t-2T_vote-d, t]
// has every correct node's next RESYNC of h within 2(T_vote+d) of t* or at
// least T_cool/theta after it.
LemmaTally check_grouping(const ResyncTrace& tr, const std::vector<int>& correct, const ResyncTimeouts& r,
                          const Q& t_end);
// Consecutive RESYNCs of a block at a node are [Lambda-, Lambda+] or at least
// T_cool/theta apart; for a correct block k the latter is excluded from its
// first RESYNC after T* on. Pass k = -1 if no block is known correct.
LemmaTally check_resync_bounds(const ResyncTrace& tr, const std::vector<int>& correct, const ResyncTimeouts& r,
                               int k, const Q& t_end);

}  // namespace psync
