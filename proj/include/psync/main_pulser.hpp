#pragma once

#include <functional>
#include <string>
#include <vector>

#include "psync/consensus.hpp"
#include "psync/machine.hpp"
#include "psync/solvers.hpp"

namespace psync {

// Pulser with a "main" machine (PULSE/WAIT/RECOVER) and an "aux" machine that
// feeds a consensus run deciding whether to pulse again.
GroupSpec main_spec(int n, int f, const MainTimeouts& m);

class MainNode : public MachineGroup {
public:
    MainNode(const GroupSpec* spec, uint32_t inst, int node, std::vector<int> members, ConsensusNode* cons);

    // Resynchronisation input: restarts T_active.
    void resync(Engine& e);
    void consensus_done(Engine& e, int output);
    void set_pulse_hook(std::function<void(Engine&)> h) { pulse_hook_ = std::move(h); }
    uint64_t aborts() const { return aborts_; }

    void on_start(Engine& e, int node) override;

    enum Note : uint16_t { NoteResync = 0, NoteAbort = 1 };
    static std::vector<std::string> note_names() { return {"resync", "abort"}; }

protected:
    void on_enter(Engine& e, int machine, int state) override;
    void on_pulse(Engine& e) override;

private:
    ConsensusNode* cons_;
    std::function<void(Engine&)> pulse_hook_;
    int aux_, run0_, run1_, t_active_;
    int prev_aux_ = -1;
    uint64_t aborts_ = 0;
};

struct Stabilisation {
    bool found = false;
    bool conclusive = false;  // enough trace after t to trust the verdict
    Q t;                      // start of the first pulse group of the good suffix
    size_t groups = 0;
    Q max_skew;
    Q min_gap, max_gap;
};

// Earliest pulse group after which every correct node pulses once per group,
// groups span less than sigma, and consecutive group starts are
// [phi_minus, phi_plus] apart up to t_end.
Stabilisation detect_stabilisation(const std::vector<Record>& recs, uint32_t inst, const std::vector<int>& correct,
                                   const Q& phi_minus, const Q& phi_plus, const Q& sigma, const Q& t_end);

struct LemmaTally {
    std::string name;
    uint64_t checked = 0;
    uint64_t violations = 0;
    std::vector<std::string> examples;
    void add(bool ok, const std::string& what);
    void merge(const LemmaTally& o);
};

// Lemma checks on a main pulser trace. Instances are skipped near a G3
// firing (LISTEN -> RUN1), which the statements exclude through T_active.
LemmaTally check_input_wait(const std::vector<Record>& recs, uint32_t inst, const GroupSpec& spec,
                            const std::vector<int>& correct, int f, const MainTimeouts& m, const Q& t_end);
LemmaTally check_separation(const std::vector<Record>& recs, uint32_t inst, const GroupSpec& spec,
                            const std::vector<int>& correct, int f, const MainTimeouts& m, const Q& t_end);
LemmaTally check_consistent_init(const std::vector<Record>& recs, uint32_t inst, const GroupSpec& spec,
                                 const std::vector<int>& correct, int f, const MainTimeouts& m, const Q& t_end);

}  // namespace psync
