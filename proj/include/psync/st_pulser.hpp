#pragma once

#include <vector>

#include "psync/machine.hpp"
#include "psync/solvers.hpp"

namespace psync {

// Pulser for n nodes with at most f faults that starts from a synchronised
// init signal. The embedded variant adds an OFF state and a halt signal for
// driving a consensus simulation.
GroupSpec st_spec(int n, int f, const StTimeouts& st, bool embedded);

struct StMeasure {
    std::vector<int> nodes;
    std::vector<std::vector<Q>> pulses;  // [node index][pulse index]
    size_t count = 0;                    // pulses seen by every node
    std::vector<Q> start;                // earliest i-th pulse
    std::vector<Q> skew;                 // latest minus earliest i-th pulse
    std::vector<Q> gaps;                 // start[i+1] - start[i]
};

// Pulses of the given correct nodes, each counted from after[v] on.
StMeasure measure_st(const std::vector<Record>& recs, uint32_t inst, const std::vector<int>& correct,
                     const std::vector<Q>& after);

}  // namespace psync
