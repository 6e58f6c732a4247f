#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "psync/byzantine.hpp"
#include "psync/main_pulser.hpp"
#include "psync/rational.hpp"

namespace psync {

// Malformed or inconsistent scenario; the message carries the location.
struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SystemKind { St, Main, Resync, Recursion, Consensus };

const char* system_name(SystemKind k);
SystemKind parse_system(const std::string& s);

struct ClockSpec {
    std::string kind = "piecewise";  // ideal | split | piecewise
    Q segment{50};                   // piecewise: segment length on the integer grid
    Q max_offset{100};               // initial clock values drawn from [0, max_offset]
};

struct DelaySpec {
    std::string kind = "random";  // random | bimodal | constant
    int64_t grid = 1000;
    Q value{1, 2};  // constant delay
};

struct Scenario {
    std::string name = "scenario";
    SystemKind system = SystemKind::St;
    int n = 4;
    int f = 1;
    Q theta{11, 10};
    Q d{1};
    Q sigma{2};
    Q tau{10};
    Q phi{1025, 1000};
    std::string routine = "phase-king-silent";
    std::optional<Q> duration;
    std::string init = "random";  // clean | random | random-top
    std::optional<Q> init_spread;  // st/consensus init signals over [0, spread); defaults to tau
    ClockSpec clocks;
    DelaySpec delays;
    std::vector<Fault> faults;
    std::optional<Q> settle;       // recursion: stop this long after a conclusive stabilisation
    int spurious = 4;              // main: stray resync pulses before and after the good one
    std::string inputs = "random";  // consensus: random | zeros | ones
    std::vector<std::string> asserts;  // enabled check groups; empty enables all
};

Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);
nlohmann::json scenario_json(const Scenario& s);
// Fault budget, node ranges and f < n/3 where the system needs it.
void validate_scenario(const Scenario& s);

struct Check {
    std::string group;
    std::string name;
    bool ok = true;
    std::string detail;
    std::optional<Q> at;
};

struct RunResult {
    std::string run_id;
    std::vector<Check> checks;
    std::vector<LemmaTally> lemmas;
    nlohmann::json metrics;  // recomputable from the trace alone
    Q t_end;
    uint64_t trace_hash = 0;
    uint64_t events = 0;
    double seconds = 0;
    std::string machines;

    bool passed() const;
    const Check* first_failure() const;
};

struct RunOptions {
    std::ostream* csv = nullptr;  // trace sink; header not included
    std::optional<Q> duration;
    bool keep_machines = false;
};

RunResult run_scenario(const Scenario& s, uint64_t seed, const RunOptions& opt = {});
// Rebuilds the run's configuration and evaluates metrics and checks from a
// CSV trace written by run_scenario.
RunResult evaluate_trace(const Scenario& s, uint64_t seed, std::istream& csv);
// run_scenario plus trace.csv, metrics.json and machines.txt in dir.
RunResult run_to_dir(const Scenario& s, uint64_t seed, const std::string& dir, const RunOptions& opt = {});

// Text of every solver table the scenario uses.
std::string solve_report(const Scenario& s);
// Solver tables plus the recursion tree or the instance layout.
std::string describe_scenario(const Scenario& s, bool dump_machines);

struct SweepCell {
    nlohmann::json params;
    uint64_t runs = 0;
    uint64_t passed = 0;
    uint64_t violations = 0;
    uint64_t stabilised = 0;
    double max_stab = 0;
    double mean_stab = 0;
    std::string first_failure;
};

// Cartesian product of grid (key -> list of values) applied to the base
// scenario, each cell run for every seed. A missing grid is one cell.
std::vector<SweepCell> sweep(const Scenario& base, const std::optional<nlohmann::json>& grid,
                             const std::vector<uint64_t>& seeds, int threads);
std::string sweep_table(const std::vector<SweepCell>& cells);

}  // namespace psync
