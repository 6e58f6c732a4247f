#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "psync/machine.hpp"
#include "psync/solvers.hpp"

namespace psync {

struct Frame {
    std::string data;
    int bits = 1;
};

// Synchronous binary consensus routine run by one member. Members are
// addressed by index 0..n-1; frames are broadcast to every member.
class Routine {
public:
    virtual ~Routine() = default;
    virtual int rounds() const = 0;
    virtual void init(int input) = 0;
    // Frame for round r (1-based); nullopt sends nothing.
    virtual std::optional<Frame> send(int r) = 0;
    // Frames received in round r, indexed by sender; nullopt means nothing arrived.
    virtual void receive(int r, const std::vector<std::optional<std::string>>& frames) = 0;
    virtual int output() const = 0;
    virtual bool terminated() const { return true; }
};

struct RoutineContext {
    int n = 4;
    int f = 1;
    int self = 0;
    uint64_t shared_seed = 0;
    std::vector<int> kings;  // oracle king order for the randomised mock
};

using RoutineFactory = std::function<std::unique_ptr<Routine>(const RoutineContext&)>;

// Phase king with 3(f+1) rounds. A value of 0 is encoded as silence, so a run
// in which no correct node holds input 1 sends no correct message at all.
std::unique_ptr<Routine> make_phase_king(const RoutineContext& ctx);
// Adds two wake-up rounds so that all-zero inputs keep the system silent.
std::unique_ptr<Routine> make_silent(std::unique_ptr<Routine> inner, const RoutineContext& ctx);
// Phase king phases with kings drawn from the correct members and a shared
// geometric number of phases (mean 2, so 6 expected rounds).
std::unique_ptr<Routine> make_mock_expected(const RoutineContext& ctx);
// Runs inner for twice its expected round count and falls back to the own
// input if it has not terminated by then.
std::unique_ptr<Routine> make_truncated(std::unique_ptr<Routine> inner, int expected_rounds);

// Names: phase-king, phase-king-silent, mock-expected, mock-expected-raw.
RoutineFactory routine_factory(const std::string& name);
std::vector<std::string> routine_names();
// Round count of a routine built by name (the raw mock reports its cap).
int routine_rounds(const std::string& name, int n, int f);
int mock_phase_count(uint64_t shared_seed);

// ------------------------------------------------------------ sync driver

// Chooses what a faulty member sends to each receiver in a round. The view
// holds the frames correct members broadcast in the same round.
using SyncScript = std::function<std::optional<std::string>(int round, int from, int to,
                                                            const std::vector<std::optional<std::string>>& view)>;

struct SyncRun {
    std::vector<int> outputs;      // -1 for faulty members
    int rounds = 0;
    uint64_t correct_messages = 0;  // frames sent by correct members
    uint64_t correct_bits = 0;
};

SyncRun run_sync(const RoutineFactory& make, int n, int f, const std::vector<int>& inputs,
                 const std::vector<bool>& faulty, const SyncScript& script, uint64_t shared_seed = 0);

// Scripted adversary number k from a small per-round alphabet.
SyncScript scripted_adversary(uint64_t k, int rounds);

struct Wilson {
    double rate, lower, upper;
};
Wilson wilson(uint64_t successes, uint64_t trials, double z);

// ------------------------------------------------------------ over ST pulses

// One node's ST pulser plus a routine whose round r frames go out at the
// r-th pulse after init and are consumed at pulse r+1.
class ConsensusNode : public MachineGroup {
public:
    using Done = std::function<void(Engine&, int output)>;

    ConsensusNode(const GroupSpec* spec, uint32_t inst, int node, std::vector<int> members, RoutineFactory make,
                  RoutineContext ctx);

    void start_run(Engine& e, int input);
    void halt(Engine& e);
    void set_done(Done d) { done_ = std::move(d); }
    bool running() const { return running_; }
    uint64_t late_frames() const { return late_; }
    uint64_t runs() const { return runs_; }

    void on_message(Engine& e, int node, int from, uint16_t tag, const std::string& payload) override;
    void on_wake(Engine& e, int node) override;
    void on_signal(Engine& e, int node, int signal) override;

    // Tag used for frames (outside the ST tag range).
    static constexpr uint16_t kFrameTag = 1;
    // NoteFrames closes every run with the number of frames this node sent.
    enum Note : uint16_t { NoteRun = 0, NoteOutput = 1, NoteLate = 2, NoteHalt = 3, NoteFrames = 4 };
    static std::vector<std::string> note_names() { return {"run", "output", "late-frame", "halt", "frames"}; }

protected:
    void on_pulse(Engine& e) override;
    void on_foreign(Engine& e, int from, uint16_t tag, const std::string& payload) override;

private:
    void flush(Engine& e);

    RoutineFactory make_;
    RoutineContext ctx_;
    std::unique_ptr<Routine> routine_;
    int R_ = 0;
    bool running_ = false;
    int pulses_ = 0;
    std::vector<std::vector<std::optional<std::string>>> inbox_;
    std::optional<int> pending_output_;
    Done done_;
    uint64_t late_ = 0;
    uint64_t runs_ = 0;
    uint64_t run_id_ = 0;
    int64_t frames_ = 0;
};

}  // namespace psync
