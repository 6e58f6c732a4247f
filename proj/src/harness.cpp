#include "psync/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "psync/consensus.hpp"
#include "psync/recursion.hpp"
#include "psync/resync.hpp"
#include "psync/st_pulser.hpp"

namespace psync {

using nlohmann::json;

const char* system_name(SystemKind k) {
    switch (k) {
    case SystemKind::St: return "st";
    case SystemKind::Main: return "main";
    case SystemKind::Resync: return "resync";
    case SystemKind::Recursion: return "recursion";
    case SystemKind::Consensus: return "consensus";
    }
    return "?";
}

SystemKind parse_system(const std::string& s) {
    if (s == "st") return SystemKind::St;
    if (s == "main") return SystemKind::Main;
    if (s == "resync") return SystemKind::Resync;
    if (s == "recursion") return SystemKind::Recursion;
    if (s == "consensus") return SystemKind::Consensus;
    throw ScenarioError("system: unknown value '" + s + "' (st, main, resync, recursion, consensus)");
}

// ------------------------------------------------------------ scenario

namespace {

const std::set<std::string> kGroups = {"st", "skew", "gaps", "stabilisation", "lemmas",
                                       "bits", "consensus", "agreement", "resync"};

Q get_q(const json& v, const std::string& path) {
    if (v.is_number_integer()) return Q(v.get<long long>());
    if (v.is_string()) {
        try {
            return Q::parse(v.get<std::string>());
        } catch (const std::exception& e) {
            throw ScenarioError(path + ": " + e.what());
        }
    }
    throw ScenarioError(path + ": expected a rational such as \"1001/1000\"");
}

int get_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ScenarioError(path + ": expected an integer");
    return v.get<int>();
}

std::string get_str(const json& v, const std::string& path) {
    if (!v.is_string()) throw ScenarioError(path + ": expected a string");
    return v.get<std::string>();
}

void known_keys(const json& j, const std::string& path, const std::set<std::string>& keys) {
    if (!j.is_object()) throw ScenarioError(path + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!keys.count(it.key())) throw ScenarioError(path + "." + it.key() + ": unknown key");
}

json qs(const Q& q) { return q.str(); }

}  // namespace

Scenario parse_scenario(const json& j) {
    known_keys(j, "$",
               {"name", "system", "n", "f", "theta", "d", "sigma", "tau", "phi", "routine", "duration", "init",
                "init_spread", "clocks", "delays", "faults", "settle", "spurious", "inputs", "assert", "sweep",
                "seeds"});
    Scenario s;
    if (j.contains("name")) s.name = get_str(j["name"], "$.name");
    if (j.contains("system")) s.system = parse_system(get_str(j["system"], "$.system"));
    if (j.contains("n")) s.n = get_int(j["n"], "$.n");
    if (j.contains("f")) s.f = get_int(j["f"], "$.f");
    if (j.contains("theta")) s.theta = get_q(j["theta"], "$.theta");
    if (j.contains("d")) s.d = get_q(j["d"], "$.d");
    if (j.contains("sigma")) s.sigma = get_q(j["sigma"], "$.sigma");
    if (j.contains("tau")) s.tau = get_q(j["tau"], "$.tau");
    if (j.contains("phi")) s.phi = get_q(j["phi"], "$.phi");
    if (j.contains("routine")) s.routine = get_str(j["routine"], "$.routine");
    if (j.contains("duration")) s.duration = get_q(j["duration"], "$.duration");
    if (j.contains("init")) s.init = get_str(j["init"], "$.init");
    if (j.contains("init_spread")) s.init_spread = get_q(j["init_spread"], "$.init_spread");
    if (j.contains("settle")) s.settle = get_q(j["settle"], "$.settle");
    if (j.contains("spurious")) s.spurious = get_int(j["spurious"], "$.spurious");
    if (j.contains("inputs")) s.inputs = get_str(j["inputs"], "$.inputs");
    if (j.contains("clocks")) {
        const json& c = j["clocks"];
        known_keys(c, "$.clocks", {"kind", "segment", "max_offset"});
        if (c.contains("kind")) s.clocks.kind = get_str(c["kind"], "$.clocks.kind");
        if (c.contains("segment")) s.clocks.segment = get_q(c["segment"], "$.clocks.segment");
        if (c.contains("max_offset")) s.clocks.max_offset = get_q(c["max_offset"], "$.clocks.max_offset");
    }
    if (j.contains("delays")) {
        const json& c = j["delays"];
        known_keys(c, "$.delays", {"kind", "grid", "value"});
        if (c.contains("kind")) s.delays.kind = get_str(c["kind"], "$.delays.kind");
        if (c.contains("grid")) s.delays.grid = get_int(c["grid"], "$.delays.grid");
        if (c.contains("value")) s.delays.value = get_q(c["value"], "$.delays.value");
    }
    if (j.contains("faults")) {
        const json& fs = j["faults"];
        if (!fs.is_array()) throw ScenarioError("$.faults: expected an array");
        for (size_t i = 0; i < fs.size(); ++i) {
            const std::string p = "$.faults[" + std::to_string(i) + "]";
            known_keys(fs[i], p, {"node", "behaviour", "crash_at", "period"});
            Fault f;
            if (!fs[i].contains("node")) throw ScenarioError(p + ".node: missing");
            f.node = get_int(fs[i]["node"], p + ".node");
            if (fs[i].contains("behaviour")) {
                try {
                    f.kind = parse_behaviour(get_str(fs[i]["behaviour"], p + ".behaviour"));
                } catch (const std::invalid_argument& e) {
                    throw ScenarioError(p + ".behaviour: " + e.what());
                }
            }
            if (fs[i].contains("crash_at")) f.crash_at = get_q(fs[i]["crash_at"], p + ".crash_at");
            if (fs[i].contains("period")) f.period = get_q(fs[i]["period"], p + ".period");
            s.faults.push_back(f);
        }
    }
    if (j.contains("assert")) {
        const json& a = j["assert"];
        if (a.is_string()) {
            std::stringstream ss(a.get<std::string>());
            for (std::string g; std::getline(ss, g, ',');)
                if (!g.empty()) s.asserts.push_back(g);
        } else if (a.is_array()) {
            for (size_t i = 0; i < a.size(); ++i) s.asserts.push_back(get_str(a[i], "$.assert[" + std::to_string(i) + "]"));
        } else {
            throw ScenarioError("$.assert: expected a string or an array of strings");
        }
    }
    validate_scenario(s);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError(path + ": cannot open");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        size_t line = 1, col = 1;
        for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ScenarioError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
    try {
        return parse_scenario(j);
    } catch (const ScenarioError& e) {
        throw ScenarioError(path + ": " + e.what());
    }
}

json scenario_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["system"] = system_name(s.system);
    j["n"] = s.n;
    j["f"] = s.f;
    j["theta"] = qs(s.theta);
    j["d"] = qs(s.d);
    j["sigma"] = qs(s.sigma);
    j["tau"] = qs(s.tau);
    j["phi"] = qs(s.phi);
    j["routine"] = s.routine;
    if (s.duration) j["duration"] = qs(*s.duration);
    j["init"] = s.init;
    if (s.init_spread) j["init_spread"] = qs(*s.init_spread);
    j["clocks"] = {{"kind", s.clocks.kind}, {"segment", qs(s.clocks.segment)}, {"max_offset", qs(s.clocks.max_offset)}};
    j["delays"] = {{"kind", s.delays.kind}, {"grid", s.delays.grid}, {"value", qs(s.delays.value)}};
    j["faults"] = json::array();
    for (const auto& f : s.faults)
        j["faults"].push_back(
            {{"node", f.node}, {"behaviour", behaviour_name(f.kind)}, {"crash_at", qs(f.crash_at)}, {"period", qs(f.period)}});
    if (s.settle) j["settle"] = qs(*s.settle);
    j["spurious"] = s.spurious;
    j["inputs"] = s.inputs;
    if (!s.asserts.empty()) j["assert"] = s.asserts;
    return j;
}

void validate_scenario(const Scenario& s) {
    if (s.n < 1 || s.n > 64) throw ScenarioError("n: must lie in [1, 64]");
    if (s.f < 0) throw ScenarioError("f: must be non-negative");
    if (3 * s.f >= s.n) throw ScenarioError("f: n > 3f violated (n=" + std::to_string(s.n) + ", f=" + std::to_string(s.f) + ")");
    if (static_cast<int>(s.faults.size()) > s.f)
        throw ScenarioError("faults: " + std::to_string(s.faults.size()) + " faulty nodes exceed f=" + std::to_string(s.f));
    std::set<int> seen;
    for (const auto& f : s.faults) {
        if (f.node < 0 || f.node >= s.n) throw ScenarioError("faults: node " + std::to_string(f.node) + " out of range");
        if (!seen.insert(f.node).second) throw ScenarioError("faults: node " + std::to_string(f.node) + " listed twice");
        if (f.period.sign() <= 0) throw ScenarioError("faults: period must be positive");
    }
    if (s.d.sign() <= 0) throw ScenarioError("d: must be positive");
    if (s.sigma.sign() <= 0) throw ScenarioError("sigma: must be positive");
    if (!(Q(1) < s.theta)) throw ScenarioError("theta: must exceed 1");
    if (s.init != "clean" && s.init != "random" && s.init != "random-top")
        throw ScenarioError("init: unknown value '" + s.init + "' (clean, random, random-top)");
    if (s.clocks.kind != "ideal" && s.clocks.kind != "split" && s.clocks.kind != "piecewise")
        throw ScenarioError("clocks.kind: unknown value '" + s.clocks.kind + "' (ideal, split, piecewise)");
    if (s.clocks.segment.sign() <= 0 || !(s.clocks.segment == s.clocks.segment.floor()))
        throw ScenarioError("clocks.segment: must be a positive integer");
    if (s.delays.kind != "random" && s.delays.kind != "bimodal" && s.delays.kind != "constant")
        throw ScenarioError("delays.kind: unknown value '" + s.delays.kind + "' (random, bimodal, constant)");
    if (s.delays.grid < 2) throw ScenarioError("delays.grid: must be at least 2");
    if (s.delays.kind == "constant" && (s.delays.value.sign() <= 0 || !(s.delays.value < s.d)))
        throw ScenarioError("delays.value: must lie in (0, d)");
    if (s.inputs != "random" && s.inputs != "zeros" && s.inputs != "ones")
        throw ScenarioError("inputs: unknown value '" + s.inputs + "' (random, zeros, ones)");
    const auto names = routine_names();
    if (std::find(names.begin(), names.end(), s.routine) == names.end())
        throw ScenarioError("routine: unknown value '" + s.routine + "'");
    if (s.spurious < 0) throw ScenarioError("spurious: must be non-negative");
    for (const auto& g : s.asserts)
        if (!kGroups.count(g)) throw ScenarioError("assert: unknown property group '" + g + "'");
}

bool RunResult::passed() const { return first_failure() == nullptr; }

const Check* RunResult::first_failure() const {
    for (const auto& c : checks)
        if (!c.ok) return &c;
    return nullptr;
}

// ------------------------------------------------------------ systems

namespace {

enum MeterNote : uint16_t { NoteBits = 0, NoteEnd = 1 };

// Calls a target at scheduled reference times.
class Timed : public Component {
public:
    Timed(uint32_t inst, int node, std::vector<Q> times, std::function<void(Engine&, size_t)> fire)
        : inst_(inst), node_(node), times_(std::move(times)), fire_(std::move(fire)) {
        std::sort(times_.begin(), times_.end());
    }
    void on_start(Engine& e, int) override { arm(e); }
    void on_message(Engine&, int, int, uint16_t, const std::string&) override {}
    void on_wake(Engine& e, int) override {
        while (next_ < times_.size() && !(e.now() < times_[next_])) fire_(e, next_++);
        arm(e);
    }

private:
    void arm(Engine& e) {
        if (next_ < times_.size()) e.wake_ref(node_, inst_, times_[next_]);
    }
    uint32_t inst_;
    int node_;
    std::vector<Q> times_;
    size_t next_ = 0;
    std::function<void(Engine&, size_t)> fire_;
};

Q uniform(Rng& rng, const Q& lo, const Q& hi, long long grid = 1000) {
    return lo + (hi - lo) * Q(static_cast<long long>(rng.below(static_cast<uint64_t>(grid))), grid);
}

uint32_t add_plain(Engine& e, const std::string& name, std::vector<int> members, std::vector<std::string> notes) {
    InstanceInfo info;
    info.name = name;
    info.members = std::move(members);
    info.notes = notes;
    info.describe = [notes](const Record& r) {
        if (r.kind == RecKind::Note) return (r.a < notes.size() ? notes[r.a] : std::string("note")) + "=" + std::to_string(r.x);
        if (r.kind == RecKind::Pulse) return std::string("pulse block=") + std::to_string(r.a);
        return std::string("?");
    };
    return e.add_instance(std::move(info));
}

uint32_t add_group(Engine& e, const std::string& name, const GroupSpec* g, std::vector<int> members,
                   std::vector<std::string> notes, bool keep_transitions, bool keep_pulses) {
    InstanceInfo in;
    in.name = name;
    in.members = std::move(members);
    in.tags = g->tags;
    in.notes = notes;
    in.keep_transitions = keep_transitions;
    in.keep_pulses = keep_pulses;
    in.describe = [g, notes](const Record& r) { return instance_describe(*g, notes, r); };
    return e.add_instance(std::move(in));
}

std::vector<int> all_nodes(int n) {
    std::vector<int> v;
    for (int i = 0; i < n; ++i) v.push_back(i);
    return v;
}

std::string lemma_detail(const LemmaTally& t) {
    std::string s = std::to_string(t.violations) + " of " + std::to_string(t.checked) + " violated";
    if (!t.examples.empty()) s += "; first: " + t.examples.front();
    return s;
}

json lemma_json(const LemmaTally& t) {
    return {{"name", t.name}, {"checked", t.checked}, {"violations", t.violations}, {"examples", t.examples}};
}

class Harness {
public:
    Harness(const Scenario& s, uint64_t seed) : s_(s), seed_(seed) {
        std::set<int> bad;
        for (const auto& f : s.faults) bad.insert(f.node);
        for (int v = 0; v < s.n; ++v)
            if (!bad.count(v)) correct_.push_back(v);
    }
    virtual ~Harness() = default;

    virtual Q horizon() const = 0;
    virtual Q chunk() const { return horizon(); }
    virtual void build(Engine& e, Rng& rng) = 0;
    virtual bool stop_early(const Engine& e) const {
        (void)e;
        return false;
    }
    virtual void evaluate(const std::vector<Record>& recs, const Q& t_end, RunResult& out) const = 0;
    virtual std::string machines() const = 0;
    // Meter bit counters at chunk ends (recursion only).
    virtual bool meters_bits() const { return false; }

    const std::vector<int>& correct() const { return correct_; }
    uint32_t meter = 0;

protected:
    void check(RunResult& out, const std::string& group, const std::string& name, bool ok, std::string detail,
               std::optional<Q> at = std::nullopt) const {
        out.checks.push_back({group, name, ok, std::move(detail), std::move(at)});
    }
    void lemma(RunResult& out, const LemmaTally& t) const {
        out.lemmas.push_back(t);
        check(out, "lemmas", t.name, t.violations == 0, lemma_detail(t));
    }
    bool correct_node(int v) const { return std::find(correct_.begin(), correct_.end(), v) != correct_.end(); }

    Scenario s_;
    uint64_t seed_;
    std::vector<int> correct_;
};

// ---------------------------------------------------------------- st

class StHarness : public Harness {
public:
    StHarness(const Scenario& s, uint64_t seed) : Harness(s, seed) {
        st_ = solve_st(s.theta, s.d, s.tau);
        spec_ = st_spec(s.n, s.f, st_, true);
        spread_ = s.init_spread.value_or(s.tau);
        if (s.tau < spread_) throw ScenarioError("init_spread: must not exceed tau");
    }
    Q horizon() const override {
        return s_.tau + st_.T0 + st_.T1 + s_.d + Q(30) * (st_.T2 + st_.T3 + Q(3) * s_.d);
    }
    void build(Engine& e, Rng& rng) override {
        inst_ = add_group(e, "st", &spec_, all_nodes(s_.n), {}, true, true);
        const int init = spec_.signal("init");
        for (int v = 0; v < s_.n; ++v) {
            e.attach(inst_, v, std::make_unique<MachineGroup>(&spec_, inst_, v, all_nodes(s_.n)));
            Q at = spread_.sign() > 0 ? uniform(rng, Q(0), spread_) : Q(0);
            e.external_signal(v, inst_, init, at);
        }
    }
    void evaluate(const std::vector<Record>& recs, const Q& t_end, RunResult& out) const override {
        std::vector<Q> after(static_cast<size_t>(s_.n), t_end);
        std::vector<bool> has(static_cast<size_t>(s_.n), false);
        for (const auto& r : recs)
            if (r.inst == inst_ && r.kind == RecKind::Transition && r.c == 0 && !has[r.node]) {
                has[r.node] = true;
                after[r.node] = r.t;
            }
        StMeasure m = measure_st(recs, inst_, correct_, after);
        const Q bound = s_.tau + st_.T0 + st_.T1 + s_.d;
        const Q lo = (st_.T2 + st_.T3) / s_.theta, hi = st_.T2 + st_.T3 + Q(3) * s_.d;
        const Q two_d = Q(2) * s_.d;
        json& M = out.metrics;
        M["pulses"] = m.count;
        M["bounds"] = {{"first_window", qs(bound)}, {"skew", qs(two_d)}, {"gap_min", qs(lo)}, {"gap_max", qs(hi)}};
        check(out, "st", "pulses", m.count >= 2, std::to_string(m.count) + " joint pulses");
        if (m.count == 0) return;
        M["t0"] = qs(m.start[0]);
        check(out, "st", "first-window", m.start[0] < bound,
              "t0=" + m.start[0].decimal(4) + " < " + bound.decimal(4), m.start[0]);
        Q worst(0);
        size_t wi = 0;
        for (size_t i = 0; i < m.skew.size(); ++i)
            if (worst < m.skew[i]) worst = m.skew[i], wi = i;
        M["max_skew"] = qs(worst);
        check(out, "skew", "skew", worst < two_d, "max skew " + worst.decimal(4) + " < " + two_d.decimal(4), m.start[wi]);
        if (m.gaps.empty()) return;
        Q gmin = m.gaps[0], gmax = m.gaps[0];
        std::optional<Q> bad;
        for (size_t i = 0; i < m.gaps.size(); ++i) {
            gmin = qmin(gmin, m.gaps[i]);
            gmax = qmax(gmax, m.gaps[i]);
            if (!bad && (m.gaps[i] < lo || !(m.gaps[i] < hi))) bad = m.start[i + 1];
        }
        M["min_gap"] = qs(gmin);
        M["max_gap"] = qs(gmax);
        check(out, "gaps", "gaps", !bad,
              "gaps " + gmin.decimal(4) + ".." + gmax.decimal(4) + " within [" + lo.decimal(4) + ", " + hi.decimal(4) + ")",
              bad);
    }
    std::string machines() const override { return spec_.dump(); }

private:
    StTimeouts st_;
    GroupSpec spec_;
    Q spread_;
    uint32_t inst_ = 0;
};

// ---------------------------------------------------------------- consensus

class ConsensusHarness : public Harness {
public:
    ConsensusHarness(const Scenario& s, uint64_t seed) : Harness(s, seed) {
        st_ = solve_st(s.theta, s.d, s.tau);
        spec_ = st_spec(s.n, s.f, st_, true);
        spread_ = s.init_spread.value_or(s.tau);
        if (s.tau < spread_) throw ScenarioError("init_spread: must not exceed tau");
        rounds_ = routine_rounds(s.routine, s.n, s.f);
        bound_ = st_simulation_time(st_, rounds_);
    }
    Q horizon() const override { return spread_ + bound_ + Q(10) * s_.d; }
    void build(Engine& e, Rng& rng) override {
        inst_ = add_group(e, "cons", &spec_, all_nodes(s_.n), ConsensusNode::note_names(), true, true);
        const uint32_t starter = add_plain(e, "start", all_nodes(s_.n), {});
        RoutineContext ctx;
        ctx.f = s_.f;
        ctx.shared_seed = rng.next();
        ctx.kings = correct_;
        for (size_t i = ctx.kings.size(); i > 1; --i) std::swap(ctx.kings[i - 1], ctx.kings[rng.below(i)]);
        const RoutineFactory make = routine_factory(s_.routine);
        for (int v = 0; v < s_.n; ++v) {
            int input = s_.inputs == "ones" ? 1 : s_.inputs == "zeros" ? 0 : static_cast<int>(rng.below(2));
            Q at = spread_.sign() > 0 ? uniform(rng, Q(0), spread_) : Q(0);
            auto c = std::make_unique<ConsensusNode>(&spec_, inst_, v, all_nodes(s_.n), make, ctx);
            ConsensusNode* cp = c.get();
            e.attach(inst_, v, std::move(c));
            e.attach(starter, v,
                     std::make_unique<Timed>(starter, v, std::vector<Q>{at},
                                             [cp, input](Engine& en, size_t) { cp->start_run(en, input); }));
        }
    }
    void evaluate(const std::vector<Record>& recs, const Q& t_end, RunResult& out) const override {
        (void)t_end;
        const size_t n = static_cast<size_t>(s_.n);
        std::vector<int> input(n, -1), output(n, -1);
        std::vector<int64_t> frames(n, 0);
        std::vector<Q> out_at(n);
        std::optional<Q> first_run;
        uint64_t late_total = 0, late_correct = 0;
        for (const auto& r : recs) {
            if (r.inst != inst_ || r.kind != RecKind::Note) continue;
            switch (r.a) {
            case ConsensusNode::NoteRun:
                input[r.node] = static_cast<int>(r.x);
                if (correct_node(r.node) && (!first_run || r.t < *first_run)) first_run = r.t;
                break;
            case ConsensusNode::NoteOutput:
                if (output[r.node] < 0) output[r.node] = static_cast<int>(r.x), out_at[r.node] = r.t;
                break;
            case ConsensusNode::NoteFrames: frames[r.node] += r.x; break;
            case ConsensusNode::NoteLate:
                ++late_total;
                if (correct_node(r.b) && correct_node(r.node)) ++late_correct;
                break;
            default: break;
            }
        }
        json& M = out.metrics;
        M["rounds"] = rounds_;
        M["bound"] = qs(bound_);
        M["late_frames"] = late_total;
        M["late_frames_correct"] = late_correct;
        bool all_out = true, agree = true, all0 = true, all1 = true;
        int y = -1;
        int64_t sent = 0;
        Q last(0);
        for (int v : correct_) {
            const size_t i = static_cast<size_t>(v);
            M["nodes"][std::to_string(v)] = {{"input", input[i]}, {"output", output[i]}, {"frames", frames[i]}};
            if (output[i] < 0) {
                all_out = false;
                continue;
            }
            last = qmax(last, out_at[i]);
            if (y >= 0 && output[i] != y) agree = false;
            y = output[i];
            sent += frames[i];
        }
        for (int v : correct_) {
            all0 = all0 && input[static_cast<size_t>(v)] == 0;
            all1 = all1 && input[static_cast<size_t>(v)] == 1;
        }
        const Q deadline = first_run.value_or(Q(0)) + bound_;
        check(out, "consensus", "termination", all_out && !(deadline < last),
              all_out ? "last output at " + last.decimal(4) + " <= " + deadline.decimal(4) : "a correct node has no output",
              last);
        check(out, "agreement", "agreement", agree, agree ? "all correct outputs equal" : "correct outputs differ");
        if (all0 || all1) {
            const int want = all1 ? 1 : 0;
            check(out, "consensus", "validity", !all_out || y == want,
                  "unanimous input " + std::to_string(want) + ", output " + std::to_string(y));
        }
        if (all0 && s_.routine.find("silent") != std::string::npos)
            check(out, "consensus", "silence", sent == 0, std::to_string(sent) + " frames from correct nodes");
        check(out, "consensus", "no-late-frames", late_correct == 0,
              std::to_string(late_correct) + " frames between correct nodes arrived after their round");
    }
    std::string machines() const override { return spec_.dump(); }

private:
    StTimeouts st_;
    GroupSpec spec_;
    Q spread_;
    int rounds_ = 0;
    Q bound_;
    uint32_t inst_ = 0;
};

// ---------------------------------------------------------------- main

MainInputs main_inputs(const Scenario& s) {
    MainInputs mi;
    mi.theta = s.theta;
    mi.d = s.d;
    mi.rounds = routine_rounds(s.routine, s.n, s.f);
    mi.rho = s.theta * (s.sigma + Q(2) * s.d);
    return mi;
}

class MainHarness : public Harness {
public:
    MainHarness(const Scenario& s, uint64_t seed) : Harness(s, seed) {
        m_ = solve_main(main_inputs(s));
        cons_spec_ = st_spec(s.n, s.f, m_.st, true);
        main_spec_ = main_spec(s.n, s.f, m_);
        Rng rng = Rng(seed).fork(11);
        t_r_ = uniform(rng, Q(0), Q(2) * m_.T_active);
        for (int v : correct_) good_[v] = t_r_ + uniform(rng, Q(0), m_.rho);
        const Q quiet = t_r_ + Q(2) * m_.rho + m_.psi_required;
        const Q end = horizon();
        for (int i = 0; i < s.spurious; ++i) {
            const int v = correct_[rng.below(correct_.size())];
            if (t_r_.sign() > 0) stray_[v].push_back(uniform(rng, Q(0), t_r_));
            const int u = correct_[rng.below(correct_.size())];
            stray_[u].push_back(uniform(rng, quiet + s.d, end));
        }
    }
    Q horizon() const override { return t_r_ + m_.stab_after_resync + Q(12) * m_.phi_plus; }
    void build(Engine& e, Rng& rng) override {
        cons_ = add_group(e, "cons", &cons_spec_, all_nodes(s_.n), ConsensusNode::note_names(), false, false);
        main_ = add_group(e, "main", &main_spec_, all_nodes(s_.n), MainNode::note_names(), true, true);
        const uint32_t oracle = add_plain(e, "oracle", all_nodes(s_.n), {});
        RoutineContext ctx;
        ctx.f = s_.f;
        ctx.shared_seed = rng.next();
        const RoutineFactory make = routine_factory(s_.routine);
        const bool random = s_.init != "clean";
        for (int v = 0; v < s_.n; ++v) {
            auto c = std::make_unique<ConsensusNode>(&cons_spec_, cons_, v, all_nodes(s_.n), make, ctx);
            auto m = std::make_unique<MainNode>(&main_spec_, main_, v, all_nodes(s_.n), c.get());
            if (random) {
                c->randomize(e, rng);
                m->randomize(e, rng);
            }
            MainNode* mp = m.get();
            e.attach(cons_, v, std::move(c));
            e.attach(main_, v, std::move(m));
            std::vector<Q> times;
            if (good_.count(v)) times.push_back(good_.at(v));
            if (stray_.count(v)) times.insert(times.end(), stray_.at(v).begin(), stray_.at(v).end());
            e.attach(oracle, v, std::make_unique<Timed>(oracle, v, times, [mp](Engine& en, size_t) { mp->resync(en); }));
        }
    }
    void evaluate(const std::vector<Record>& recs, const Q& t_end, RunResult& out) const override {
        ResyncTrace tr;
        tr.outputs.resize(static_cast<size_t>(s_.n));
        for (const auto& r : recs)
            if (r.inst == main_ && r.kind == RecKind::Note && r.a == MainNode::NoteResync) tr.outputs[r.node].push_back(r.t);
        auto good = check_good_resync(tr, correct_, m_.rho, m_.psi_required, t_end);
        json& M = out.metrics;
        M["good_resync"] = json::array();
        for (const Q& t : good) M["good_resync"].push_back(qs(t));
        check(out, "stabilisation", "good-resync", !good.empty(), good.empty() ? "no good resync pulse in the trace" : "at " + good[0].decimal(4));
        const Q lo = m_.T2 / s_.theta, hi = (m_.T2 + m_.T_consensus) / s_.theta;
        Stabilisation st = detect_stabilisation(recs, main_, correct_, lo, hi, s_.sigma, t_end);
        M["stabilisation"] = {{"found", st.found}, {"conclusive", st.conclusive}, {"t", qs(st.t)}, {"groups", st.groups}};
        M["max_skew"] = qs(st.max_skew);
        M["min_gap"] = qs(st.min_gap);
        M["max_gap"] = qs(st.max_gap);
        uint64_t aborts = 0;
        for (const auto& r : recs)
            if (r.inst == main_ && r.kind == RecKind::Note && r.a == MainNode::NoteAbort) ++aborts;
        M["aborts"] = aborts;
        if (!good.empty()) {
            const Q bound = good[0] + m_.stab_after_resync;
            M["stabilisation"]["bound"] = qs(bound);
            check(out, "stabilisation", "stabilised", st.found && st.conclusive && !(bound < st.t),
                  st.found ? "at " + st.t.decimal(4) + " <= " + bound.decimal(4) : "not found", st.t);
        }
        if (st.found) {
            check(out, "skew", "skew", !(Q(2) * s_.d < st.max_skew), "max skew " + st.max_skew.decimal(4));
            check(out, "gaps", "gaps", !(st.min_gap < lo) && st.max_gap < hi,
                  "gaps " + st.min_gap.decimal(4) + ".." + st.max_gap.decimal(4) + " within [" + lo.decimal(4) + ", " +
                      hi.decimal(4) + ")");
        }
        lemma(out, check_input_wait(recs, main_, main_spec_, correct_, s_.f, m_, t_end));
        lemma(out, check_separation(recs, main_, main_spec_, correct_, s_.f, m_, t_end));
        lemma(out, check_consistent_init(recs, main_, main_spec_, correct_, s_.f, m_, t_end));
    }
    std::string machines() const override { return cons_spec_.dump() + "\n" + main_spec_.dump(); }

private:
    MainTimeouts m_;
    GroupSpec cons_spec_, main_spec_;
    Q t_r_;
    std::map<int, Q> good_;
    std::map<int, std::vector<Q>> stray_;
    uint32_t cons_ = 0, main_ = 0;
};

// ---------------------------------------------------------------- resync

class ResyncHarness : public Harness {
public:
    ResyncHarness(const Scenario& s, uint64_t seed) : Harness(s, seed) {
        const MainTimeouts m = solve_main(main_inputs(s));
        ResyncInputs ri;
        ri.theta = s.theta;
        ri.phi = s.phi;
        ri.sigma = s.sigma;
        ri.d = s.d;
        ri.psi = m.psi_required;
        r_ = solve_resync(ri);
        part_ = partition_blocks(all_nodes(s.n), s.f);
        spec_ = resync_spec(all_nodes(s.n), s.f, part_, r_);
        for (int h = 0; h < 2; ++h) {
            int bad = 0;
            for (int v : part_.block[static_cast<size_t>(h)]) bad += correct_node(v) ? 0 : 1;
            byz_[static_cast<size_t>(h)] = bad > part_.f[static_cast<size_t>(h)];
        }
        k_ = byz_[0] ? 1 : 0;
        Rng rng = Rng(seed).fork(12);
        const Q end = horizon();
        for (int h = 0; h < 2; ++h) {
            const size_t hs = static_cast<size_t>(h);
            if (!byz_[hs]) {
                // Correct pulser: every correct member pulses within sigma, starts Phi-..Phi+ apart.
                Q p = uniform(rng, Q(0), r_.phi_plus[hs]);
                while (p < end) {
                    for (int v : part_.block[hs])
                        if (correct_node(v)) times_[hs][v].push_back(p + uniform(rng, Q(0), s.sigma));
                    p += uniform(rng, r_.phi_minus[hs], r_.phi_plus[hs]);
                }
            } else {
                // Byzantine pulser: irregular pulses at arbitrary subsets of its correct members.
                Q p = uniform(rng, Q(0), r_.phi_plus[hs]);
                while (p < end) {
                    const bool all = rng.chance(0.5);
                    for (int v : part_.block[hs])
                        if (correct_node(v) && (all || rng.chance(0.5)))
                            times_[hs][v].push_back(p + uniform(rng, Q(0), Q(3) * s.sigma));
                    p += uniform(rng, r_.phi_minus[hs] * Q(3, 10), r_.phi_plus[hs] * Q(13, 10));
                }
            }
        }
    }
    // Long enough for grouping to cover resync pulses after the good one.
    Q horizon() const override {
        const Q good = r_.good_by(k_) + r_.rho + r_.psi + s_.d;
        return qmax(good, r_.T_star) + r_.T_cool / s_.theta + Q(2) * qmax(r_.lambda_plus[0], r_.lambda_plus[1]);
    }
    void build(Engine& e, Rng& rng) override {
        inst_ = add_group(e, "resync", &spec_, all_nodes(s_.n), ResyncNode::note_names(), true, true);
        const uint32_t blocks = add_plain(e, "blocks", all_nodes(s_.n), {});
        const bool random = s_.init != "clean";
        for (int v = 0; v < s_.n; ++v) {
            auto r = std::make_unique<ResyncNode>(&spec_, inst_, v, all_nodes(s_.n), s_.theta * s_.d);
            if (random) r->randomize(e, rng);
            ResyncNode* rp = r.get();
            e.attach(inst_, v, std::move(r));
            std::vector<Q> all;
            std::vector<int> which;
            for (int h = 0; h < 2; ++h) {
                auto it = times_[static_cast<size_t>(h)].find(v);
                if (it == times_[static_cast<size_t>(h)].end()) continue;
                for (const Q& t : it->second) all.push_back(t), which.push_back(h);
            }
            std::vector<size_t> order(all.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return all[a] < all[b]; });
            std::vector<Q> ts;
            std::vector<int> hs;
            for (size_t i : order) ts.push_back(all[i]), hs.push_back(which[i]);
            e.attach(blocks, v,
                     std::make_unique<Timed>(blocks, v, ts, [rp, hs, blocks, v](Engine& en, size_t i) {
                         en.record(v, blocks, RecKind::Pulse, static_cast<uint16_t>(hs[i]));
                         rp->block_pulse(en, hs[i]);
                     }));
        }
    }
    void evaluate(const std::vector<Record>& recs, const Q& t_end, RunResult& out) const override {
        ResyncTrace tr = collect_resync(recs, inst_, spec_, s_.n);
        auto good = check_good_resync(tr, correct_, r_.rho, r_.psi, t_end);
        json& M = out.metrics;
        M["byzantine_blocks"] = {byz_[0], byz_[1]};
        M["correct_block"] = k_;
        M["good_by"] = qs(r_.good_by(k_));
        M["good_resync"] = json::array();
        for (const Q& t : good) M["good_resync"].push_back(qs(t));
        const Q bound = r_.good_by(k_);
        check(out, "resync", "good-resync", !good.empty() && !(bound < good[0]),
              good.empty() ? "no good resync pulse" : "first at " + good[0].decimal(4) + " <= " + bound.decimal(4),
              good.empty() ? std::nullopt : std::optional<Q>(good[0]));
        lemma(out, check_resync_bounds(tr, correct_, r_, k_, t_end));
        lemma(out, check_grouping(tr, correct_, r_, t_end));
    }
    std::string machines() const override { return spec_.dump(); }

private:
    ResyncTimeouts r_;
    Partition part_;
    GroupSpec spec_;
    std::array<bool, 2> byz_{false, false};
    int k_ = 0;
    std::array<std::map<int, std::vector<Q>>, 2> times_;
    uint32_t inst_ = 0;
};

// ---------------------------------------------------------------- recursion

class RecursionHarness : public Harness {
public:
    RecursionHarness(const Scenario& s, uint64_t seed) : Harness(s, seed) {
        plan_ = plan_recursion(s.n, s.f, s.theta, s.phi, s.d, s.routine);
        const LevelPlan& L = plan_.levels[0];
        bound_ = s.init == "random" ? L.stab_by : L.stab_by_settled;
        if (!L.base) {
            ResyncInputs in = L.resync.in;
            if (s.init != "random") in.T_A = {Q(0), Q(0)};
            top_resync_ = evaluate_resync(in, L.resync.X, L.resync.phi_minus, L.resync.phi_plus);
        }
    }
    Q horizon() const override { return bound_ + Q(12) * plan_.levels[0].phi_plus; }
    Q chunk() const override {
        const Q c = Q(16) * plan_.levels[0].phi_plus;
        return s_.settle ? qmin(c, *s_.settle / Q(4)) : c;
    }
    bool meters_bits() const override { return true; }
    void build(Engine& e, Rng& rng) override {
        const InitMode mode = s_.init == "clean" ? InitMode::Clean : s_.init == "random" ? InitMode::Random : InitMode::RandomTop;
        sys_ = build_system(e, plan_, mode, rng);
    }
    bool stop_early(const Engine& e) const override {
        if (!s_.settle || plan_.levels[0].base) return false;
        const LevelPlan& L = plan_.levels[0];
        Stabilisation st = detect_stabilisation(e.records(), sys_->levels[0].main, correct_, L.phi_minus, L.phi_plus,
                                                s_.sigma, e.now());
        return st.found && st.conclusive && !(e.now() < st.t + *s_.settle);
    }
    void evaluate(const std::vector<Record>& recs, const Q& t_end, RunResult& out) const override {
        json& M = out.metrics;
        const LevelPlan& L = plan_.levels[0];
        M["levels"] = json::array();
        for (size_t i = 0; i < plan_.levels.size(); ++i) {
            const LevelPlan& P = plan_.levels[i];
            json lv = {{"level", i}, {"depth", P.depth}, {"members", P.members}, {"f", P.f}};
            int faults = 0;
            for (int v : P.members) faults += correct_node(v) ? 0 : 1;
            lv["faults"] = faults;
            lv["within_budget"] = faults <= P.f;
            if (!P.base)
                for (size_t h = 0; h < 2; ++h) {
                    int bf = 0;
                    for (int v : P.part.block[h]) bf += correct_node(v) ? 0 : 1;
                    lv["blocks"].push_back({{"faults", bf}, {"budget", P.part.f[h]}, {"byzantine", bf > P.part.f[h]}});
                }
            M["levels"].push_back(lv);
        }
        if (L.base) return;
        const uint32_t main = sys_->levels[0].main;
        Stabilisation st = detect_stabilisation(recs, main, correct_, L.phi_minus, L.phi_plus, s_.sigma, t_end);
        M["stabilisation"] = {{"found", st.found}, {"conclusive", st.conclusive}, {"t", qs(st.t)},
                              {"groups", st.groups}, {"bound", qs(bound_)}};
        M["max_skew"] = qs(st.max_skew);
        M["min_gap"] = qs(st.min_gap);
        M["max_gap"] = qs(st.max_gap);
        check(out, "stabilisation", "stabilised", st.found && st.conclusive && !(bound_ < st.t),
              st.found ? "at " + st.t.decimal(4) + " <= " + bound_.decimal(4) + (st.conclusive ? "" : " (inconclusive)")
                       : "not found",
              st.t);
        if (st.found)
            check(out, "skew", "skew", !(Q(2) * s_.d < st.max_skew), "max skew " + st.max_skew.decimal(4));

        // Bit rates between the first meter reading after stabilisation and the end.
        std::map<int, std::vector<std::pair<Q, int64_t>>> meter;
        for (const auto& r : recs)
            if (r.inst == this->meter && r.kind == RecKind::Note && r.a == NoteBits) meter[r.node].emplace_back(r.t, r.x);
        bool bits_ok = st.found;
        std::string worst = "no post-stabilisation window";
        double worst_ratio = -1;
        for (int v : correct_) {
            const auto& xs = meter[v];
            auto it = std::find_if(xs.begin(), xs.end(), [&](const auto& p) { return !(p.first < st.t); });
            if (!st.found || it == xs.end() || xs.empty() || !(it->first < xs.back().first)) {
                bits_ok = false;
                continue;
            }
            const Q rate = Q(xs.back().second - it->second) / (xs.back().first - it->first);
            const Q budget = plan_.bit_budget(v);
            M["bits"][std::to_string(v)] = {{"rate", qs(rate)}, {"budget", qs(budget)}};
            const double ratio = (rate / budget).to_double();
            if (ratio > worst_ratio) {
                worst_ratio = ratio;
                worst = "node " + std::to_string(v) + " " + rate.decimal(5) + " bits/time vs budget " + budget.decimal(5);
            }
            if (Q(2) * budget < rate) bits_ok = false;
        }
        check(out, "bits", "bit-rate", bits_ok, worst);

        uint64_t aborts = 0;
        for (const auto& r : recs)
            if (r.inst == main && r.kind == RecKind::Note && r.a == MainNode::NoteAbort) ++aborts;
        M["aborts"] = aborts;
        const GroupSpec& ms = *sys_->levels[0].main_spec;
        lemma(out, check_input_wait(recs, main, ms, correct_, L.f, L.main, t_end));
        lemma(out, check_separation(recs, main, ms, correct_, L.f, L.main, t_end));
        lemma(out, check_consistent_init(recs, main, ms, correct_, L.f, L.main, t_end));

        ResyncTrace tr = collect_resync(recs, sys_->levels[0].resync, *sys_->levels[0].resync_spec, s_.n);
        auto good = check_good_resync(tr, correct_, top_resync_.rho, top_resync_.psi, t_end);
        M["good_resync"] = json::array();
        for (const Q& t : good) M["good_resync"].push_back(qs(t));
        LemmaTally bounds;
        bounds.name = "resync-bounds";
        const auto blocks = M["levels"][0]["blocks"];
        for (int h = 0; h < 2; ++h)
            if (!blocks[static_cast<size_t>(h)]["byzantine"].get<bool>())
                bounds.merge(check_resync_bounds(tr, correct_, top_resync_, h, t_end));
        lemma(out, bounds);
        lemma(out, check_grouping(tr, correct_, top_resync_, t_end));
    }
    std::string machines() const override {
        std::string s;
        for (const auto& g : sys_->specs) s += g->dump() + "\n";
        return s;
    }
    const Plan& plan() const { return plan_; }

private:
    Plan plan_;
    Q bound_;
    ResyncTimeouts top_resync_;
    std::unique_ptr<System> sys_;
};

std::unique_ptr<Harness> make_harness(const Scenario& s, uint64_t seed) {
    validate_scenario(s);
    switch (s.system) {
    case SystemKind::St: return std::make_unique<StHarness>(s, seed);
    case SystemKind::Main: return std::make_unique<MainHarness>(s, seed);
    case SystemKind::Resync: return std::make_unique<ResyncHarness>(s, seed);
    case SystemKind::Recursion: return std::make_unique<RecursionHarness>(s, seed);
    case SystemKind::Consensus: return std::make_unique<ConsensusHarness>(s, seed);
    }
    throw ScenarioError("system: unsupported");
}

std::vector<ClockFn> make_clocks(const Scenario& s, Rng rng, const Q& horizon) {
    std::vector<ClockFn> clocks;
    Q seg = s.clocks.segment;
    // Keep the segment table bounded on very long horizons.
    const Q cap = (horizon / Q(20000)).ceil();
    if (seg < cap) seg = cap;
    for (int v = 0; v < s.n; ++v) {
        const Q offset = uniform(rng, Q(0), s.clocks.max_offset);
        if (s.clocks.kind == "ideal") {
            clocks.push_back(ClockFn::constant(Q(1), offset));
        } else if (s.clocks.kind == "split") {
            clocks.push_back(ClockFn::constant(v % 2 ? s.theta : Q(1), offset));
        } else {
            std::vector<ClockFn::Segment> segs;
            for (Q t(0); t < horizon + seg; t += seg) segs.push_back({t, rng.below(2) ? s.theta : Q(1)});
            clocks.emplace_back(offset, std::move(segs));
        }
        clocks.back().validate(s.theta);
    }
    return clocks;
}

DelayModel make_delays(const Scenario& s, uint64_t seed) {
    if (s.delays.kind == "constant") return DelayModel::constant(s.d, s.delays.value);
    return DelayModel::random(s.d, seed, s.delays.grid, s.delays.kind == "bimodal");
}

struct World {
    std::unique_ptr<Harness> h;
    std::unique_ptr<FaultPlan> adv;
    std::unique_ptr<Engine> e;
    Q duration;
};

World make_world(const Scenario& s, uint64_t seed, const std::optional<Q>& duration) {
    World w;
    w.h = make_harness(s, seed);
    w.duration = duration ? *duration : s.duration ? *s.duration : w.h->horizon();
    Rng root(seed);
    Rng clocks = root.fork(1);
    const uint64_t dseed = root.fork(2).next();
    w.e = std::make_unique<Engine>(s.n, make_delays(s, dseed), make_clocks(s, clocks, w.duration));
    w.e->seed(root.fork(3).next());
    w.adv = std::make_unique<FaultPlan>(s.faults, root.fork(4).next());
    w.e->set_adversary(w.adv.get());
    w.h->meter = add_plain(*w.e, "meter", all_nodes(s.n), {"bits", "end"});
    Rng build = root.fork(5);
    w.h->build(*w.e, build);
    return w;
}

std::string run_name(const Scenario& s, uint64_t seed) { return s.name + "#" + std::to_string(seed); }

void finish(const Scenario& s, Harness& h, const std::vector<Record>& recs, const Q& t_end, RunResult& out) {
    out.metrics["system"] = system_name(s.system);
    out.metrics["t_end"] = qs(t_end);
    h.evaluate(recs, t_end, out);
    json lem = json::array();
    for (const auto& t : out.lemmas) lem.push_back(lemma_json(t));
    out.metrics["lemmas"] = lem;
    if (!s.asserts.empty()) {
        std::set<std::string> on(s.asserts.begin(), s.asserts.end());
        std::vector<Check> kept;
        for (auto& c : out.checks)
            if (on.count(c.group)) kept.push_back(std::move(c));
        out.checks = std::move(kept);
    }
    json checks = json::array();
    for (const auto& c : out.checks) {
        json cj = {{"group", c.group}, {"name", c.name}, {"ok", c.ok}, {"detail", c.detail}};
        if (c.at) cj["at"] = qs(*c.at);
        checks.push_back(cj);
    }
    out.metrics["checks"] = checks;
}

}  // namespace

RunResult run_scenario(const Scenario& s, uint64_t seed, const RunOptions& opt) {
    World w = make_world(s, seed, opt.duration);
    Engine& e = *w.e;
    RunResult out;
    out.run_id = run_name(s, seed);
    if (opt.csv) e.set_csv(opt.csv, out.run_id);
    const auto t0 = std::chrono::steady_clock::now();
    e.start();
    auto meter = [&]() {
        if (!w.h->meters_bits()) return;
        for (int v : w.h->correct())
            e.record(v, w.h->meter, RecKind::Note, NoteBits, 0, 0, static_cast<int64_t>(e.bits_sent()[static_cast<size_t>(v)]));
    };
    meter();
    const Q step = w.h->chunk();
    Q t(0);
    while (t < w.duration) {
        t = qmin(w.duration, t + step);
        e.advance(t);
        meter();
        if (w.h->stop_early(e)) break;
    }
    e.record(0, w.h->meter, RecKind::Note, NoteEnd);
    out.t_end = e.now();
    out.trace_hash = e.trace_hash();
    out.events = e.events_processed();
    finish(s, *w.h, e.records(), out.t_end, out);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opt.keep_machines) out.machines = w.h->machines();
    return out;
}

RunResult evaluate_trace(const Scenario& s, uint64_t seed, std::istream& csv) {
    World w = make_world(s, seed, std::nullopt);
    std::vector<Record> recs;
    std::string line;
    std::optional<Q> t_end;
    while (std::getline(csv, line)) {
        if (line.empty() || line.rfind("run_id,", 0) == 0) continue;
        Record r = Engine::parse_csv(line);
        if (r.inst == w.h->meter && r.kind == RecKind::Note && r.a == NoteEnd) t_end = r.t;
        recs.push_back(r);
    }
    if (!t_end) throw ScenarioError("trace has no end marker");
    RunResult out;
    out.run_id = run_name(s, seed);
    out.t_end = *t_end;
    finish(s, *w.h, recs, *t_end, out);
    return out;
}

RunResult run_to_dir(const Scenario& s, uint64_t seed, const std::string& dir, const RunOptions& opt) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir + "/trace.csv");
    csv << Engine::csv_header() << '\n';
    RunOptions o = opt;
    o.csv = &csv;
    o.keep_machines = true;
    RunResult r = run_scenario(s, seed, o);
    json j = r.metrics;
    j["run_id"] = r.run_id;
    j["seed"] = seed;
    j["scenario"] = scenario_json(s);
    j["passed"] = r.passed();
    std::ofstream(dir + "/metrics.json") << j.dump(2) << '\n';
    std::ofstream(dir + "/machines.txt") << r.machines;
    return r;
}

// ------------------------------------------------------------ reports

std::string solve_report(const Scenario& s) {
    validate_scenario(s);
    std::ostringstream os;
    switch (s.system) {
    case SystemKind::St:
    case SystemKind::Consensus: {
        StTimeouts st = solve_st(s.theta, s.d, s.tau);
        os << "ST pulser (theta=" << s.theta << ", d=" << s.d << ", tau=" << s.tau << ")\n"
           << "  T0=" << st.T0 << " T1=" << st.T1 << " T2=" << st.T2 << " T3=" << st.T3 << "\n"
           << rows_str(check_st(st));
        if (s.system == SystemKind::Consensus) {
            const int R = routine_rounds(s.routine, s.n, s.f);
            os << "routine " << s.routine << ": " << R << " rounds, simulation bound "
               << st_simulation_time(st, R).decimal(4) << "\n";
        }
        break;
    }
    case SystemKind::Main: {
        MainTimeouts m = solve_main(main_inputs(s));
        os << "main pulser (theta=" << s.theta << ", rounds=" << m.in.rounds << ")\n"
           << "  T1=" << m.T1 << " T_listen=" << m.T_listen << " T2=" << m.T2 << " T_consensus=" << m.T_consensus
           << " T_wait=" << m.T_wait << " T_active=" << m.T_active << "\n"
           << "  Phi-=" << m.phi_minus.decimal(4) << " Phi+=" << m.phi_plus.decimal(4)
           << " Psi required=" << m.psi_required.decimal(4) << "\n"
           << rows_str(check_main(m));
        break;
    }
    case SystemKind::Resync: {
        MainTimeouts m = solve_main(main_inputs(s));
        ResyncInputs ri;
        ri.theta = s.theta;
        ri.phi = s.phi;
        ri.sigma = s.sigma;
        ri.d = s.d;
        ri.psi = m.psi_required;
        ResyncTimeouts r = solve_resync(ri);
        os << "resync (theta=" << s.theta << ", phi=" << s.phi << ", Psi=" << r.psi.decimal(4) << ")\n"
           << "  X=" << r.X << " T_vote=" << r.T_vote << " T_cool=" << r.T_cool.decimal(4)
           << " T*=" << r.T_star.decimal(4) << "\n"
           << rows_str(check_resync(r));
        break;
    }
    case SystemKind::Recursion: {
        Plan p = plan_recursion(s.n, s.f, s.theta, s.phi, s.d, s.routine);
        for (const auto& L : p.levels) {
            if (L.base) continue;
            os << "level n=" << L.members.size() << " f=" << L.f << " main\n" << rows_str(check_main(L.main));
            os << "level n=" << L.members.size() << " f=" << L.f << " resync\n" << rows_str(check_resync(L.resync));
        }
        break;
    }
    }
    return os.str();
}

std::string describe_scenario(const Scenario& s, bool dump_machines) {
    std::ostringstream os;
    os << "scenario " << s.name << ": system=" << system_name(s.system) << " n=" << s.n << " f=" << s.f
       << " theta=" << s.theta << " faults=" << s.faults.size() << "\n";
    if (s.system == SystemKind::Recursion) {
        Plan p = plan_recursion(s.n, s.f, s.theta, s.phi, s.d, s.routine);
        os << p.describe();
        for (int v = 0; v < s.n; ++v) os << "node " << v << " bit budget " << p.bit_budget(v).decimal(6) << "/time\n";
    } else {
        os << solve_report(s);
    }
    if (dump_machines) {
        World w = make_world(s, 0, Q(1));
        os << "\n" << w.h->machines();
    }
    return os.str();
}

// ------------------------------------------------------------ sweep

std::vector<SweepCell> sweep(const Scenario& base, const std::optional<json>& grid, const std::vector<uint64_t>& seeds,
                             int threads) {
    std::vector<json> cells;
    if (!grid) {
        cells.push_back(json::object());
    } else {
        if (!grid->is_object()) throw ScenarioError("sweep: grid must be an object of value lists");
        if (!grid->empty()) cells.push_back(json::object());
        for (auto it = grid->begin(); it != grid->end(); ++it) {
            if (!it.value().is_array()) throw ScenarioError("sweep." + it.key() + ": expected a list");
            std::vector<json> next;
            for (const auto& c : cells)
                for (const auto& v : it.value()) {
                    json c2 = c;
                    c2[it.key()] = v;
                    next.push_back(c2);
                }
            cells = std::move(next);
        }
    }
    std::vector<Scenario> scen;
    const json bj = scenario_json(base);
    for (const auto& c : cells) {
        json j = bj;
        for (auto it = c.begin(); it != c.end(); ++it) j[it.key()] = it.value();
        scen.push_back(parse_scenario(j));
    }
    struct Job {
        size_t cell;
        uint64_t seed;
    };
    std::vector<Job> jobs;
    for (size_t i = 0; i < cells.size(); ++i)
        for (uint64_t sd : seeds) jobs.push_back({i, sd});
    std::vector<RunResult> results(jobs.size());
    std::vector<std::string> errors(jobs.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t i; (i = next++) < jobs.size();) {
            try {
                results[i] = run_scenario(scen[jobs[i].cell], jobs[i].seed);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int nt = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < nt; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<SweepCell> out(cells.size());
    for (size_t i = 0; i < cells.size(); ++i) out[i].params = cells[i];
    std::vector<double> sum(cells.size(), 0);
    for (size_t j = 0; j < jobs.size(); ++j) {
        SweepCell& c = out[jobs[j].cell];
        ++c.runs;
        if (!errors[j].empty()) {
            ++c.violations;
            if (c.first_failure.empty()) c.first_failure = "seed " + std::to_string(jobs[j].seed) + ": " + errors[j];
            continue;
        }
        const RunResult& r = results[j];
        if (r.passed()) ++c.passed;
        for (const auto& ch : r.checks)
            if (!ch.ok) {
                ++c.violations;
                if (c.first_failure.empty())
                    c.first_failure = "seed " + std::to_string(jobs[j].seed) + ": " + ch.group + "/" + ch.name + " " + ch.detail;
            }
        const json& m = r.metrics;
        if (m.contains("stabilisation") && m["stabilisation"]["found"].get<bool>()) {
            const double t = Q::parse(m["stabilisation"]["t"].get<std::string>()).to_double();
            ++c.stabilised;
            c.max_stab = std::max(c.max_stab, t);
            sum[jobs[j].cell] += t;
        }
    }
    for (size_t i = 0; i < cells.size(); ++i)
        if (out[i].stabilised) out[i].mean_stab = sum[i] / static_cast<double>(out[i].stabilised);
    return out;
}

std::string sweep_table(const std::vector<SweepCell>& cells) {
    std::ostringstream os;
    os << "cell  runs  passed  violations  stabilised  max_stab      mean_stab     params\n";
    char buf[160];
    for (size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        std::snprintf(buf, sizeof buf, "%-5zu %-5llu %-7llu %-11llu %-11llu %-13.3f %-13.3f ", i,
                      static_cast<unsigned long long>(c.runs), static_cast<unsigned long long>(c.passed),
                      static_cast<unsigned long long>(c.violations), static_cast<unsigned long long>(c.stabilised),
                      c.max_stab, c.mean_stab);
        os << buf << c.params.dump() << "\n";
        if (!c.first_failure.empty()) os << "      first failure: " << c.first_failure << "\n";
    }
    return os.str();
}

}  // namespace psync
