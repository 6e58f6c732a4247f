#include "psync/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace psync {

namespace {

int count_eq(const std::vector<std::optional<std::string>>& frames, const char* s) {
    int c = 0;
    for (const auto& fr : frames)
        if (fr && *fr == s) ++c;
    return c;
}

class PhaseKing : public Routine {
public:
    PhaseKing(const RoutineContext& ctx, int phases, std::vector<int> kings)
        : n_(ctx.n), f_(ctx.f), self_(ctx.self), phases_(phases), kings_(std::move(kings)) {}

    int rounds() const override { return 3 * phases_; }
    void init(int input) override {
        v_ = input ? 1 : 0;
        strong_ = false;
        prop_ = 0;
    }
    std::optional<Frame> send(int r) override {
        if (r < 1 || r > rounds()) return std::nullopt;
        switch ((r - 1) % 3) {
        case 0:
            if (v_ == 1) return Frame{"1", 1};
            break;
        case 1:
            if (prop_ == 1) return Frame{"1", 1};
            if (prop_ == 2) return Frame{"2", 1};
            break;
        default:
            if (self_ == king((r - 1) / 3) && v_ == 1) return Frame{"1", 1};
            break;
        }
        return std::nullopt;
    }
    void receive(int r, const std::vector<std::optional<std::string>>& fr) override {
        if (r < 1 || r > rounds()) return;
        switch ((r - 1) % 3) {
        case 0: {
            int c1 = count_eq(fr, "1");
            int c0 = n_ - c1;
            prop_ = c1 >= n_ - f_ ? 1 : (c0 >= n_ - f_ ? 0 : 2);
            break;
        }
        case 1: {
            int p1 = count_eq(fr, "1");
            int p0 = n_ - p1 - count_eq(fr, "2");
            if (p1 > f_) {
                v_ = 1;
                strong_ = p1 >= n_ - f_;
            } else if (p0 > f_) {
                v_ = 0;
                strong_ = p0 >= n_ - f_;
            } else {
                strong_ = false;
            }
            break;
        }
        default: {
            if (!strong_) {
                const auto& k = fr[static_cast<size_t>(king((r - 1) / 3))];
                v_ = (k && *k == "1") ? 1 : 0;
            }
            if (r == rounds()) done_ = true;
            break;
        }
        }
    }
    int output() const override { return v_; }
    bool terminated() const override { return done_; }

private:
    int king(int phase) const {
        if (kings_.empty()) return phase % n_;
        return kings_[static_cast<size_t>(phase) % kings_.size()];
    }
    int n_, f_, self_, phases_;
    std::vector<int> kings_;
    int v_ = 0;
    int prop_ = 0;
    bool strong_ = false;
    bool done_ = false;
};

class Silent : public Routine {
public:
    Silent(std::unique_ptr<Routine> inner, const RoutineContext& ctx) : inner_(std::move(inner)), f_(ctx.f) {}

    int rounds() const override { return inner_->rounds() + 2; }
    void init(int input) override {
        input_ = input ? 1 : 0;
        wakes_ = 0;
        inner_->init(0);
    }
    std::optional<Frame> send(int r) override {
        if (r == 1) return input_ ? std::optional<Frame>(Frame{"w", 1}) : std::nullopt;
        if (r == 2) return wakes_ > f_ ? std::optional<Frame>(Frame{"c", 1}) : std::nullopt;
        return inner_->send(r - 2);
    }
    void receive(int r, const std::vector<std::optional<std::string>>& fr) override {
        if (r == 1) {
            wakes_ = count_eq(fr, "w");
        } else if (r == 2) {
            bool awake = count_eq(fr, "c") > f_;
            inner_->init(awake && input_ ? 1 : 0);
        } else {
            inner_->receive(r - 2, fr);
        }
    }
    int output() const override { return inner_->output(); }
    bool terminated() const override { return inner_->terminated(); }

private:
    std::unique_ptr<Routine> inner_;
    int f_;
    int input_ = 0;
    int wakes_ = 0;
};

class Truncated : public Routine {
public:
    Truncated(std::unique_ptr<Routine> inner, int expected) : inner_(std::move(inner)), R_(2 * expected) {}

    int rounds() const override { return R_; }
    void init(int input) override {
        input_ = input ? 1 : 0;
        inner_->init(input_);
    }
    std::optional<Frame> send(int r) override {
        if (inner_->terminated() || r > inner_->rounds()) return std::nullopt;
        return inner_->send(r);
    }
    void receive(int r, const std::vector<std::optional<std::string>>& fr) override {
        if (inner_->terminated() || r > inner_->rounds()) return;
        inner_->receive(r, fr);
    }
    int output() const override { return inner_->terminated() ? inner_->output() : input_; }

private:
    std::unique_ptr<Routine> inner_;
    int R_;
    int input_ = 0;
};

constexpr int kMockCap = 64;

}  // namespace

int mock_phase_count(uint64_t shared_seed) {
    Rng r(shared_seed ^ 0x6d6f636bULL);
    int k = 1;
    while (k < kMockCap && r.chance(0.5)) ++k;
    return k;
}

std::unique_ptr<Routine> make_phase_king(const RoutineContext& ctx) {
    return std::make_unique<PhaseKing>(ctx, ctx.f + 1, std::vector<int>{});
}

std::unique_ptr<Routine> make_silent(std::unique_ptr<Routine> inner, const RoutineContext& ctx) {
    return std::make_unique<Silent>(std::move(inner), ctx);
}

std::unique_ptr<Routine> make_mock_expected(const RoutineContext& ctx) {
    std::vector<int> kings = ctx.kings;
    if (kings.empty()) kings.push_back(0);
    return std::make_unique<PhaseKing>(ctx, mock_phase_count(ctx.shared_seed), kings);
}

std::unique_ptr<Routine> make_truncated(std::unique_ptr<Routine> inner, int expected_rounds) {
    return std::make_unique<Truncated>(std::move(inner), expected_rounds);
}

RoutineFactory routine_factory(const std::string& name) {
    if (name == "phase-king") return [](const RoutineContext& c) { return make_phase_king(c); };
    if (name == "phase-king-silent")
        return [](const RoutineContext& c) { return make_silent(make_phase_king(c), c); };
    if (name == "mock-expected-raw") return [](const RoutineContext& c) { return make_mock_expected(c); };
    if (name == "mock-expected")
        return [](const RoutineContext& c) { return make_truncated(make_mock_expected(c), 6); };
    throw std::invalid_argument("unknown consensus routine '" + name + "'");
}

std::vector<std::string> routine_names() { return {"phase-king", "phase-king-silent", "mock-expected", "mock-expected-raw"}; }

int routine_rounds(const std::string& name, int n, int f) {
    if (name == "mock-expected-raw") return 3 * kMockCap;
    RoutineContext ctx;
    ctx.n = n;
    ctx.f = f;
    return routine_factory(name)(ctx)->rounds();
}

// ------------------------------------------------------------ sync driver

SyncRun run_sync(const RoutineFactory& make, int n, int f, const std::vector<int>& inputs,
                 const std::vector<bool>& faulty, const SyncScript& script, uint64_t shared_seed) {
    std::vector<int> kings;
    for (int i = 0; i < n; ++i)
        if (!faulty[static_cast<size_t>(i)]) kings.push_back(i);
    Rng kr(shared_seed ^ 0x6b696e67ULL);
    for (size_t i = kings.size(); i > 1; --i) std::swap(kings[i - 1], kings[kr.below(i)]);

    std::vector<std::unique_ptr<Routine>> rt(static_cast<size_t>(n));
    int R = 0;
    for (int i = 0; i < n; ++i) {
        if (faulty[static_cast<size_t>(i)]) continue;
        RoutineContext ctx{n, f, i, shared_seed, kings};
        rt[static_cast<size_t>(i)] = make(ctx);
        rt[static_cast<size_t>(i)]->init(inputs[static_cast<size_t>(i)]);
        R = std::max(R, rt[static_cast<size_t>(i)]->rounds());
    }
    SyncRun out;
    out.rounds = R;
    std::vector<std::optional<std::string>> view(static_cast<size_t>(n));
    std::vector<std::optional<std::string>> fr(static_cast<size_t>(n));
    for (int r = 1; r <= R; ++r) {
        for (int i = 0; i < n; ++i) {
            view[static_cast<size_t>(i)].reset();
            if (!rt[static_cast<size_t>(i)]) continue;
            if (auto m = rt[static_cast<size_t>(i)]->send(r)) {
                view[static_cast<size_t>(i)] = m->data;
                out.correct_messages += static_cast<uint64_t>(n);
                out.correct_bits += static_cast<uint64_t>(m->bits) * static_cast<uint64_t>(n);
            }
        }
        for (int j = 0; j < n; ++j) {
            if (!rt[static_cast<size_t>(j)]) continue;
            for (int i = 0; i < n; ++i)
                fr[static_cast<size_t>(i)] = rt[static_cast<size_t>(i)] ? view[static_cast<size_t>(i)]
                                                                         : script(r, i, j, view);
            rt[static_cast<size_t>(j)]->receive(r, fr);
        }
    }
    out.outputs.assign(static_cast<size_t>(n), -1);
    for (int i = 0; i < n; ++i)
        if (rt[static_cast<size_t>(i)]) out.outputs[static_cast<size_t>(i)] = rt[static_cast<size_t>(i)]->output();
    return out;
}

SyncScript scripted_adversary(uint64_t k, int rounds) {
    static const char* const alphabet[] = {"1", "2", "w", "c", "zz"};
    Rng r(k * 0x9e3779b97f4a7c15ULL + 17);
    const int mode = static_cast<int>(r.below(6));
    const uint64_t salt = r.next();
    const int quiet_from = 1 + static_cast<int>(r.below(static_cast<uint64_t>(std::max(rounds, 1)) + 1));
    return [mode, salt, quiet_from](int round, int from, int to,
                                    const std::vector<std::optional<std::string>>& view) -> std::optional<std::string> {
        uint64_t h = salt ^ (static_cast<uint64_t>(round) * 0xbf58476d1ce4e5b9ULL) ^
                     (static_cast<uint64_t>(from) << 40) ^ (static_cast<uint64_t>(to) << 20);
        h ^= h >> 31;
        h *= 0x94d049bb133111ebULL;
        h ^= h >> 29;
        int ones = 0, present = 0;
        for (const auto& m : view)
            if (m) {
                ++present;
                if (*m == "1") ++ones;
            }
        switch (mode) {
        case 0:  // per-receiver random symbol or silence
            if (h % 3 == 0) return std::nullopt;
            return std::string(alphabet[(h >> 8) % 5]);
        case 1:  // split receivers by parity
            if (to % 2 == 0) return std::string(round % 2 ? "1" : "2");
            return std::nullopt;
        case 2:  // echo whatever most correct members sent, to half the receivers
            if ((h & 1) && present) return view[static_cast<size_t>((h >> 4) % view.size())];
            return std::nullopt;
        case 3:  // contradict the majority
            if (2 * ones >= present && present) return std::nullopt;
            return std::string("1");
        case 4:  // talk until some round, then fall silent
            if (round >= quiet_from) return std::nullopt;
            return std::string(h & 1 ? "1" : "2");
        default:  // always claim 1
            return std::string("1");
        }
    };
}

Wilson wilson(uint64_t successes, uint64_t trials, double z) {
    if (trials == 0) return {0, 0, 1};
    const double nn = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double den = 1 + z2 / nn;
    const double mid = (p + z2 / (2 * nn)) / den;
    const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / den;
    return {p, std::max(0.0, mid - half), std::min(1.0, mid + half)};
}

// ------------------------------------------------------------ over ST pulses

ConsensusNode::ConsensusNode(const GroupSpec* spec, uint32_t inst, int node, std::vector<int> members,
                             RoutineFactory make, RoutineContext ctx)
    : MachineGroup(spec, inst, node, std::move(members)), make_(std::move(make)), ctx_(std::move(ctx)) {
    ctx_.n = static_cast<int>(members_.size());
    ctx_.self = static_cast<int>(std::find(members_.begin(), members_.end(), node) - members_.begin());
}

void ConsensusNode::start_run(Engine& e, int input) {
    RoutineContext c = ctx_;
    c.shared_seed = ctx_.shared_seed + run_id_++;
    routine_ = make_(c);
    routine_->init(input);
    R_ = routine_->rounds();
    running_ = true;
    pulses_ = 0;
    frames_ = 0;
    pending_output_.reset();
    inbox_.assign(static_cast<size_t>(R_) + 1, std::vector<std::optional<std::string>>(members_.size()));
    ++runs_;
    e.record(node_, inst_, RecKind::Note, NoteRun, 0, 0, input);
    raise(e, spec_->signal("init"));
}

void ConsensusNode::halt(Engine& e) {
    if (running_) {
        running_ = false;
        e.record(node_, inst_, RecKind::Note, NoteHalt, 0, 0, pulses_);
        e.record(node_, inst_, RecKind::Note, NoteFrames, 0, 0, frames_);
    }
    if (state(0) != spec_->state(0, "OFF")) raise(e, spec_->signal("halt"));
}

void ConsensusNode::on_pulse(Engine& e) {
    if (!running_) return;
    ++pulses_;
    if (pulses_ >= 2 && pulses_ - 1 <= R_) routine_->receive(pulses_ - 1, inbox_[static_cast<size_t>(pulses_ - 1)]);
    if (pulses_ <= R_) {
        if (auto fr = routine_->send(pulses_)) {
            ++frames_;
            e.broadcast(node_, inst_, kFrameTag, std::string(1, static_cast<char>(pulses_)) + fr->data, fr->bits);
        }
    } else {
        pending_output_ = routine_->output();
        running_ = false;
        post_signal(spec_->signal("halt"));
    }
}

void ConsensusNode::on_foreign(Engine& e, int from, uint16_t tag, const std::string& payload) {
    if (tag != kFrameTag || payload.empty() || !running_) return;
    auto it = std::find(members_.begin(), members_.end(), from);
    if (it == members_.end()) return;
    const int r = static_cast<unsigned char>(payload[0]);
    if (r < 1 || r > R_) return;
    if (r <= pulses_ - 1) {
        ++late_;
        e.record(node_, inst_, RecKind::Note, NoteLate, static_cast<uint16_t>(from), 0, r);
        return;
    }
    auto& slot = inbox_[static_cast<size_t>(r)][static_cast<size_t>(it - members_.begin())];
    if (!slot) slot = payload.substr(1);
}

void ConsensusNode::flush(Engine& e) {
    if (!pending_output_) return;
    int y = *pending_output_;
    pending_output_.reset();
    e.record(node_, inst_, RecKind::Note, NoteFrames, 0, 0, frames_);
    e.record(node_, inst_, RecKind::Note, NoteOutput, 0, 0, y);
    if (done_) done_(e, y);
}

void ConsensusNode::on_message(Engine& e, int node, int from, uint16_t tag, const std::string& payload) {
    MachineGroup::on_message(e, node, from, tag, payload);
    flush(e);
}

void ConsensusNode::on_wake(Engine& e, int node) {
    MachineGroup::on_wake(e, node);
    flush(e);
}

void ConsensusNode::on_signal(Engine& e, int node, int signal) {
    MachineGroup::on_signal(e, node, signal);
    flush(e);
}

}  // namespace psync
