#include "psync/byzantine.hpp"

#include <algorithm>
#include <stdexcept>

namespace psync {

Behaviour parse_behaviour(const std::string& s) {
    if (s == "silent") return Behaviour::Silent;
    if (s == "crash") return Behaviour::CrashAt;
    if (s == "random") return Behaviour::Random;
    if (s == "equivocator") return Behaviour::Equivocator;
    if (s == "state-mimic") return Behaviour::StateMimic;
    if (s == "spoiler") return Behaviour::Spoiler;
    throw std::invalid_argument("unknown behaviour '" + s + "'");
}

const char* behaviour_name(Behaviour b) {
    switch (b) {
    case Behaviour::Silent: return "silent";
    case Behaviour::CrashAt: return "crash";
    case Behaviour::Random: return "random";
    case Behaviour::Equivocator: return "equivocator";
    case Behaviour::StateMimic: return "state-mimic";
    case Behaviour::Spoiler: return "spoiler";
    }
    return "?";
}

FaultPlan::FaultPlan(std::vector<Fault> faults, uint64_t seed) : faults_(std::move(faults)), rng_(seed ^ 0xadd5ULL) {
    for (size_t i = 0; i < faults_.size(); ++i) by_node_[faults_[i].node] = i;
}

std::vector<int> FaultPlan::faulty() const {
    std::vector<int> v;
    for (const auto& [node, i] : by_node_) v.push_back(node);
    return v;
}

bool FaultPlan::runs_stack(int node) const {
    auto k = fault(node).kind;
    return k == Behaviour::CrashAt || k == Behaviour::StateMimic;
}

void FaultPlan::send_some(Engine& e, int from, uint32_t inst, uint16_t tag, const std::string& payload, uint64_t mask) {
    for (int v : e.instance(inst).members)
        if ((mask >> v) & 1ULL) {
            e.inject(from, v, inst, tag, payload);
            ++injected_;
        }
}

std::string FaultPlan::garbage(Engine& e, uint32_t inst, uint16_t tag) {
    const auto& tags = e.instance(inst).tags;
    if (tag < tags.size() && tags[tag] == "frame") {
        static const char* const sym[] = {"1", "2", "w", "c", "x"};
        return std::string(1, static_cast<char>(1 + rng_.below(16))) + sym[rng_.below(5)];
    }
    return {};
}

void FaultPlan::on_faulty_send(Engine& e, int node, uint32_t inst, uint16_t tag, const std::string& payload,
                               const std::vector<int>& receivers) {
    const Fault& f = fault(node);
    uint64_t mask = 0;
    for (int v : receivers) {
        if (f.kind == Behaviour::CrashAt && !(e.now() < f.crash_at)) continue;
        if (f.kind == Behaviour::StateMimic && rng_.chance(0.25)) continue;
        mask |= 1ULL << v;
    }
    send_some(e, node, inst, tag, payload, mask);
}

void FaultPlan::observe(Engine& e, int from, int to, uint32_t inst, uint16_t tag, const std::string& payload) {
    (void)from;
    const Fault& f = fault(to);
    if (f.kind != Behaviour::Equivocator && f.kind != Behaviour::Spoiler) return;
    const auto& info = e.instance(inst);
    if (std::find(info.members.begin(), info.members.end(), to) == info.members.end()) return;
    const std::string& name = tag < info.tags.size() ? info.tags[tag] : std::string();
    if (f.kind == Behaviour::Spoiler && name.rfind("vote", 0) != 0) return;
    auto key = std::make_pair(inst, tag);
    auto it = last_echo_.find(key);
    if (it != last_echo_.end() && e.now() < it->second + e.d() / Q(4)) return;
    last_echo_[key] = e.now();
    uint64_t mask = 0;
    if (f.kind == Behaviour::Equivocator) {
        // Fixed half: members whose position parity differs from the node's.
        const auto pos = [&](int v) { return std::find(info.members.begin(), info.members.end(), v) - info.members.begin(); };
        for (int v : info.members)
            if ((pos(v) + pos(to)) % 2 == 1) mask |= 1ULL << v;
    } else {
        for (int v : info.members)
            if (rng_.chance(0.5)) mask |= 1ULL << v;
    }
    send_some(e, to, inst, tag, payload, mask);
}

void FaultPlan::schedule(Engine& e, int node) {
    const Fault& f = fault(node);
    Q gap = f.period * Q(static_cast<long long>(rng_.below(2000)) + 1, 1000);
    e.adversary_wake(node, e.now() + gap, static_cast<uint64_t>(node));
}

void FaultPlan::on_start(Engine& e) {
    for (const auto& f : faults_)
        if (f.kind == Behaviour::Random || f.kind == Behaviour::Equivocator || f.kind == Behaviour::Spoiler)
            schedule(e, f.node);
}

void FaultPlan::on_wake(Engine& e, int node, uint64_t) {
    const Fault& f = fault(node);
    std::vector<uint32_t> mine;
    for (uint32_t i = 0; i < e.instance_count(); ++i) {
        const auto& info = e.instance(i);
        if (info.tags.empty()) continue;
        if (std::find(info.members.begin(), info.members.end(), node) == info.members.end()) continue;
        if (f.kind == Behaviour::Spoiler) {
            bool resync = false;
            for (const auto& t : info.tags) resync |= t.rfind("pulse0", 0) == 0;
            if (!resync) continue;
        }
        mine.push_back(i);
    }
    if (!mine.empty()) {
        const uint32_t inst = mine[rng_.below(mine.size())];
        const auto& info = e.instance(inst);
        const auto tag = static_cast<uint16_t>(rng_.below(info.tags.size()));
        uint64_t mask = 0;
        const size_t pos = static_cast<size_t>(std::find(info.members.begin(), info.members.end(), node) - info.members.begin());
        for (size_t j = 0; j < info.members.size(); ++j) {
            const int v = info.members[j];
            const bool pick = f.kind == Behaviour::Equivocator ? (j + pos) % 2 == 1 : rng_.chance(0.5);
            if (pick) mask |= 1ULL << v;
        }
        send_some(e, node, inst, tag, garbage(e, inst, tag), mask);
    }
    schedule(e, node);
}

}  // namespace psync
