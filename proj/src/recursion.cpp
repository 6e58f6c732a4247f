#include "psync/recursion.hpp"

#include <functional>
#include <sstream>

#include "psync/st_pulser.hpp"

namespace psync {

namespace {

struct Planner {
    Plan& P;
    Q sigma{2};

    int solve(const std::vector<int>& members, int f, int depth, std::optional<Q> need_minus, std::optional<Q> need_plus) {
        const Q& th = P.theta;
        const Q& d = P.d;
        const int idx = static_cast<int>(P.levels.size());
        P.levels.emplace_back();
        {
            LevelPlan& L = P.levels.back();
            L.depth = depth;
            L.members = members;
            L.f = f;
        }
        if (f == 0) {
            LevelPlan& L = P.levels[static_cast<size_t>(idx)];
            L.base = true;
            L.base_t = solve_base(th, d, need_minus.value_or(Q(10) * d), need_plus);
            L.phi_minus = L.base_t.phi_minus;
            L.phi_plus = L.base_t.phi_plus;
            L.stab_by = L.base_t.phi_plus;
            L.stab_by_settled = L.stab_by;
            L.bit_rate = Q(1) / L.phi_minus;
            return idx;
        }
        const int n = static_cast<int>(members.size());
        MainInputs mi;
        mi.theta = th;
        mi.d = d;
        mi.rounds = routine_rounds(P.routine, n, f);
        mi.rho = th * (sigma + Q(2) * d);
        if (need_minus) mi.min_T2 = th * *need_minus;
        mi.max_phi_plus = need_plus;
        MainTimeouts main = solve_main(mi);
        Partition part = partition_blocks(members, f);

        ResyncInputs ri;
        ri.theta = th;
        ri.phi = P.phi;
        ri.sigma = sigma;
        ri.d = d;
        ri.psi = main.psi_required;
        std::optional<Q> min_X;
        std::array<int, 2> child{-1, -1};
        ResyncTimeouts r;
        for (int attempt = 0;; ++attempt) {
            ri.min_X = min_X;
            r = solve_resync(ri);
            const size_t mark = P.levels.size();
            try {
                for (size_t h = 0; h < 2; ++h)
                    child[h] = solve(part.block[h], part.f[h], depth + 1, r.phi_minus[h], r.phi_plus[h]);
                break;
            } catch (const InfeasibleError&) {
                P.levels.resize(mark);
                if (attempt >= 40) throw;
                min_X = r.X * Q(5, 4);
            }
        }
        const LevelPlan& c0 = P.levels[static_cast<size_t>(child[0])];
        const LevelPlan& c1 = P.levels[static_cast<size_t>(child[1])];
        ri.T_A = {c0.stab_by, c1.stab_by};
        r = evaluate_resync(ri, r.X, {c0.phi_minus, c1.phi_minus}, {c0.phi_plus, c1.phi_plus});
        auto rows = check_resync(r);
        if (!all_ok(rows)) throw std::logic_error("resync table fails with the solved block pulsers:\n" + rows_str(rows));

        ResyncInputs settled = ri;
        settled.T_A = {Q(0), Q(0)};
        const ResyncTimeouts rs =
            evaluate_resync(settled, r.X, {c0.phi_minus, c1.phi_minus}, {c0.phi_plus, c1.phi_plus});

        LevelPlan& L = P.levels[static_cast<size_t>(idx)];
        L.main = main;
        L.resync = r;
        L.part = part;
        L.rounds = mi.rounds;
        L.child = child;
        L.phi_minus = main.phi_minus;
        L.phi_plus = main.phi_plus;
        L.stab_by = qmax(r.good_by(0), r.good_by(1)) + main.stab_after_resync;
        L.stab_by_settled = qmax(rs.good_by(0), rs.good_by(1)) + main.stab_after_resync;
        const Q R(mi.rounds);
        L.bit_rate = (Q(2) + (R + Q(1)) + R) / main.phi_minus +
                     Q(1) / qmin(r.phi_minus[0], r.phi_minus[1]) + Q(1) / r.lambda_minus[0] +
                     Q(1) / r.lambda_minus[1];
        return idx;
    }
};

}  // namespace

Plan plan_recursion(int n, int f, const Q& theta, const Q& phi, const Q& d, const std::string& routine) {
    if (n < 1 || n > 64) throw std::invalid_argument("n must lie in [1, 64]");
    if (f < 0 || 3 * f >= n) throw InfeasibleError("n > 3f violated");
    if (!theta_below_main_bound(theta))
        throw InfeasibleError("theta < (2+sqrt(32))/7 violated (theta = " + theta.decimal(6) + ", bound ~ 1.094427)");
    if (!product_below_resync_bound(theta, phi))
        throw InfeasibleError("theta^2 phi < 31/30 violated (theta^2 phi = " + (theta * theta * phi).decimal(6) + ")");
    Plan P;
    P.theta = theta;
    P.d = d;
    P.phi = phi;
    P.routine = routine;
    std::vector<int> members;
    for (int v = 0; v < n; ++v) members.push_back(v);
    Planner{P}.solve(members, f, 0, std::nullopt, std::nullopt);
    return P;
}

Q Plan::bit_budget(int v) const {
    Q s(0);
    for (const auto& L : levels)
        for (int u : L.members)
            if (u == v) s += L.bit_rate;
    return s;
}

std::string Plan::describe() const {
    std::ostringstream os;
    os << "recursion theta=" << theta << " (" << theta.decimal(4) << ") phi=" << phi.decimal(4) << " d=" << d
       << " routine=" << routine << "\n";
    std::function<void(int)> walk = [&](int i) {
        const LevelPlan& L = levels[static_cast<size_t>(i)];
        std::string pad(static_cast<size_t>(2 * L.depth), ' ');
        os << pad << "level " << i << ": n=" << L.members.size() << " f=" << L.f << " nodes {";
        for (size_t j = 0; j < L.members.size(); ++j) os << (j ? "," : "") << L.members[j];
        os << "}";
        if (L.base) {
            os << " leader pulser Phi=" << L.base_t.Phi.decimal(3);
        } else {
            const auto& m = L.main;
            const auto& r = L.resync;
            os << " rounds=" << L.rounds << "\n"
               << pad << "  main: T1=" << m.T1.decimal(3) << " T_listen=" << m.T_listen.decimal(3)
               << " T2=" << m.T2.decimal(3) << " T_consensus=" << m.T_consensus.decimal(3)
               << " T_wait=" << m.T_wait.decimal(3) << " T_active=" << m.T_active.decimal(3)
               << " tau=" << m.tau.decimal(3) << "\n"
               << pad << "  st: T0=" << m.st.T0.decimal(3) << " T1=" << m.st.T1.decimal(3)
               << " T2=" << m.st.T2.decimal(3) << " T3=" << m.st.T3.decimal(3) << "\n"
               << pad << "  resync: X=" << r.X.decimal(3) << " Psi=" << r.psi.decimal(3)
               << " beta=" << r.beta.decimal(3) << " T_vote=" << r.T_vote.decimal(3)
               << " T_cool=" << r.T_cool.decimal(3) << " T*=" << r.T_star.decimal(3) << "\n";
            for (size_t h = 0; h < 2; ++h)
                os << pad << "    block " << h << ": Phi-=" << r.phi_minus[h].decimal(3)
                   << " Phi+=" << r.phi_plus[h].decimal(3) << " T_min=" << r.T_min[h].decimal(3)
                   << " T_max=" << r.T_max[h].decimal(3) << " good_by=" << r.good_by(static_cast<int>(h)).decimal(3)
                   << "\n";
            os << pad << " ";
        }
        os << " Phi-=" << L.phi_minus.decimal(3) << " Phi+=" << L.phi_plus.decimal(3)
           << " stabilises_by=" << L.stab_by.decimal(1) << " (settled blocks " << L.stab_by_settled.decimal(1)
           << ") bits/time=" << L.bit_rate.decimal(6) << "\n";
        for (int c : L.child)
            if (c >= 0) walk(c);
    };
    if (!levels.empty()) walk(0);
    return os.str();
}

// ------------------------------------------------------------ base pulser

BaseNode::BaseNode(uint32_t inst, int node, int leader, Q period)
    : inst_(inst), node_(node), leader_(leader), period_(std::move(period)) {}

void BaseNode::randomize(Rng& rng) {
    random_ = true;
    phase_ = period_ * Q(static_cast<long long>(rng.below(1000)), 1000);
}

void BaseNode::on_start(Engine& e, int) {
    if (node_ != leader_) return;
    next_ = e.local(node_) + (random_ ? phase_ : Q(0));
    e.wake_local(node_, inst_, next_);
}

void BaseNode::on_wake(Engine& e, int) {
    if (node_ != leader_ || e.local(node_) < next_) return;
    pulse(e);
    e.broadcast(node_, inst_, 0);
    next_ += period_;
    e.wake_local(node_, inst_, next_);
}

void BaseNode::on_message(Engine& e, int, int from, uint16_t tag, const std::string&) {
    if (node_ != leader_ && from == leader_ && tag == 0) pulse(e);
}

void BaseNode::pulse(Engine& e) {
    e.record(node_, inst_, RecKind::Pulse);
    if (hook_) hook_(e);
}

// ------------------------------------------------------------ system

std::string instance_describe(const GroupSpec& spec, const std::vector<std::string>& notes, const Record& r) {
    if (r.kind == RecKind::Note) {
        std::string s = r.a < notes.size() ? notes[r.a] : std::string("note");
        return s + "=" + std::to_string(r.x);
    }
    return MachineGroup::describe(spec, r);
}

std::unique_ptr<System> build_system(Engine& e, const Plan& plan, InitMode init, Rng& rng) {
    auto sys = std::make_unique<System>();
    sys->plan = plan;
    sys->levels.resize(plan.levels.size());
    sys->top_main.assign(static_cast<size_t>(e.n()), nullptr);
    const size_t nl = plan.levels.size();
    std::vector<std::vector<ResyncNode*>> resync(nl, std::vector<ResyncNode*>(static_cast<size_t>(e.n()), nullptr));
    std::vector<std::vector<std::function<void(std::function<void(Engine&)>)>>> hook(
        nl, std::vector<std::function<void(std::function<void(Engine&)>)>>(static_cast<size_t>(e.n())));
    const RoutineFactory factory = routine_factory(plan.routine);
    const uint64_t shared = rng.next();

    for (size_t i = 0; i < nl; ++i) {
        const LevelPlan& L = plan.levels[i];
        const bool random = init == InitMode::Random || (init == InitMode::RandomTop && L.depth == 0);
        const std::string prefix = "L" + std::to_string(i);
        auto& S = sys->levels[i];
        if (L.base) {
            InstanceInfo info;
            info.name = prefix + ".base";
            info.members = L.members;
            info.tags = {"lead"};
            info.level = L.depth;
            info.describe = [](const Record& r) { return std::string(r.kind == RecKind::Pulse ? "pulse" : "?"); };
            S.base = e.add_instance(std::move(info));
            for (int v : L.members) {
                auto b = std::make_unique<BaseNode>(S.base, v, L.members[0], L.base_t.Phi);
                if (random) b->randomize(rng);
                BaseNode* bp = b.get();
                hook[i][static_cast<size_t>(v)] = [bp](std::function<void(Engine&)> h) { bp->set_pulse_hook(std::move(h)); };
                e.attach(S.base, v, std::move(b));
            }
            continue;
        }
        const int n = static_cast<int>(L.members.size());
        sys->specs.push_back(std::make_unique<GroupSpec>(st_spec(n, L.f, L.main.st, true)));
        const GroupSpec* cs = sys->specs.back().get();
        sys->specs.push_back(std::make_unique<GroupSpec>(main_spec(n, L.f, L.main)));
        const GroupSpec* ms = sys->specs.back().get();
        sys->specs.push_back(std::make_unique<GroupSpec>(resync_spec(L.members, L.f, L.part, L.resync)));
        const GroupSpec* rs = sys->specs.back().get();
        S.main_spec = ms;
        S.resync_spec = rs;

        auto info = [&](const std::string& name, const GroupSpec* g, std::vector<std::string> tags,
                        std::vector<std::string> notes, bool keep_transitions, bool keep_pulses) {
            InstanceInfo in;
            in.name = prefix + "." + name;
            in.members = L.members;
            in.tags = std::move(tags);
            in.notes = notes;
            in.level = L.depth;
            in.keep_transitions = keep_transitions;
            in.keep_pulses = keep_pulses;
            in.describe = [g, notes](const Record& r) { return instance_describe(*g, notes, r); };
            return e.add_instance(std::move(in));
        };
        S.cons = info("cons", cs, {"propose", "frame"}, ConsensusNode::note_names(), false, false);
        S.main = info("main", ms, ms->tags, MainNode::note_names(), L.depth == 0, true);
        S.resync = info("resync", rs, rs->tags, ResyncNode::note_names(), false, true);

        for (int v : L.members) {
            RoutineContext ctx;
            ctx.f = L.f;
            ctx.shared_seed = shared + i;
            auto c = std::make_unique<ConsensusNode>(cs, S.cons, v, L.members, factory, ctx);
            auto m = std::make_unique<MainNode>(ms, S.main, v, L.members, c.get());
            auto r = std::make_unique<ResyncNode>(rs, S.resync, v, L.members, plan.theta * plan.d);
            if (random) {
                c->randomize(e, rng);
                m->randomize(e, rng);
                r->randomize(e, rng);
            }
            MainNode* mp = m.get();
            r->set_output([mp](Engine& en) { mp->resync(en); });
            resync[i][static_cast<size_t>(v)] = r.get();
            hook[i][static_cast<size_t>(v)] = [mp](std::function<void(Engine&)> h) { mp->set_pulse_hook(std::move(h)); };
            if (L.depth == 0) sys->top_main[static_cast<size_t>(v)] = mp;
            e.attach(S.cons, v, std::move(c));
            e.attach(S.main, v, std::move(m));
            e.attach(S.resync, v, std::move(r));
        }
    }
    for (size_t i = 0; i < nl; ++i) {
        const LevelPlan& L = plan.levels[i];
        if (L.base) continue;
        for (int h = 0; h < 2; ++h) {
            const size_t c = static_cast<size_t>(L.child[static_cast<size_t>(h)]);
            for (int v : L.part.block[static_cast<size_t>(h)]) {
                ResyncNode* r = resync[i][static_cast<size_t>(v)];
                hook[c][static_cast<size_t>(v)]([r, h](Engine& en) { r->block_pulse(en, h); });
            }
        }
    }
    return sys;
}

}  // namespace psync
