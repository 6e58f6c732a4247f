#include "psync/solvers.hpp"

#include <sstream>

namespace psync {

Row make_row(std::string name, Q lhs, Rel rel, Q rhs) {
    bool ok = false;
    switch (rel) {
    case Rel::Eq: ok = lhs == rhs; break;
    case Rel::Ge: ok = !(lhs < rhs); break;
    case Rel::Gt: ok = rhs < lhs; break;
    case Rel::Le: ok = !(rhs < lhs); break;
    case Rel::Lt: ok = lhs < rhs; break;
    }
    return Row{std::move(name), std::move(lhs), rel, std::move(rhs), ok};
}

const char* rel_str(Rel r) {
    switch (r) {
    case Rel::Eq: return "=";
    case Rel::Ge: return ">=";
    case Rel::Gt: return ">";
    case Rel::Le: return "<=";
    case Rel::Lt: return "<";
    }
    return "?";
}

bool all_ok(const std::vector<Row>& rows) {
    for (const auto& r : rows)
        if (!r.ok) return false;
    return true;
}

std::string rows_str(const std::vector<Row>& rows) {
    std::ostringstream os;
    for (const auto& r : rows)
        os << (r.ok ? "  ok   " : "  FAIL ") << r.name << ": " << r.lhs.decimal(4) << ' ' << rel_str(r.rel) << ' '
           << r.rhs.decimal(4) << '\n';
    return os.str();
}

// ------------------------------------------------------------------ ST pulser

StTimeouts solve_st(const Q& theta, const Q& d, const Q& tau) {
    if (!(Q(1) < theta)) throw InfeasibleError("theta > 1 violated");
    if (d.sign() <= 0 || tau.sign() <= 0) throw InfeasibleError("d > 0 and tau > 0 violated");
    StTimeouts st{theta, d, tau, {}, {}, {}, {}};
    st.T0 = theta * (tau + d);
    st.T1 = theta * (theta - Q(1)) * (tau + d) + theta * tau;
    st.T2 = Q(3) * theta * d;
    st.T3 = theta * (theta - Q(1)) * Q(3) * d + Q(2) * theta * d;
    auto rows = check_st(st);
    if (!all_ok(rows)) throw std::logic_error("ST assignment failed its own rows:\n" + rows_str(rows));
    return st;
}

StTimeouts st_literal_assignment(const Q& theta, const Q& d, const Q& tau) {
    StTimeouts st{theta, d, tau, {}, {}, {}, {}};
    st.T0 = theta * (tau + d);
    st.T1 = theta * theta * (Q(1) - Q(1) / theta) * (tau + d) + tau;
    st.T2 = theta * Q(3) * d;
    st.T3 = theta * theta * (Q(1) - Q(1) / theta) * Q(3) * d + Q(2) * d;
    return st;
}

std::vector<Row> check_st(const StTimeouts& s) {
    const Q one(1);
    const Q& th = s.theta;
    return {
        make_row("T0/theta >= tau + d", s.T0 / th, Rel::Ge, s.tau + s.d),
        make_row("T1/theta >= (1-1/theta)T0 + tau", s.T1 / th, Rel::Ge, (one - one / th) * s.T0 + s.tau),
        make_row("T2/theta >= 3d", s.T2 / th, Rel::Ge, Q(3) * s.d),
        make_row("T3/theta >= (1-1/theta)T2 + 2d", s.T3 / th, Rel::Ge, (one - one / th) * s.T2 + Q(2) * s.d),
    };
}

Q st_simulation_time(const StTimeouts& s, int rounds) {
    return s.T0 + s.T1 + Q(3) * s.d + Q(rounds) * (s.T2 + s.T3 + Q(3) * s.d);
}

// ------------------------------------------------------------------ main pulser

bool theta_below_main_bound(const Q& theta) {
    Q x = Q(7) * theta - Q(2);
    if (x.sign() <= 0) return true;
    return x * x < Q(32);
}

Q phi0(const Q& theta) {
    return Q(1) + Q(5) * (theta - Q(1)) / (Q(2) + Q(2) * theta - Q(3) * theta * theta);
}

namespace {

struct MainConsts {
    Q th, d, T1, Tl, tauX, a, p, q;
};

MainConsts consts(const MainInputs& in, const Q& X) {
    MainConsts c;
    c.th = in.theta;
    c.d = in.d;
    const Q& th = c.th;
    const Q& d = c.d;
    c.T1 = Q(3) * th * d;
    c.Tl = (th - Q(1)) * c.T1 + Q(3) * th * d;
    c.a = Q(1) - Q(1) / th;
    c.tauX = c.a * X + c.Tl + d + qmax(c.Tl + d, Q(3) * c.T1 + Q(2) * d);
    // T_consensus = p * tau + q for the ST timeouts chosen at window tau.
    Q K = Q(3) * th * th * d + Q(2) * th * d + Q(3) * d;
    c.p = th * (Q(1) + th + th * th);
    c.q = th * (th * th * d + Q(3) * d + Q(in.rounds) * K);
    return c;
}

}  // namespace

Q min_T_active(const MainInputs& in, const Q& X) {
    MainConsts c = consts(in, X);
    const Q& th = c.th;
    const Q& d = c.d;
    struct Lin {
        Q c0, c1;
    };
    // The third row is beta <= beta', which is stronger than the second by
    // 2 theta T_listen.
    Lin rows[3] = {
        {Q(4) * X + c.Tl + th * (c.Tl + X - Q(5) * c.T1 - Q(4) * d + in.rho), th},
        {Q(2) * X + th * (Q(2) * c.Tl + c.T1 + Q(3) * X + Q(3) * d), Q(1) + Q(3) * th},
        {Q(2) * X + th * (Q(4) * c.Tl + c.T1 + Q(3) * X + Q(3) * d), Q(1) + Q(3) * th},
    };
    Q best(0);
    for (const auto& r : rows) {
        Q caseA = r.c0 + r.c1 * (c.p * c.tauX + c.q);
        Q denom = Q(1) - r.c1 * c.p * c.a;
        if (denom.sign() <= 0)
            throw InfeasibleError("T_active rows unsatisfiable: consensus time grows faster than T_active");
        Q caseB = (r.c0 + r.c1 * (c.p * in.rho + c.q)) / denom;
        best = qmax(best, qmax(caseA, caseB));
    }
    return best.ceil_to(in.grid * in.d);
}

MainTimeouts evaluate_main(const MainInputs& in, const Q& X, const Q& Y) {
    MainConsts c = consts(in, X);
    const Q& th = c.th;
    const Q& d = c.d;
    MainTimeouts m;
    m.in = in;
    m.X = X;
    m.Y = Y;
    m.T1 = c.T1;
    m.T_listen = c.Tl;
    m.T2 = X;
    m.T_active = Y;
    m.rho = in.rho;
    m.tau = qmax(c.tauX, c.a * Y + in.rho);
    m.st = solve_st(th, d, m.tau);
    m.T_sim = st_simulation_time(m.st, in.rounds);
    m.T_consensus = th * (m.tau + m.T_sim);
    m.T_wait = m.T2 + m.T_consensus;
    m.eps = m.T_sim / X;
    m.phi_minus = m.T2 / th;
    m.phi_plus = (m.T2 + m.T_consensus) / th;
    m.ratio = m.phi_plus / m.phi_minus;
    m.alpha = m.T_listen + d;
    m.gamma = m.T2 / th - m.T_listen - Q(5) * m.T1 - Q(3) * d;
    m.delta = m.T1 + d + Q(2) * m.T_listen + m.T2 + m.T_consensus;
    m.beta = m.alpha + m.T_wait + m.gamma + Q(4) * m.T1 + Q(3) * d + Q(2) * m.delta;
    m.beta_prime = (m.T_active - m.T2 - m.T_consensus) / th;
    m.psi_required = m.T_active + m.T_consensus + m.rho;
    m.stab_after_resync = m.T_active + m.rho + m.T_consensus / th;
    return m;
}

std::vector<Row> check_main(const MainTimeouts& m) {
    const Q& th = m.in.theta;
    const Q& d = m.in.d;
    const Q one(1);
    std::vector<Row> rows = {
        make_row("(7 theta - 2)^2 < 32", (Q(7) * th - Q(2)) * (Q(7) * th - Q(2)), Rel::Lt, Q(32)),
        make_row("T1 = 3 theta d", m.T1, Rel::Eq, Q(3) * th * d),
        make_row("T_listen = (theta-1)T1 + 3 theta d", m.T_listen, Rel::Eq, (th - one) * m.T1 + Q(3) * th * d),
        make_row("T2 > theta(T_listen + 3T1 + 3d)", m.T2, Rel::Gt, th * (m.T_listen + Q(3) * m.T1 + Q(3) * d)),
        make_row("(2/theta - 1)T2 > 2T_listen + T_consensus + 5T1 + 4d", (Q(2) / th - one) * m.T2, Rel::Gt,
                 Q(2) * m.T_listen + m.T_consensus + Q(5) * m.T1 + Q(4) * d),
        make_row("tau = max{(1-1/theta)T2 + T_listen + d + max{T_listen+d, 3T1+2d}, (1-1/theta)T_active + rho}",
                 m.tau, Rel::Eq,
                 qmax((one - one / th) * m.T2 + m.T_listen + d + qmax(m.T_listen + d, Q(3) * m.T1 + Q(2) * d),
                      (one - one / th) * m.T_active + m.rho)),
        make_row("T_consensus = theta(tau + T(R))", m.T_consensus, Rel::Eq, th * (m.tau + m.T_sim)),
        make_row("T_wait = T2 + T_consensus", m.T_wait, Rel::Eq, m.T2 + m.T_consensus),
        make_row("T_active >= 4T2 + T_listen + theta(T_listen + T_wait - 5T1 - 4d + rho)", m.T_active, Rel::Ge,
                 Q(4) * m.T2 + m.T_listen + th * (m.T_listen + m.T_wait - Q(5) * m.T1 - Q(4) * d + m.rho)),
        make_row("T_active >= 2T2 + T_consensus + theta(2T_listen + T1 + T_wait + 3d + 2T2 + 2T_consensus)",
                 m.T_active, Rel::Ge,
                 Q(2) * m.T2 + m.T_consensus +
                     th * (Q(2) * m.T_listen + m.T1 + m.T_wait + Q(3) * d + Q(2) * m.T2 + Q(2) * m.T_consensus)),
        make_row("gamma < delta", m.gamma, Rel::Lt, m.delta),
        make_row("delta < beta", m.delta, Rel::Lt, m.beta),
        make_row("beta <= beta'", m.beta, Rel::Le, m.beta_prime),
        make_row("beta' < T_active/theta", m.beta_prime, Rel::Lt, m.T_active / th),
        make_row("T(R) = T0 + T1 + 3d + R(T2 + T3 + 3d) at window tau", m.T_sim, Rel::Eq,
                 st_simulation_time(m.st, m.in.rounds)),
    };
    for (auto& r : check_st(m.st)) {
        r.name = "ST: " + r.name;
        rows.push_back(std::move(r));
    }
    return rows;
}

MainTimeouts solve_main(const MainInputs& in) {
    if (!(Q(1) < in.theta) || !theta_below_main_bound(in.theta))
        throw InfeasibleError("theta < (2+sqrt(32))/7 violated (theta = " + in.theta.decimal(6) + ", bound ~ 1.094427)");
    if (in.rounds < 1) throw InfeasibleError("consensus routine needs at least one round");
    const Q step = in.grid * in.d;
    auto candidate = [&](const Q& X) { return evaluate_main(in, X, min_T_active(in, X)); };
    auto good = [&](const MainTimeouts& m) {
        if (!all_ok(check_main(m))) return false;
        if (in.max_ratio && *in.max_ratio < m.ratio) return false;
        return true;
    };
    Q lo_units(0);
    Q X = step;
    if (in.min_T2) X = qmax(X, in.min_T2->ceil_to(step));
    Q units = X / step;
    if (good(candidate(X))) {
        units = X / step;
    } else {
        lo_units = units;
        Q hi = units;
        int guard = 0;
        while (!good(candidate(hi * step))) {
            lo_units = hi;
            hi = hi * Q(2);
            if (++guard > 48) {
                MainTimeouts m = candidate(hi * step);
                std::string why;
                for (const auto& r : check_main(m))
                    if (!r.ok) {
                        why = r.name;
                        break;
                    }
                if (why.empty() && in.max_ratio)
                    why = "(T2 + T_consensus)/T2 <= " + in.max_ratio->decimal(6) + " (limit ~ " + m.ratio.decimal(6) + ")";
                throw InfeasibleError(why + " cannot be met for any T2");
            }
        }
        while (Q(1) < hi - lo_units) {
            Q mid = ((lo_units + hi) / Q(2)).floor();
            if (good(candidate(mid * step)))
                hi = mid;
            else
                lo_units = mid;
        }
        units = hi;
    }
    MainTimeouts m = candidate(units * step);
    if (!good(m)) throw std::logic_error("main solver produced an assignment that fails its rows");
    if (in.max_phi_plus && *in.max_phi_plus < m.phi_plus)
        throw InfeasibleError("(T2 + T_consensus)/theta <= " + in.max_phi_plus->decimal(4) + " violated (needs " +
                              m.phi_plus.decimal(4) + ")");
    return m;
}

// ------------------------------------------------------------------ resync

bool product_below_resync_bound(const Q& theta, const Q& phi) { return theta * theta * phi < Q(31, 30); }

Q ResyncTimeouts::good_by(int k) const {
    return T_star + phi_plus[static_cast<size_t>(k)] + rho + Q(2) * (T_vote + in.d) + psi + Q(11) * beta;
}

ResyncTimeouts evaluate_resync(const ResyncInputs& in, const Q& X, const std::array<Q, 2>& pm,
                               const std::array<Q, 2>& pp) {
    ResyncTimeouts r;
    r.in = in;
    const Q& th = in.theta;
    const Q& d = in.d;
    r.b = Q(6, 25) * th * in.phi;
    r.a = r.b / Q(3);
    r.c = Q(16) * th * r.b;
    r.r = Q(31, 25);
    r.X = X;
    r.T_vote = th * (in.sigma + Q(2) * d);
    r.T_idle = th * (in.sigma + d);
    r.T_att = th * (r.T_vote + Q(2) * d);
    r.rho = r.T_vote;
    r.psi = r.a * X;
    r.beta = r.b * X;
    r.T_cool = r.c * X;
    Q star(0);
    for (size_t h = 0; h < 2; ++h) {
        r.phi_minus[h] = pm[h];
        r.phi_plus[h] = pp[h];
        r.T_min[h] = pm[h] - r.rho;
        r.T_max[h] = th * (pp[h] + r.T_vote);
        r.lambda_plus[h] = r.T_max[h] + r.T_vote;
        r.lambda_minus[h] = r.T_min[h] / th;
        star = qmax(star, in.T_A[h] + Q(2) * pp[h]);
    }
    r.T_star = star + r.T_cool + in.sigma + Q(2) * d + r.rho;
    return r;
}

std::vector<Row> check_resync(const ResyncTimeouts& r) {
    const Q& th = r.in.theta;
    const Q& d = r.in.d;
    const Q& sigma = r.in.sigma;
    std::vector<Row> rows = {
        make_row("theta^2 phi < 31/30", th * th * r.in.phi, Rel::Lt, Q(31, 30)),
        make_row("T_vote = theta(sigma + 2d)", r.T_vote, Rel::Eq, th * (sigma + Q(2) * d)),
        make_row("T_idle = theta(sigma + d)", r.T_idle, Rel::Eq, th * (sigma + d)),
        make_row("T_att = theta(T_vote + 2d)", r.T_att, Rel::Eq, th * (r.T_vote + Q(2) * d)),
        make_row("rho = T_vote", r.rho, Rel::Eq, r.T_vote),
        make_row("Psi >= required separation", r.psi, Rel::Ge, r.in.psi),
        make_row("T_cool/theta > 15 beta", r.T_cool / th, Rel::Gt, Q(15) * r.beta),
        make_row("beta > 2Psi + 4(T_vote + d) + rho", r.beta, Rel::Gt, Q(2) * r.psi + Q(4) * (r.T_vote + d) + r.rho),
        make_row("C0 = 4", Q(r.C[0]), Rel::Eq, Q(4)),
        make_row("C1 = 5", Q(r.C[1]), Rel::Eq, Q(5)),
    };
    Q star(0);
    for (size_t h = 0; h < 2; ++h) {
        std::string H = "[h=" + std::to_string(h) + "] ";
        star = qmax(star, r.in.T_A[h] + Q(2) * r.phi_plus[h]);
        rows.push_back(make_row(H + "T_min = Phi- - rho", r.T_min[h], Rel::Eq, r.phi_minus[h] - r.rho));
        rows.push_back(make_row(H + "T_max = theta(Phi+ + T_vote)", r.T_max[h], Rel::Eq, th * (r.phi_plus[h] + r.T_vote)));
        rows.push_back(make_row(H + "T_cool >= Phi+", r.T_cool, Rel::Ge, r.phi_plus[h]));
        rows.push_back(make_row(H + "Phi- > Psi + 2 rho", r.phi_minus[h], Rel::Gt, r.psi + Q(2) * r.rho));
        rows.push_back(make_row(H + "Phi- >= T_vote + T_idle + T_att + sigma + 2d", r.phi_minus[h], Rel::Ge,
                                r.T_vote + r.T_idle + r.T_att + sigma + Q(2) * d));
        rows.push_back(make_row(H + "T_min < T_cool", r.T_min[h], Rel::Lt, r.T_cool));
        rows.push_back(make_row(H + "T_min/theta > Psi + rho", r.T_min[h] / th, Rel::Gt, r.psi + r.rho));
        rows.push_back(make_row(H + "Lambda+ = T_max + T_vote", r.lambda_plus[h], Rel::Eq, r.T_max[h] + r.T_vote));
        rows.push_back(make_row(H + "Lambda- = T_min/theta", r.lambda_minus[h], Rel::Eq, r.T_min[h] / th));
        for (int j = 0; j <= 3; ++j) {
            std::string J = H + "j=" + std::to_string(j) + " ";
            Q C(r.C[h]);
            rows.push_back(make_row(J + "beta C j <= j Lambda-", r.beta * C * Q(j), Rel::Le, Q(j) * r.lambda_minus[h]));
            rows.push_back(make_row(J + "j Lambda- < j Lambda+ + rho", Q(j) * r.lambda_minus[h], Rel::Lt,
                                    Q(j) * r.lambda_plus[h] + r.rho));
            rows.push_back(make_row(J + "j Lambda+ + rho <= beta(C j + 1)", Q(j) * r.lambda_plus[h] + r.rho, Rel::Le,
                                    r.beta * (C * Q(j) + Q(1))));
        }
    }
    rows.push_back(make_row("T* = max{T(A_h) + 2Phi+_h} + T_cool + sigma + 2d + rho", r.T_star, Rel::Eq,
                            star + r.T_cool + sigma + Q(2) * d + r.rho));
    return rows;
}

ResyncTimeouts solve_resync(const ResyncInputs& in) {
    if (!product_below_resync_bound(in.theta, in.phi))
        throw InfeasibleError("theta^2 phi < 31/30 violated (theta^2 phi = " + (in.theta * in.theta * in.phi).decimal(6) +
                              ", 31/30 ~ 1.033333)");
    if (!(Q(1) < in.phi)) throw InfeasibleError("phi > 1 violated");
    const Q step = Q(1, 100) * in.d * Q(in.theta.big() ? 1 : in.theta.den()) * Q(25);
    const Q r = Q(31, 25);
    auto candidate = [&](const Q& X) {
        return evaluate_resync(in, X, {X, r * X}, {in.phi * X, in.phi * r * X});
    };
    auto good = [&](const Q& X) { return all_ok(check_resync(candidate(X))); };
    Q a = Q(6, 25) * in.theta * in.phi / Q(3);
    Q X0 = (in.psi / a).ceil_to(step);
    if (in.min_X) X0 = qmax(X0, in.min_X->ceil_to(step));
    X0 = qmax(X0, step);
    Q lo = X0 / step - Q(1);
    Q hi = X0 / step;
    int guard = 0;
    while (!good(hi * step)) {
        lo = hi;
        hi = hi * Q(2);
        if (++guard > 48) throw InfeasibleError("resync rows cannot be met for any X");
    }
    while (Q(1) < hi - lo) {
        Q mid = ((lo + hi) / Q(2)).floor();
        if (mid < X0 / step) {
            lo = mid;
            continue;
        }
        if (good(mid * step))
            hi = mid;
        else
            lo = mid;
    }
    return candidate(hi * step);
}

// ------------------------------------------------------------------ base pulser

BaseTimeouts solve_base(const Q& theta, const Q& d, const Q& target_minus, std::optional<Q> max_plus) {
    BaseTimeouts b{theta, d, theta * target_minus, {}, {}};
    b.phi_minus = b.Phi / theta;
    b.phi_plus = b.Phi + d;
    if (max_plus && *max_plus < b.phi_plus)
        throw InfeasibleError("leader period: Phi + d <= " + max_plus->decimal(4) + " violated (needs " +
                              b.phi_plus.decimal(4) + ")");
    return b;
}

}  // namespace psync
