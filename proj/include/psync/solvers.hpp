#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psync/rational.hpp"

namespace psync {

// A parameter choice that cannot satisfy the named constraint.
struct InfeasibleError : std::runtime_error {
    explicit InfeasibleError(const std::string& constraint) : std::runtime_error(constraint), constraint(constraint) {}
    std::string constraint;
};

enum class Rel { Eq, Ge, Gt, Le, Lt };

struct Row {
    std::string name;
    Q lhs;
    Rel rel;
    Q rhs;
    bool ok;
};

Row make_row(std::string name, Q lhs, Rel rel, Q rhs);
const char* rel_str(Rel r);
bool all_ok(const std::vector<Row>& rows);
std::string rows_str(const std::vector<Row>& rows);

// ------------------------------------------------------------------ ST pulser

struct StTimeouts {
    Q theta, d, tau;
    Q T0, T1, T2, T3;
};

// Least assignment meeting all four rows with equality.
StTimeouts solve_st(const Q& theta, const Q& d, const Q& tau);
// T1 = theta^2(1-1/theta)(tau+d) + tau and T3 = theta^2(1-1/theta)3d + 2d as
// usually quoted; these miss the T1 and T3 rows by (theta-1)tau/theta and
// (theta-1)2d/theta, so they are kept only for comparison.
StTimeouts st_literal_assignment(const Q& theta, const Q& d, const Q& tau);
std::vector<Row> check_st(const StTimeouts& st);
// Worst-case reference time from the first init signal to the output pulse of
// an r-round simulation, with round r consumed at pulse r+1.
Q st_simulation_time(const StTimeouts& st, int rounds);

// ------------------------------------------------------------------ main pulser

struct MainInputs {
    Q theta;
    Q d{1};
    int rounds = 0;  // rounds of the (silent) consensus routine
    Q rho;           // skew of the resynchronisation signal
    std::optional<Q> min_T2;
    std::optional<Q> max_phi_plus;  // upper bound on (T2 + T_consensus)/theta
    std::optional<Q> max_ratio;     // upper bound on (T2 + T_consensus)/T2
    Q grid{1, 100};                 // in units of d
};

struct MainTimeouts {
    MainInputs in;
    Q T1, T_listen, T2, T_consensus, T_wait, T_active, tau, rho;
    Q X, Y, eps;
    Q T_sim;  // consensus simulation time bound T(R)
    StTimeouts st;
    Q phi_minus, phi_plus, ratio;
    Q alpha, beta, beta_prime, gamma, delta;
    Q psi_required;    // separation window the resync signal must provide
    Q stab_after_resync;  // T_active + rho + T_consensus/theta
};

// The rows that must hold for a (1 < theta < (2+sqrt 32)/7) assignment.
std::vector<Row> check_main(const MainTimeouts& m);
MainTimeouts solve_main(const MainInputs& in);
// Evaluate every derived quantity for fixed X = T2 and Y = T_active.
MainTimeouts evaluate_main(const MainInputs& in, const Q& X, const Q& Y);
// Least grid-aligned T_active for the given T2 (rows on T_active).
Q min_T_active(const MainInputs& in, const Q& X);
// Exact test of theta < (2+sqrt 32)/7.
bool theta_below_main_bound(const Q& theta);
// phi_0(theta) = 1 + 5(theta-1)/(2+2theta-3theta^2)
Q phi0(const Q& theta);

// ------------------------------------------------------------------ resync

struct ResyncInputs {
    Q theta;
    Q phi;
    Q sigma{2};
    Q d{1};
    Q psi;                       // required separation window
    std::optional<Q> min_X;
    std::array<Q, 2> T_A{Q(0), Q(0)};  // stabilisation time of each block pulser
};

struct ResyncTimeouts {
    ResyncInputs in;
    Q a, b, c, r, X;
    std::array<Q, 2> phi_minus, phi_plus, T_min, T_max, lambda_minus, lambda_plus;
    std::array<int, 2> C{4, 5};
    Q T_vote, T_idle, T_att, T_cool, rho, psi, beta, T_star;
    // Latest time a good resynchronisation pulse may start when block k is correct.
    Q good_by(int k) const;
};

std::vector<Row> check_resync(const ResyncTimeouts& r);
ResyncTimeouts solve_resync(const ResyncInputs& in);
// Re-derive a table for explicit block accuracies (used after the block
// pulsers were solved and may have rounded their bounds).
ResyncTimeouts evaluate_resync(const ResyncInputs& in, const Q& X, const std::array<Q, 2>& phi_minus,
                               const std::array<Q, 2>& phi_plus);
bool product_below_resync_bound(const Q& theta, const Q& phi);

// ------------------------------------------------------------------ base pulser

struct BaseTimeouts {
    Q theta, d, Phi;
    Q phi_minus, phi_plus;
};

// Leader period Phi with Phi/theta >= target_minus and Phi + d <= max_plus.
BaseTimeouts solve_base(const Q& theta, const Q& d, const Q& target_minus, std::optional<Q> max_plus = {});

}  // namespace psync
