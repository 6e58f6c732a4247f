#include <doctest.h>

#include "psync/solvers.hpp"

using namespace psync;

// Frozen outputs of tests/oracle/oracle.py.
TEST_CASE("ST timeouts match the fraction oracle") {
    struct Case {
        Q theta, d, tau, T0, T1, T2, T3, sim8;
    };
    const Case cases[] = {
        {Q(11, 10), Q(1), Q(10), Q(121, 10), Q(1221, 100), Q(33, 10), Q(253, 100), Q(1959, 20)},
        {Q(1001, 1000), Q(1), Q(5), Q(3003, 500), Q(2505503, 500000), Q(3003, 1000), Q(2005003, 1000000),
         Q(7808103, 100000)},
        {Q(3, 2), Q(2), Q(7), Q(27, 2), Q(69, 4), Q(9), Q(21, 2), Q(963, 4)},
    };
    for (const auto& c : cases) {
        const StTimeouts st = solve_st(c.theta, c.d, c.tau);
        CHECK(st.T0 == c.T0);
        CHECK(st.T1 == c.T1);
        CHECK(st.T2 == c.T2);
        CHECK(st.T3 == c.T3);
        CHECK(st_simulation_time(st, 8) == c.sim8);
        CHECK(all_ok(check_st(st)));
    }
}

TEST_CASE("commonly quoted ST assignment misses its rows") {
    const StTimeouts lit = st_literal_assignment(Q(11, 10), Q(1), Q(10));
    CHECK(!all_ok(check_st(lit)));
}

TEST_CASE("main pulser closed forms match the oracle") {
    for (const auto& [theta, T1, TL, p0] :
         {std::tuple{Q(1001, 1000), Q(3003, 1000), Q(3006003, 1000000), Q(1000997, 995997)},
          std::tuple{Q(251, 250), Q(753, 250), Q(189003, 62500), Q(62747, 61497)}}) {
        MainInputs in;
        in.theta = theta;
        in.rounds = 8;
        in.rho = theta * Q(4);
        const MainTimeouts m = solve_main(in);
        CHECK(m.T1 == T1);
        CHECK(m.T_listen == TL);
        CHECK(phi0(theta) == p0);
        CHECK(all_ok(check_main(m)));
        CHECK(m.T_wait == m.T2 + m.T_consensus);
        CHECK(m.stab_after_resync == m.T_active + m.rho + m.T_consensus / theta);
    }
}

TEST_CASE("main bound (2+sqrt 32)/7 decided exactly") {
    CHECK(theta_below_main_bound(Q(1004, 1000)));
    CHECK(theta_below_main_bound(Q(1093, 1000)));
    CHECK(!theta_below_main_bound(Q(1097, 1000)));
    CHECK(!theta_below_main_bound(Q(11, 10)));
    MainInputs in;
    in.theta = Q(11, 10);
    in.rounds = 8;
    in.rho = Q(5);
    try {
        solve_main(in);
        FAIL("expected rejection");
    } catch (const InfeasibleError& e) {
        CHECK(std::string(e.what()).find("(2+sqrt(32))/7") != std::string::npos);
    }
}

TEST_CASE("resync product bound 31/30 decided exactly") {
    CHECK(product_below_resync_bound(Q(1004, 1000), Q(1021, 1000)));
    CHECK(product_below_resync_bound(Q(1001, 1000), Q(1025, 1000)));
    CHECK(!product_below_resync_bound(Q(1001, 1000), Q(1035, 1000)));
    ResyncInputs in;
    in.theta = Q(1001, 1000);
    in.phi = Q(1035, 1000);
    in.psi = Q(1000);
    CHECK_THROWS_WITH_AS(solve_resync(in), doctest::Contains("31/30"), InfeasibleError);
}

TEST_CASE("resync table rows hold and good_by covers both blocks") {
    for (const Q& theta : {Q(1001, 1000), Q(1004, 1000)}) {
        ResyncInputs in;
        in.theta = theta;
        in.phi = Q(1021, 1000);
        in.psi = Q(1500);
        const ResyncTimeouts r = solve_resync(in);
        CHECK(all_ok(check_resync(r)));
        CHECK(r.psi >= in.psi);
        CHECK(r.good_by(0) > Q(0));
        CHECK(r.good_by(1) > Q(0));
    }
}

TEST_CASE("base leader pulser keeps accuracy inside its targets") {
    const BaseTimeouts b = solve_base(Q(1001, 1000), Q(1), Q(100), Q(200));
    CHECK(b.phi_minus >= Q(100));
    CHECK(b.phi_plus <= Q(200));
}
