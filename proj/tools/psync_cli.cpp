#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "psync/harness.hpp"
#include "psync/solvers.hpp"

using namespace psync;
using nlohmann::json;

namespace {

struct Common {
    std::string scenario;
    std::string asserts;
    std::string duration;
    uint64_t seed = 1;
    bool dump = false;
};

Scenario load(const Common& c) {
    if (c.scenario.empty()) throw ScenarioError("--scenario is required");
    Scenario s = load_scenario(c.scenario);
    if (!c.asserts.empty()) {
        s.asserts.clear();
        std::stringstream ss(c.asserts);
        for (std::string g; std::getline(ss, g, ',');)
            if (!g.empty()) s.asserts.push_back(g);
        validate_scenario(s);
    }
    return s;
}

json raw(const std::string& path) {
    std::ifstream in(path);
    return json::parse(in);
}

void print_checks(const RunResult& r) {
    for (const auto& c : r.checks)
        std::printf("  %s  %-14s %-18s %s\n", c.ok ? "PASS" : "FAIL", c.group.c_str(), c.name.c_str(), c.detail.c_str());
}

int cmd_run(const Common& c, const std::string& out) {
    Scenario s = load(c);
    RunOptions opt;
    if (!c.duration.empty()) opt.duration = Q::parse(c.duration);
    RunResult r = out.empty() ? run_scenario(s, c.seed, opt) : run_to_dir(s, c.seed, out, opt);
    std::printf("%s  system=%s  t_end=%s  events=%llu  trace=%016llx  %.2fs\n", r.run_id.c_str(), system_name(s.system),
                r.t_end.decimal(3).c_str(), static_cast<unsigned long long>(r.events),
                static_cast<unsigned long long>(r.trace_hash), r.seconds);
    print_checks(r);
    if (c.dump) {
        if (r.machines.empty()) r.machines = describe_scenario(s, true);
        std::printf("\n%s", r.machines.c_str());
    }
    if (!out.empty()) std::printf("wrote %s/{trace.csv,metrics.json,machines.txt}\n", out.c_str());
    if (const Check* f = r.first_failure()) {
        std::printf("FAIL %s/%s%s: %s\n", f->group.c_str(), f->name.c_str(),
                    f->at ? (" at t=" + f->at->decimal(4)).c_str() : "", f->detail.c_str());
        return 1;
    }
    std::printf("PASS %zu checks\n", r.checks.size());
    return 0;
}

int cmd_sweep(const Common& c, int seeds, int threads, const std::string& grid_text) {
    Scenario s = load(c);
    json j = raw(c.scenario);
    std::optional<json> grid;
    if (!grid_text.empty())
        grid = json::parse(grid_text);
    else if (j.contains("sweep"))
        grid = j["sweep"];
    std::vector<uint64_t> ids;
    if (seeds <= 0 && j.contains("seeds")) seeds = j["seeds"].get<int>();
    if (seeds <= 0) seeds = 10;
    for (int i = 0; i < seeds; ++i) ids.push_back(c.seed + static_cast<uint64_t>(i));
    auto cells = sweep(s, grid, ids, threads);
    std::printf("%s", sweep_table(cells).c_str());
    for (const auto& cell : cells)
        if (cell.violations) return 1;
    return 0;
}

int cmd_solve(const Common& c, const std::string& system, const std::string& theta, const std::string& phi) {
    Scenario s = c.scenario.empty() ? Scenario{} : load(c);
    if (!system.empty()) s.system = parse_system(system);
    if (!theta.empty()) s.theta = Q::parse(theta);
    if (!phi.empty()) s.phi = Q::parse(phi);
    std::printf("%s", solve_report(s).c_str());
    return 0;
}

int cmd_describe(const Common& c) {
    Scenario s = load(c);
    std::printf("%s", describe_scenario(s, c.dump).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"psync: self-stabilising pulse synchronisation simulator"};
    app.require_subcommand(1);
    Common c;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--scenario", c.scenario, "scenario file (JSON)");
        sub->add_option("--seed", c.seed, "run seed (first seed for sweeps)");
        sub->add_option("--assert", c.asserts, "comma-separated check groups to enforce");
        sub->add_flag("--dump-machine", c.dump, "print the guard tables");
    };

    std::string out;
    auto* run = app.add_subcommand("run", "run one scenario and check it");
    common(run);
    run->add_option("--out", out, "write trace.csv, metrics.json and machines.txt here");
    run->add_option("--duration", c.duration, "override the horizon (rational)");

    int seeds = 0, threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string grid;
    auto* sw = app.add_subcommand("sweep", "run a parameter grid over seeds");
    common(sw);
    sw->add_option("--seeds", seeds, "number of seeds per cell");
    sw->add_option("--threads", threads, "worker threads");
    sw->add_option("--grid", grid, "JSON object of key -> value list (overrides the file's sweep key)");

    std::string system, theta, phi;
    auto* solve = app.add_subcommand("solve-timeouts", "solve and verify the timeout tables");
    common(solve);
    solve->add_option("--system", system, "st, consensus, main, resync or recursion");
    solve->add_option("--theta", theta, "clock drift bound, e.g. 1001/1000");
    solve->add_option("--phi", phi, "resync slack factor, e.g. 1025/1000");

    auto* desc = app.add_subcommand("describe", "print timeouts, composition tree and machines");
    common(desc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        if (run->parsed()) return cmd_run(c, out);
        if (sw->parsed()) return cmd_sweep(c, seeds, threads, grid);
        if (solve->parsed()) return cmd_solve(c, system, theta, phi);
        if (desc->parsed()) return cmd_describe(c);
    } catch (const InfeasibleError& e) {
        std::fprintf(stderr, "infeasible: %s\n", e.what());
        return 2;
    } catch (const ScenarioError& e) {
        std::fprintf(stderr, "invalid scenario: %s\n", e.what());
        return 2;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return 2;
    }
    return 2;
}
