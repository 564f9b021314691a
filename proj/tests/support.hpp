#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gridmdp/chronics.hpp"
#include "gridmdp/env.hpp"
#include "gridmdp/powerflow.hpp"

#ifndef GRIDMDP_TEST_DATA_DIR
#define GRIDMDP_TEST_DATA_DIR "data"
#endif

namespace gridmdp::fx {

inline std::filesystem::path data_dir() { return GRIDMDP_TEST_DATA_DIR; }

inline Grid default_grid() { return load_grid_file((data_dir() / "default_grid.json").string()); }

inline std::shared_ptr<const Scenario> fixture(const std::string& name) {
    return std::make_shared<const Scenario>(load_scenario(data_dir() / "scenarios" / name));
}

inline std::string sid(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%03d", i);
    return buf;
}

/// Random connected grid: a random spanning tree plus extra chords, one
/// generator and one load on a random subset of buses.
inline Grid random_grid(std::mt19937_64& rng, int n_buses) {
    std::uniform_real_distribution<double> x(0.02, 0.4), r(0.0, 0.05), u(0.0, 1.0);
    std::vector<Substation> subs;
    for (int i = 0; i < n_buses; ++i) subs.push_back({sid(i)});
    std::vector<Line> lines;
    int k = 0;
    auto add = [&](int a, int b) {
        char id[16];
        std::snprintf(id, sizeof id, "l%04d", k++);
        lines.push_back({id, a, b, x(rng), r(rng), 50.0 + 200.0 * u(rng)});
    };
    for (int i = 1; i < n_buses; ++i) add(std::uniform_int_distribution<int>(0, i - 1)(rng), i);
    const int extra = n_buses / 2;
    for (int e = 0; e < extra; ++e) {
        const int a = std::uniform_int_distribution<int>(0, n_buses - 1)(rng);
        const int b = std::uniform_int_distribution<int>(0, n_buses - 1)(rng);
        if (a != b) add(a, b);
    }
    std::vector<Generator> gens;
    std::vector<Load> loads;
    for (int i = 0; i < n_buses; ++i) {
        if (i == 0 || u(rng) < 0.3) {
            char id[16];
            std::snprintf(id, sizeof id, "g%03d", i);
            gens.push_back({id, i, GenType::Thermal, 50.0 + std::floor(200.0 * u(rng)), 0.0, 10.0, 50.0});
        }
        if (u(rng) < 0.7) {
            char id[16];
            std::snprintf(id, sizeof id, "d%03d", i);
            loads.push_back({id, i, 1.0});
        }
    }
    return Grid::build(100.0, subs, lines, gens, loads, {});
}

inline InjectionVector random_injections(std::mt19937_64& rng, const Grid& grid) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    InjectionVector inj = InjectionVector::zeros(grid);
    for (int g = 0; g < grid.n_generators(); ++g) inj.gen_p[g] = 0.5 * grid.generators()[g].p_max * u(rng);
    for (int d = 0; d < grid.n_loads(); ++d) inj.load_p[d] = 40.0 * u(rng);
    return inj;
}

/// Gaussian elimination with partial pivoting on a dense copy.
inline std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t i = c + 1; i < n; ++i)
            if (std::abs(a[i][c]) > std::abs(a[p][c])) p = i;
        std::swap(a[c], a[p]);
        std::swap(b[c], b[p]);
        for (std::size_t i = c + 1; i < n; ++i) {
            const double f = a[i][c] / a[c][c];
            if (f == 0.0) continue;
            for (std::size_t j = c; j < n; ++j) a[i][j] -= f * a[c][j];
            b[i] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
        x[i] = s / a[i][i];
    }
    return x;
}

/// Line flows in MW for a grid with every element on busbar 1. Islands are
/// found by flood fill over in-service lines; each island's largest generator
/// (lowest index on ties) takes the island mismatch, islands without a
/// generator carry no flow.
inline std::vector<double> dense_dc_flows(const Grid& grid, const std::vector<std::uint8_t>& line_status,
                                          const InjectionVector& inj) {
    const int n = grid.n_substations();
    std::vector<double> p(n, 0.0);
    for (int g = 0; g < grid.n_generators(); ++g) p[grid.generators()[g].substation] += inj.gen_p[g];
    for (int d = 0; d < grid.n_loads(); ++d) p[grid.loads()[d].substation] -= inj.load_p[d];
    for (int s = 0; s < grid.n_storages(); ++s) p[grid.storages()[s].substation] -= inj.storage_p[s];

    std::vector<int> comp(n, -1);
    int n_comp = 0;
    for (int s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        std::vector<int> stack{s};
        comp[s] = n_comp;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int l = 0; l < grid.n_lines(); ++l) {
                if (!line_status[l]) continue;
                const auto& ln = grid.lines()[l];
                const int w = ln.from == v ? ln.to : ln.to == v ? ln.from : -1;
                if (w >= 0 && comp[w] < 0) {
                    comp[w] = n_comp;
                    stack.push_back(w);
                }
            }
        }
        ++n_comp;
    }

    std::vector<double> theta(n, 0.0);
    for (int c = 0; c < n_comp; ++c) {
        int slack_gen = -1;
        for (int g = 0; g < grid.n_generators(); ++g) {
            if (comp[grid.generators()[g].substation] != c) continue;
            if (slack_gen < 0 || grid.generators()[g].p_max > grid.generators()[slack_gen].p_max) slack_gen = g;
        }
        if (slack_gen < 0) continue;
        const int slack_bus = grid.generators()[slack_gen].substation;
        double mismatch = 0.0;
        std::vector<int> idx(n, -1);
        std::vector<int> members;
        for (int s = 0; s < n; ++s) {
            if (comp[s] != c) continue;
            mismatch += p[s];
            if (s != slack_bus) {
                idx[s] = static_cast<int>(members.size());
                members.push_back(s);
            }
        }
        p[slack_bus] -= mismatch;
        if (members.empty()) continue;
        std::vector<std::vector<double>> b(members.size(), std::vector<double>(members.size(), 0.0));
        for (int l = 0; l < grid.n_lines(); ++l) {
            const auto& ln = grid.lines()[l];
            if (!line_status[l] || comp[ln.from] != c) continue;
            const double y = 1.0 / ln.x_pu;
            const int i = idx[ln.from], j = idx[ln.to];
            if (i >= 0) b[i][i] += y;
            if (j >= 0) b[j][j] += y;
            if (i >= 0 && j >= 0) {
                b[i][j] -= y;
                b[j][i] -= y;
            }
        }
        std::vector<double> rhs;
        for (int s : members) rhs.push_back(p[s] / grid.base_mva());
        const auto t = dense_solve(b, rhs);
        for (std::size_t k = 0; k < members.size(); ++k) theta[members[k]] = t[k];
    }
    std::vector<double> flows(grid.n_lines(), 0.0);
    for (int l = 0; l < grid.n_lines(); ++l) {
        if (!line_status[l]) continue;
        const auto& ln = grid.lines()[l];
        flows[l] = grid.base_mva() * (theta[ln.from] - theta[ln.to]) / ln.x_pu;
    }
    return flows;
}

/// Two-substation toy grid: one generator at s000, one load at s001, optional
/// storage at s001.
inline Grid two_bus_grid(double limit = 100.0, bool with_storage = false) {
    std::vector<Storage> sto;
    if (with_storage) sto.push_back({"bat", 1, 10.0, 5.0, 0.95, 0.95, 10.0});
    return Grid::build(100.0, {{"s000"}, {"s001"}}, {{"l0", 0, 1, 0.1, 0.01, limit}},
                       {{"g0", 0, GenType::Thermal, 200.0, 0.0, 50.0, 40.0}}, {{"d0", 1, 1.0}}, sto);
}

/// Flat chronics: constant load, dispatch equal to load on the first
/// generator, renewable potential zero.
inline Chronics flat_chronics(const Grid& grid, int n_steps, double load_mw) {
    Chronics ch;
    ch.n_steps = n_steps;
    ch.load_p = Table::Constant(n_steps, grid.n_loads(), load_mw / std::max(1, grid.n_loads()));
    ch.renewable_potential = Table::Zero(n_steps, grid.n_renewables());
    ch.dispatch_p = Table::Zero(n_steps, grid.n_generators());
    ch.dispatch_p.col(0).setConstant(load_mw);
    return ch;
}

inline std::shared_ptr<const Scenario> make_scenario(Grid grid, Chronics ch, std::string id = "toy") {
    auto s = std::make_shared<Scenario>();
    s->id = std::move(id);
    s->grid = std::move(grid);
    s->chronics = std::move(ch);
    return s;
}

/// Random legal-looking action for fuzzing: mostly continuous, sometimes
/// line switching.
inline Action random_action(std::mt19937_64& rng, const Grid& grid) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double pick = u(rng);
    if (pick < 0.2) return DoNothing{};
    if (pick < 0.3) {
        return SetLineStatus{std::uniform_int_distribution<int>(0, grid.n_lines() - 1)(rng), u(rng) < 0.7};
    }
    Composite c;
    for (int r = 0; r < grid.n_renewables(); ++r) c.curtail.caps.push_back(u(rng) < 0.5 ? 1.0 : u(rng));
    for (const auto& s : grid.storages()) c.storage.power_mw.push_back((2.0 * u(rng) - 1.0) * s.p_max_mw);
    return c;
}

/// Random action for long trajectories: no disconnections, and when the
/// draw would end the episode, lifting all caps or doing nothing instead.
inline Action random_safe_action(std::mt19937_64& rng, const Environment& env) {
    Action a = random_action(rng, env.grid());
    if (auto* s = std::get_if<SetLineStatus>(&a)) s->connect = true;
    for (const Action& c : {a, Action{Curtail{std::vector<double>(env.grid().n_renewables(), 1.0)}}}) {
        if (!env.simulate(c).info.game_over) return c;
    }
    return DoNothing{};
}

}  // namespace gridmdp::fx
