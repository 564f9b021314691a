#include "gridmdp/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace gridmdp {

InjectionVector InjectionVector::zeros(const Grid& grid) {
    InjectionVector inj;
    inj.gen_p.assign(static_cast<std::size_t>(grid.n_generators()), 0.0);
    inj.load_p.assign(static_cast<std::size_t>(grid.n_loads()), 0.0);
    inj.storage_p.assign(static_cast<std::size_t>(grid.n_storages()), 0.0);
    return inj;
}

double FlowResult::max_rho() const {
    double m = 0.0;
    for (double r : rho) m = std::max(m, r);
    return m;
}

namespace {

int pick_slack(const Grid& grid, const std::vector<int>& gens) {
    int best = -1;
    for (int g : gens) {
        if (best < 0 || grid.generators()[g].p_max > grid.generators()[best].p_max) best = g;
    }
    return best;
}

}  // namespace

FlowResult solve_dc(const Grid& grid, const TopologyState& topology, const InjectionVector& inj) {
    if (static_cast<int>(inj.gen_p.size()) != grid.n_generators() ||
        static_cast<int>(inj.load_p.size()) != grid.n_loads() ||
        static_cast<int>(inj.storage_p.size()) != grid.n_storages()) {
        throw NumericalError("injection vector does not match grid dimensions");
    }

    FlowResult out;
    out.bus_graph = effective_buses(grid, topology);
    const BusGraph& bg = out.bus_graph;
    const int n_bus = bg.n_buses();
    const double base = grid.base_mva();

    out.gen_p = inj.gen_p;
    out.bus_injection.assign(static_cast<std::size_t>(n_bus), 0.0);
    for (int g = 0; g < grid.n_generators(); ++g) out.bus_injection[bg.gen[g]] += inj.gen_p[g];
    for (int d = 0; d < grid.n_loads(); ++d) out.bus_injection[bg.load[d]] -= inj.load_p[d];
    for (int s = 0; s < grid.n_storages(); ++s) out.bus_injection[bg.storage[s]] -= inj.storage_p[s];

    out.islands.resize(static_cast<std::size_t>(bg.n_components));
    for (int b = 0; b < n_bus; ++b) {
        auto& isl = out.islands[bg.component[b]];
        isl.buses.push_back(b);
        isl.mismatch_mw += out.bus_injection[b];
    }
    std::vector<std::vector<int>> island_gens(out.islands.size());
    for (int g = 0; g < grid.n_generators(); ++g) island_gens[bg.component[bg.gen[g]]].push_back(g);
    for (int d = 0; d < grid.n_loads(); ++d) {
        auto& isl = out.islands[bg.component[bg.load[d]]];
        isl.has_load = true;
        isl.load_mw += inj.load_p[d];
    }

    // Position of each bus inside its island's reduced system (-1 for slack).
    std::vector<int> local(static_cast<std::size_t>(n_bus), -1);
    out.theta.assign(static_cast<std::size_t>(n_bus), 0.0);
    std::vector<std::vector<int>> island_lines(out.islands.size());
    for (int l = 0; l < grid.n_lines(); ++l) {
        if (topology.line_status[l]) island_lines[bg.component[bg.line_from[l]]].push_back(l);
    }

    for (std::size_t c = 0; c < out.islands.size(); ++c) {
        Island& isl = out.islands[c];
        isl.slack_generator = pick_slack(grid, island_gens[c]);
        if (isl.slack_generator < 0) {
            if (isl.has_load) out.blackout_islands.push_back(static_cast<int>(c));
            continue;
        }
        const int slack_bus = bg.gen[isl.slack_generator];
        out.gen_p[isl.slack_generator] -= isl.mismatch_mw;
        out.bus_injection[slack_bus] -= isl.mismatch_mw;

        int n = 0;
        for (int b : isl.buses) {
            if (b != slack_bus) local[b] = n++;
        }
        if (n == 0) continue;

        std::vector<Eigen::Triplet<double>> entries;
        entries.reserve(island_lines[c].size() * 4);
        for (int l : island_lines[c]) {
            const double y = 1.0 / grid.lines()[l].x_pu;
            const int i = local[bg.line_from[l]];
            const int j = local[bg.line_to[l]];
            if (i >= 0) entries.emplace_back(i, i, y);
            if (j >= 0) entries.emplace_back(j, j, y);
            if (i >= 0 && j >= 0) {
                entries.emplace_back(i, j, -y);
                entries.emplace_back(j, i, -y);
            }
        }
        Eigen::SparseMatrix<double> b_matrix(n, n);
        b_matrix.setFromTriplets(entries.begin(), entries.end());
        Eigen::VectorXd p(n);
        for (int b : isl.buses) {
            if (local[b] >= 0) p[local[b]] = out.bus_injection[b] / base;
        }
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(b_matrix);
        if (solver.info() != Eigen::Success) throw NumericalError("singular reduced susceptance matrix");
        Eigen::VectorXd theta = solver.solve(p);
        if (solver.info() != Eigen::Success || !theta.allFinite())
            throw NumericalError("DC power flow solve failed");
        for (int b : isl.buses) {
            if (local[b] >= 0) out.theta[b] = theta[local[b]];
        }
    }

    out.p_flow.assign(static_cast<std::size_t>(grid.n_lines()), 0.0);
    out.rho.assign(static_cast<std::size_t>(grid.n_lines()), 0.0);
    for (int l = 0; l < grid.n_lines(); ++l) {
        if (!topology.line_status[l]) continue;
        const auto& line = grid.lines()[l];
        out.p_flow[l] = base * (out.theta[bg.line_from[l]] - out.theta[bg.line_to[l]]) / line.x_pu;
        out.rho[l] = std::abs(out.p_flow[l]) / line.thermal_limit_mw;
    }
    out.losses_mw = compute_losses(out, grid);
    return out;
}

double compute_losses(const FlowResult& flow, const Grid& grid) {
    const double base = grid.base_mva();
    double total = 0.0;
    for (int l = 0; l < grid.n_lines(); ++l) {
        const double pu = flow.p_flow[l] / base;
        total += grid.lines()[l].r_pu * pu * pu * base;
    }
    return total;
}

double kcl_residual(const Grid& grid, const FlowResult& flow) {
    const auto& bg = flow.bus_graph;
    std::vector<double> net(flow.bus_injection.size(), 0.0);
    double scale = 1.0;
    for (std::size_t b = 0; b < net.size(); ++b) scale = std::max(scale, std::abs(flow.bus_injection[b]));
    for (int l = 0; l < grid.n_lines(); ++l) {
        net[bg.line_from[l]] += flow.p_flow[l];
        net[bg.line_to[l]] -= flow.p_flow[l];
    }
    double worst = 0.0;
    for (std::size_t b = 0; b < net.size(); ++b) {
        const auto& isl = flow.islands[bg.component[b]];
        if (isl.slack_generator < 0) continue;  // unsolved island
        worst = std::max(worst, std::abs(net[b] - flow.bus_injection[b]));
    }
    return worst / scale;
}

std::vector<FlowResult> solve_dc_batch(const Grid& grid, const TopologyState& topology,
                                       const std::vector<InjectionVector>& injections) {
    std::vector<FlowResult> out(injections.size());
    std::exception_ptr error;
    const auto n = static_cast<long>(injections.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (long i = 0; i < n; ++i) {
        try {
            out[i] = solve_dc(grid, topology, injections[i]);
        } catch (...) {
#pragma omp critical(gridmdp_batch_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

std::vector<FlowResult> solve_dc_batch_serial(const Grid& grid, const TopologyState& topology,
                                              const std::vector<InjectionVector>& injections) {
    std::vector<FlowResult> out;
    out.reserve(injections.size());
    for (const auto& inj : injections) out.push_back(solve_dc(grid, topology, inj));
    return out;
}

}  // namespace gridmdp
