#pragma once

#include <stdexcept>
#include <vector>

#include "gridmdp/grid.hpp"

namespace gridmdp {

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Active-power set points in MW. Generators and loads are non-negative;
/// storage is signed with positive meaning charging (a withdrawal).
struct InjectionVector {
    std::vector<double> gen_p;
    std::vector<double> load_p;
    std::vector<double> storage_p;

    static InjectionVector zeros(const Grid& grid);
};

struct Island {
    std::vector<int> buses;
    int slack_generator = -1;   // -1 when the island has no generator
    bool has_load = false;      // any load attached (even at zero MW)
    double load_mw = 0.0;
    double mismatch_mw = 0.0;   // sum of scheduled injections before slack balancing
};

struct FlowResult {
    BusGraph bus_graph;
    std::vector<double> p_flow;         // MW, from -> to positive, 0 when out of service
    std::vector<double> rho;            // |p_flow| / thermal limit
    std::vector<double> theta;          // radians, per bus
    std::vector<double> bus_injection;  // MW, per bus, after slack balancing
    std::vector<double> gen_p;          // generator output after slack balancing
    std::vector<Island> islands;        // indexed by component id
    std::vector<int> blackout_islands;  // islands with load and no generator
    double losses_mw = 0.0;

    double max_rho() const;
};

/// DC power flow, one linear solve per energised island. Each island's
/// highest-p_max generator (lowest index on ties) absorbs the island's net
/// mismatch. Buses of islands without a generator keep theta = 0 and their
/// lines carry no flow.
FlowResult solve_dc(const Grid& grid, const TopologyState& topology, const InjectionVector& injections);

/// One solve per injection vector on a shared topology, spread over OpenMP
/// threads. Results are identical to calling solve_dc in a loop.
std::vector<FlowResult> solve_dc_batch(const Grid& grid, const TopologyState& topology,
                                       const std::vector<InjectionVector>& injections);
/// Serial reference for solve_dc_batch.
std::vector<FlowResult> solve_dc_batch_serial(const Grid& grid, const TopologyState& topology,
                                              const std::vector<InjectionVector>& injections);

/// Joule losses reconstructed from the DC flows: sum over lines of
/// r_pu * (p / base)^2 * base.
double compute_losses(const FlowResult& flow, const Grid& grid);

/// Largest KCL violation over buses, relative to max(1, |P|_inf).
double kcl_residual(const Grid& grid, const FlowResult& flow);

}  // namespace gridmdp
