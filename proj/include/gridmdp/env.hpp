#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gridmdp/chronics.hpp"
#include "gridmdp/grid.hpp"
#include "gridmdp/powerflow.hpp"

namespace gridmdp {

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

struct DoNothing {
    friend bool operator==(const DoNothing&, const DoNothing&) = default;
};

struct SetLineStatus {
    int line = 0;
    bool connect = true;
    friend bool operator==(const SetLineStatus&, const SetLineStatus&) = default;
};

struct BusAssignment {
    ElementRef element;
    std::uint8_t busbar = 1;
    friend bool operator==(const BusAssignment&, const BusAssignment&) = default;
};

/// Node splitting: reassign elements of a single substation across its busbars.
struct SetBusbar {
    int substation = 0;
    std::vector<BusAssignment> assignments;
    friend bool operator==(const SetBusbar&, const SetBusbar&) = default;
};

/// One cap ratio in [0, 1] per renewable generator, in
/// `Grid::renewable_generators()` order. Caps persist until changed.
struct Curtail {
    std::vector<double> caps;
    friend bool operator==(const Curtail&, const Curtail&) = default;
};

/// One set point per storage unit in MW, positive = charging. Applies to the
/// next step only.
struct SetStorage {
    std::vector<double> power_mw;
    friend bool operator==(const SetStorage&, const SetStorage&) = default;
};

struct Composite {
    Curtail curtail;
    SetStorage storage;
    friend bool operator==(const Composite&, const Composite&) = default;
};

using Action = std::variant<DoNothing, SetLineStatus, SetBusbar, Curtail, SetStorage, Composite>;

std::string describe(const Action& action, const Grid& grid);

// ---------------------------------------------------------------------------
// Configuration and state
// ---------------------------------------------------------------------------

struct EnvConfig {
    int overflow_budget = 3;          // steps a line may stay above rho = 1
    double hard_overflow_rho = 2.0;   // instant trip
    int cooldown_steps = 3;
    double dt_hours = kStepHours;
    double slack_tolerance_mw = 1.0;  // allowed slack excursion outside [0, p_max]
    double balance_tolerance_mw = 1e-6;
    double price_mwh = 70.0;          // used for info.operation_cost only
    /// Training-only "oracle" limiting: the environment shrinks curtailment
    /// and storage set points until automatic redispatch is feasible.
    bool oracle_action_limit = false;

    void validate() const;
};

/// Complete mutable state of an episode.
struct EnvState {
    int t = 0;
    bool done = false;
    bool game_over = false;
    TopologyState topology;
    std::vector<int> overflow_count;
    std::vector<std::uint8_t> line_in_maintenance;
    std::vector<double> gen_p;  // after the slack picks up losses
    std::vector<double> load_p;
    std::vector<double> renewable_potential;
    std::vector<double> curtail_caps;
    std::vector<double> storage_energy;
    std::vector<double> storage_power;
    std::vector<double> line_p;
    std::vector<double> rho;
    double losses_mw = 0.0;

    friend bool operator==(const EnvState&, const EnvState&) = default;
};

/// Labeled snapshot handed to agents. `encode_observation` turns it into the
/// canonical flat vector.
struct Observation {
    int step = 0;
    int horizon = 0;
    StepClock clock;
    bool done = false;
    std::vector<double> gen_p;
    std::vector<double> renewable_potential;
    std::vector<double> load_p;
    std::vector<double> line_p;
    std::vector<double> rho;
    std::vector<std::uint8_t> line_status;
    std::vector<std::uint8_t> line_in_maintenance;
    std::vector<int> line_cooldown;
    std::vector<int> sub_cooldown;
    std::vector<double> storage_energy;
    std::vector<double> storage_power;
    std::vector<double> curtail_caps;
    double redispatch_up_mw = 0.0;
    double redispatch_down_mw = 0.0;

    double max_rho() const;
    friend bool operator==(const Observation&, const Observation&) = default;
};

/// Offsets of each block inside the flat observation vector:
///
///   [sin, cos minute-of-day | sin, cos day-of-year | t / T]   5
///   gen_p                                                     n_gen
///   renewable_potential                                       n_ren
///   load_p                                                    n_load
///   line_p | rho | line_status (0/1) | line_cooldown          4 * n_line
///   storage_energy | storage_power                            2 * n_storage
///   curtail_caps                                              n_ren
///   redispatch margin up, down (MW)                           2
///
/// size = 7 + n_gen + 2 n_ren + n_load + 4 n_line + 2 n_storage.
struct ObservationLayout {
    int time = 0;
    int gen_p = 0;
    int renewable_potential = 0;
    int load_p = 0;
    int line_p = 0;
    int rho = 0;
    int line_status = 0;
    int line_cooldown = 0;
    int storage_energy = 0;
    int storage_power = 0;
    int curtail_caps = 0;
    int redispatch = 0;
    int size = 0;

    static ObservationLayout of(const Grid& grid);
};

std::vector<double> encode_observation(const Grid& grid, const Observation& obs);

struct StepInfo {
    double losses_mw = 0.0;
    double operation_cost = 0.0;
    double blackout_energy_mwh = 0.0;
    int cascade_events = 0;
    bool illegal_action = false;
    bool game_over = false;
    std::string reason;                  // why the action was illegal or the episode ended
    std::vector<double> redispatch_mwh;  // |actual - scheduled| * dt per generator
    std::vector<double> storage_mwh;     // |power| * dt per storage
    double curtailed_mwh = 0.0;          // agent-caused curtailment
    double load_mwh = 0.0;

    friend bool operator==(const StepInfo&, const StepInfo&) = default;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    StepInfo info;

    friend bool operator==(const StepResult&, const StepResult&) = default;
};

/// Reason an action is illegal in `state`, or nullopt when it is legal.
std::optional<std::string> check_action(const Grid& grid, const Chronics& chronics, const EnvState& state,
                                        const Action& action);

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

/// The grid-operation MDP over one scenario. Not thread-safe for `step`;
/// `simulate` is const and may run concurrently with other `simulate` calls.
class Environment {
public:
    explicit Environment(std::shared_ptr<const Scenario> scenario, EnvConfig config = {});

    Observation reset();
    StepResult step(const Action& action);
    StepResult simulate(const Action& action) const;

    Observation observe() const;
    const EnvState& state() const { return state_; }
    bool done() const { return state_.done; }
    /// Number of transitions in a full episode (n_steps - 1).
    int horizon() const { return chronics().n_steps - 1; }

    const Scenario& scenario() const { return *scenario_; }
    std::shared_ptr<const Scenario> scenario_ptr() const { return scenario_; }
    const Grid& grid() const { return scenario_->grid; }
    const Chronics& chronics() const { return scenario_->chronics; }
    const EnvConfig& config() const { return config_; }

    /// Pure transition function behind step and simulate.
    std::pair<EnvState, StepResult> transition(const EnvState& from, const Action& action) const;

private:
    Observation make_observation(const EnvState& state) const;

    std::shared_ptr<const Scenario> scenario_;
    EnvConfig config_;
    EnvState state_;
};

/// Steps completed without a game over.
inline int survived_steps(const EnvState& state) { return state.game_over ? state.t - 1 : state.t; }

/// Total demand energy from step `from` (inclusive) to the end of the chronics.
double remaining_load_mwh(const Chronics& chronics, int from, double dt_hours);

}  // namespace gridmdp
