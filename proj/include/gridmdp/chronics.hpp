#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridmdp/grid.hpp"

namespace gridmdp {

using Table = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kStepMinutes = 5;
inline constexpr int kStepsPerDay = 24 * 60 / kStepMinutes;
inline constexpr double kStepHours = kStepMinutes / 60.0;

class ChronicsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when no dispatch can satisfy demand; `step()` is the first step
/// where it happened.
class InfeasibleDispatch : public ChronicsError {
public:
    InfeasibleDispatch(int step, const std::string& what)
        : ChronicsError("infeasible dispatch at step " + std::to_string(step) + ": " + what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

struct MaintenanceWindow {
    int line = 0;
    int start_step = 0;
    int n_steps = 0;

    bool covers(int step) const { return step >= start_step && step < start_step + n_steps; }
    friend bool operator==(const MaintenanceWindow&, const MaintenanceWindow&) = default;
};

struct ChronicsMeta {
    std::uint64_t seed = 0;
    std::string start_datetime = "2022-01-01T00:00";
    int step_minutes = kStepMinutes;

    friend bool operator==(const ChronicsMeta&, const ChronicsMeta&) = default;
};

/// Per-step injection schedule. Columns follow the grid's index order;
/// `renewable_potential` has one column per renewable generator, in
/// `Grid::renewable_generators()` order.
struct Chronics {
    int n_steps = 0;
    Table load_p;
    Table renewable_potential;
    Table dispatch_p;
    std::vector<MaintenanceWindow> maintenance;
    ChronicsMeta meta;

    bool in_maintenance(int line, int step) const;

    friend bool operator==(const Chronics& a, const Chronics& b);
};

/// Wall-clock features of a step relative to `meta.start_datetime`.
struct StepClock {
    int minute_of_day = 0;
    int day_of_year = 0;   // 0-based
    int days_in_year = 365;
    int weekday = 0;       // 0 = Monday

    friend bool operator==(const StepClock&, const StepClock&) = default;
};

StepClock clock_at(const ChronicsMeta& meta, int step);

struct MaintenanceSpec {
    std::string line_id;
    int start_step = 0;
    int n_steps = 0;
};

/// Parameters of the synthetic chronics pipeline.
struct GenConfig {
    int days = 7;
    std::string start_datetime = "2022-02-07T00:00";

    // Load: peak * seasonal * weekly * daily * (1 + AR(1) noise), split by load weight.
    double peak_load_mw = 260.0;
    double seasonal_amplitude = 0.10;
    double saturday_factor = 0.93;
    double sunday_factor = 0.88;
    double load_noise_phi = 0.98;
    double load_noise_sigma = 0.004;

    // Solar: sine bell between night_end_hour and night_start_hour times a cloud factor.
    double night_start_hour = 19.0;
    double night_end_hour = 7.0;
    double cloud_floor = 0.25;
    double cloud_phi = 0.995;
    double cloud_sigma = 0.08;

    // Wind: mean-reverting capacity factor clipped to [0, 1].
    double wind_mean = 0.35;
    double wind_std = 0.20;
    double wind_correlation_hours = 6.0;

    std::vector<MaintenanceSpec> maintenance;

    int n_steps() const { return days * kStepsPerDay; }
    bool is_night(double hour_of_day) const;
};

GenConfig gen_config_from_json(const std::string& text);
std::string gen_config_to_json(const GenConfig& config);

Chronics generate_chronics(const Grid& grid, const GenConfig& config, std::uint64_t seed);

struct MixReport {
    std::array<double, kGenTypeCount> share{};
    double total_mwh = 0.0;

    double operator[](GenType type) const { return share[static_cast<int>(type)]; }
};

MixReport energy_mix(const Chronics& chronics, const Grid& grid);

void save_chronics(const Chronics& chronics, const Grid& grid, const std::filesystem::path& dir);
Chronics load_chronics(const std::filesystem::path& dir, const Grid& grid);

/// A grid plus its chronics, stored together in one directory
/// (`grid.json` next to the chronics files).
struct Scenario {
    std::string id;
    Grid grid;
    Chronics chronics;
};

Scenario load_scenario(const std::filesystem::path& dir);
void save_scenario(const Scenario& scenario, const std::filesystem::path& dir);

/// Scenario subdirectories of `root` (those containing grid.json), sorted by name.
std::vector<std::filesystem::path> list_scenarios(const std::filesystem::path& root);

}  // namespace gridmdp
