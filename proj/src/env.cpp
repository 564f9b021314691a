#include "gridmdp/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gridmdp {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<double> row(const Table& table, int t) {
    std::vector<double> out(static_cast<std::size_t>(table.cols()));
    for (Eigen::Index c = 0; c < table.cols(); ++c) out[c] = table(t, c);
    return out;
}

std::optional<std::string> check_caps(const Grid& grid, const Curtail& a) {
    if (static_cast<int>(a.caps.size()) != grid.n_renewables()) return "curtailment needs one cap per renewable";
    for (double c : a.caps) {
        if (!std::isfinite(c) || c < 0.0 || c > 1.0) return "curtailment cap outside [0, 1]";
    }
    return std::nullopt;
}

std::optional<std::string> check_storage(const Grid& grid, const SetStorage& a) {
    if (static_cast<int>(a.power_mw.size()) != grid.n_storages()) return "storage action needs one set point per unit";
    for (int s = 0; s < grid.n_storages(); ++s) {
        const double p = a.power_mw[s];
        if (!std::isfinite(p) || std::abs(p) > grid.storages()[s].p_max_mw + 1e-9)
            return "storage set point exceeds p_max for " + grid.storages()[s].id;
    }
    return std::nullopt;
}

}  // namespace

std::string describe(const Action& action, const Grid& grid) {
    std::ostringstream os;
    std::visit(Overloaded{
                   [&](const DoNothing&) { os << "do-nothing"; },
                   [&](const SetLineStatus& a) {
                       os << (a.connect ? "reconnect " : "disconnect ")
                          << (a.line >= 0 && a.line < grid.n_lines() ? grid.lines()[a.line].id : "?");
                   },
                   [&](const SetBusbar& a) {
                       os << "set-busbar sub=" << a.substation << " (" << a.assignments.size() << " elements)";
                   },
                   [&](const Curtail& a) {
                       os << "curtail";
                       for (double c : a.caps) os << ' ' << c;
                   },
                   [&](const SetStorage& a) {
                       os << "storage";
                       for (double p : a.power_mw) os << ' ' << p;
                   },
                   [&](const Composite& a) {
                       os << "curtail";
                       for (double c : a.curtail.caps) os << ' ' << c;
                       os << " + storage";
                       for (double p : a.storage.power_mw) os << ' ' << p;
                   },
               },
               action);
    return os.str();
}

void EnvConfig::validate() const {
    if (overflow_budget < 1) throw std::invalid_argument("overflow_budget must be >= 1");
    if (!(hard_overflow_rho > 1.0)) throw std::invalid_argument("hard_overflow_rho must be > 1");
    if (cooldown_steps < 0) throw std::invalid_argument("cooldown_steps must be >= 0");
    if (!(dt_hours > 0.0)) throw std::invalid_argument("dt_hours must be positive");
    if (slack_tolerance_mw < 0.0 || balance_tolerance_mw < 0.0) throw std::invalid_argument("negative tolerance");
}

double Observation::max_rho() const {
    double m = 0.0;
    for (double r : rho) m = std::max(m, r);
    return m;
}

ObservationLayout ObservationLayout::of(const Grid& grid) {
    ObservationLayout l;
    int at = 0;
    auto take = [&](int n) {
        const int start = at;
        at += n;
        return start;
    };
    l.time = take(5);
    l.gen_p = take(grid.n_generators());
    l.renewable_potential = take(grid.n_renewables());
    l.load_p = take(grid.n_loads());
    l.line_p = take(grid.n_lines());
    l.rho = take(grid.n_lines());
    l.line_status = take(grid.n_lines());
    l.line_cooldown = take(grid.n_lines());
    l.storage_energy = take(grid.n_storages());
    l.storage_power = take(grid.n_storages());
    l.curtail_caps = take(grid.n_renewables());
    l.redispatch = take(2);
    l.size = at;
    return l;
}

std::vector<double> encode_observation(const Grid& grid, const Observation& obs) {
    const auto layout = ObservationLayout::of(grid);
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(layout.size));
    const double minute_angle = kTwoPi * obs.clock.minute_of_day / 1440.0;
    const double day_angle = kTwoPi * obs.clock.day_of_year / obs.clock.days_in_year;
    v.push_back(std::sin(minute_angle));
    v.push_back(std::cos(minute_angle));
    v.push_back(std::sin(day_angle));
    v.push_back(std::cos(day_angle));
    v.push_back(obs.horizon > 0 ? static_cast<double>(obs.step) / obs.horizon : 0.0);
    auto append = [&](const auto& values) {
        for (auto x : values) v.push_back(static_cast<double>(x));
    };
    append(obs.gen_p);
    append(obs.renewable_potential);
    append(obs.load_p);
    append(obs.line_p);
    append(obs.rho);
    append(obs.line_status);
    append(obs.line_cooldown);
    append(obs.storage_energy);
    append(obs.storage_power);
    append(obs.curtail_caps);
    v.push_back(obs.redispatch_up_mw);
    v.push_back(obs.redispatch_down_mw);
    return v;
}

std::optional<std::string> check_action(const Grid& grid, const Chronics& chronics, const EnvState& state,
                                        const Action& action) {
    return std::visit(
        Overloaded{
            [&](const DoNothing&) -> std::optional<std::string> { return std::nullopt; },
            [&](const SetLineStatus& a) -> std::optional<std::string> {
                if (a.line < 0 || a.line >= grid.n_lines()) return "unknown line index";
                if (state.topology.line_cooldown[a.line] > 0) return "line " + grid.lines()[a.line].id + " is on cooldown";
                if (a.connect && chronics.in_maintenance(a.line, state.t + 1))
                    return "line " + grid.lines()[a.line].id + " is under maintenance";
                return std::nullopt;
            },
            [&](const SetBusbar& a) -> std::optional<std::string> {
                if (a.substation < 0 || a.substation >= grid.n_substations()) return "unknown substation index";
                if (state.topology.sub_cooldown[a.substation] > 0)
                    return "substation " + grid.substations()[a.substation].id + " is on cooldown";
                if (a.assignments.empty()) return "empty busbar assignment";
                for (const auto& as : a.assignments) {
                    if (as.busbar != 1 && as.busbar != 2) return "busbar must be 1 or 2";
                    int count = 0;
                    switch (as.element.kind) {
                        case ElementKind::LineFrom:
                        case ElementKind::LineTo: count = grid.n_lines(); break;
                        case ElementKind::Generator: count = grid.n_generators(); break;
                        case ElementKind::Load: count = grid.n_loads(); break;
                        case ElementKind::Storage: count = grid.n_storages(); break;
                    }
                    if (as.element.index < 0 || as.element.index >= count) return "unknown element index";
                    if (substation_of(grid, as.element) != a.substation)
                        return "element does not belong to substation " + grid.substations()[a.substation].id;
                }
                return std::nullopt;
            },
            [&](const Curtail& a) { return check_caps(grid, a); },
            [&](const SetStorage& a) { return check_storage(grid, a); },
            [&](const Composite& a) {
                if (auto why = check_caps(grid, a.curtail)) return why;
                return check_storage(grid, a.storage);
            },
        },
        action);
}

double remaining_load_mwh(const Chronics& chronics, int from, double dt_hours) {
    double total = 0.0;
    for (int t = std::max(from, 0); t < chronics.n_steps; ++t) total += chronics.load_p.row(t).sum();
    return total * dt_hours;
}

Environment::Environment(std::shared_ptr<const Scenario> scenario, EnvConfig config)
    : scenario_(std::move(scenario)), config_(config) {
    if (!scenario_) throw std::invalid_argument("null scenario");
    config_.validate();
    const Grid& g = grid();
    const Chronics& ch = chronics();
    if (ch.n_steps < 2) throw ChronicsError("scenario needs at least two steps");
    if (ch.load_p.cols() != g.n_loads() || ch.dispatch_p.cols() != g.n_generators() ||
        ch.renewable_potential.cols() != g.n_renewables() || ch.load_p.rows() != ch.n_steps ||
        ch.dispatch_p.rows() != ch.n_steps || ch.renewable_potential.rows() != ch.n_steps) {
        throw ChronicsError("grid/chronics mismatch in scenario '" + scenario_->id + "'");
    }
    for (const auto& w : ch.maintenance) {
        if (w.line < 0 || w.line >= g.n_lines()) throw ChronicsError("maintenance window references unknown line");
    }
    reset();
}

namespace {

/// Zero generation and storage attached to islands that serve no load, then
/// solve. Such units are electrically idle; their share moves to the slack of
/// the island they used to feed.
FlowResult solve_islanded(const Grid& grid, const TopologyState& topology, InjectionVector inj) {
    const BusGraph bg = effective_buses(grid, topology);
    std::vector<char> island_has_load(static_cast<std::size_t>(bg.n_components), 0);
    for (int d = 0; d < grid.n_loads(); ++d) island_has_load[bg.component[bg.load[d]]] = 1;
    for (int g = 0; g < grid.n_generators(); ++g) {
        if (!island_has_load[bg.component[bg.gen[g]]]) inj.gen_p[g] = 0.0;
    }
    for (int s = 0; s < grid.n_storages(); ++s) {
        if (!island_has_load[bg.component[bg.storage[s]]]) inj.storage_p[s] = 0.0;
    }
    return solve_dc(grid, topology, inj);
}

}  // namespace

Observation Environment::reset() {
    const Grid& g = grid();
    const Chronics& ch = chronics();
    EnvState s;
    s.t = 0;
    s.topology = TopologyState::initial(g);
    s.overflow_count.assign(static_cast<std::size_t>(g.n_lines()), 0);
    s.line_in_maintenance.assign(static_cast<std::size_t>(g.n_lines()), 0);
    for (int l = 0; l < g.n_lines(); ++l) {
        if (ch.in_maintenance(l, 0)) {
            s.line_in_maintenance[l] = 1;
            s.topology.line_status[l] = 0;
        }
    }
    s.load_p = row(ch.load_p, 0);
    s.renewable_potential = row(ch.renewable_potential, 0);
    s.gen_p = row(ch.dispatch_p, 0);
    s.curtail_caps.assign(static_cast<std::size_t>(g.n_renewables()), 1.0);
    s.storage_energy.resize(static_cast<std::size_t>(g.n_storages()));
    for (int k = 0; k < g.n_storages(); ++k) s.storage_energy[k] = g.storages()[k].e_max_mwh / 2.0;
    s.storage_power.assign(static_cast<std::size_t>(g.n_storages()), 0.0);

    const FlowResult flow = solve_islanded(g, s.topology, {s.gen_p, s.load_p, s.storage_power});
    s.gen_p = flow.gen_p;
    s.line_p = flow.p_flow;
    s.rho = flow.rho;
    s.losses_mw = flow.losses_mw;
    state_ = std::move(s);
    return observe();
}

Observation Environment::observe() const { return make_observation(state_); }

Observation Environment::make_observation(const EnvState& s) const {
    const Grid& g = grid();
    Observation o;
    o.step = s.t;
    o.horizon = horizon();
    o.clock = clock_at(chronics().meta, s.t);
    o.done = s.done;
    o.gen_p = s.gen_p;
    o.renewable_potential = s.renewable_potential;
    o.load_p = s.load_p;
    o.line_p = s.line_p;
    o.rho = s.rho;
    o.line_status = s.topology.line_status;
    o.line_in_maintenance = s.line_in_maintenance;
    o.line_cooldown = s.topology.line_cooldown;
    o.sub_cooldown = s.topology.sub_cooldown;
    o.storage_energy = s.storage_energy;
    o.storage_power = s.storage_power;
    o.curtail_caps = s.curtail_caps;
    const int t_sched = std::min(s.t, chronics().n_steps - 1);
    for (int gi : g.dispatchable_generators()) {
        const Generator& gen = g.generators()[gi];
        const double sched = chronics().dispatch_p(t_sched, gi);
        o.redispatch_up_mw += std::max(0.0, std::min(gen.p_max - sched, gen.ramp_mw_per_step));
        o.redispatch_down_mw += std::max(0.0, std::min(sched - gen.p_min, gen.ramp_mw_per_step));
    }
    return o;
}

StepResult Environment::step(const Action& action) {
    auto [next, result] = transition(state_, action);
    state_ = std::move(next);
    return result;
}

StepResult Environment::simulate(const Action& action) const { return transition(state_, action).second; }

std::pair<EnvState, StepResult> Environment::transition(const EnvState& from, const Action& requested) const {
    if (from.done) throw std::logic_error("episode is over");
    const Grid& g = grid();
    const Chronics& ch = chronics();
    const EnvConfig& cfg = config_;
    const int n_line = g.n_lines();
    const int n_ren = g.n_renewables();
    const int n_sto = g.n_storages();
    const int T = horizon();

    EnvState s = from;
    s.t = from.t + 1;
    StepInfo info;
    info.redispatch_mwh.assign(static_cast<std::size_t>(g.n_generators()), 0.0);
    info.storage_mwh.assign(static_cast<std::size_t>(n_sto), 0.0);

    // (1) legality
    Action action = requested;
    if (auto why = check_action(g, ch, from, requested)) {
        info.illegal_action = true;
        info.reason = *why;
        action = DoNothing{};
    }

    // (2) switching
    std::vector<char> line_touched(static_cast<std::size_t>(n_line), 0);
    std::vector<char> sub_touched(static_cast<std::size_t>(g.n_substations()), 0);
    std::vector<double> caps_target = from.curtail_caps;
    std::vector<double> storage_request(static_cast<std::size_t>(n_sto), 0.0);
    std::visit(Overloaded{
                   [](const DoNothing&) {},
                   [&](const SetLineStatus& a) {
                       s.topology.line_status[a.line] = a.connect ? 1 : 0;
                       s.topology.line_cooldown[a.line] = cfg.cooldown_steps;
                       s.overflow_count[a.line] = 0;
                       line_touched[a.line] = 1;
                   },
                   [&](const SetBusbar& a) {
                       for (const auto& as : a.assignments) s.topology.set_busbar(as.element, as.busbar);
                       s.topology.sub_cooldown[a.substation] = cfg.cooldown_steps;
                       sub_touched[a.substation] = 1;
                   },
                   [&](const Curtail& a) { caps_target = a.caps; },
                   [&](const SetStorage& a) { storage_request = a.power_mw; },
                   [&](const Composite& a) {
                       caps_target = a.curtail.caps;
                       storage_request = a.storage.power_mw;
                   },
               },
               action);

    for (int l = 0; l < n_line; ++l) {
        s.line_in_maintenance[l] = ch.in_maintenance(l, s.t) ? 1 : 0;
        if (s.line_in_maintenance[l]) s.topology.line_status[l] = 0;
    }

    // (3) injections for t + 1
    s.load_p = row(ch.load_p, s.t);
    s.renewable_potential = row(ch.renewable_potential, s.t);
    const std::vector<double> scheduled = row(ch.dispatch_p, s.t);
    const auto& ren = g.renewable_generators();
    const auto& disp = g.dispatchable_generators();
    const double demand = std::accumulate(s.load_p.begin(), s.load_p.end(), 0.0);

    // Dispatchable units follow the schedule; compensation for the agent's
    // curtailment and storage may move each one by at most one ramp step
    // within [p_min, p_max] around it.
    std::vector<double> lo(disp.size()), hi(disp.size()), target(disp.size());
    double base_dispatch = 0.0, head_up = 0.0, head_down = 0.0;
    for (std::size_t k = 0; k < disp.size(); ++k) {
        const Generator& gen = g.generators()[disp[k]];
        target[k] = scheduled[disp[k]];
        lo[k] = std::max(gen.p_min, target[k] - gen.ramp_mw_per_step);
        hi[k] = std::min(gen.p_max, target[k] + gen.ramp_mw_per_step);
        lo[k] = std::min(lo[k], target[k]);
        hi[k] = std::max(hi[k], target[k]);
        base_dispatch += target[k];
        head_up += hi[k] - target[k];
        head_down += target[k] - lo[k];
    }

    // Steps (3)-(4) for a fraction f of the requested continuous action.
    struct Continuous {
        std::vector<double> caps, ren_out, storage_p, storage_e;
        double mismatch = 0.0;  // extra dispatchable output required
    };
    auto continuous = [&](double f) {
        Continuous c;
        c.caps.resize(static_cast<std::size_t>(n_ren));
        c.ren_out.resize(static_cast<std::size_t>(n_ren));
        double ren_total = 0.0;
        for (int r = 0; r < n_ren; ++r) {
            c.caps[r] = from.curtail_caps[r] + f * (caps_target[r] - from.curtail_caps[r]);
            c.ren_out[r] = std::min(scheduled[ren[r]], c.caps[r] * g.generators()[ren[r]].p_max);
            ren_total += c.ren_out[r];
        }
        c.storage_p.resize(static_cast<std::size_t>(n_sto));
        c.storage_e.resize(static_cast<std::size_t>(n_sto));
        double storage_total = 0.0;
        for (int k = 0; k < n_sto; ++k) {
            const Storage& st = g.storages()[k];
            const double e = from.storage_energy[k];
            double p = f * storage_request[k];
            double e_next = e;
            if (p > 0.0) {
                e_next = e + st.eff_charge * p * cfg.dt_hours;
                if (e_next > st.e_max_mwh) {
                    p = std::max(0.0, (st.e_max_mwh - e) / (st.eff_charge * cfg.dt_hours));
                    e_next = st.e_max_mwh;
                }
            } else if (p < 0.0) {
                e_next = e + p * cfg.dt_hours / st.eff_discharge;
                if (e_next < 0.0) {
                    p = -std::max(0.0, e * st.eff_discharge / cfg.dt_hours);
                    e_next = 0.0;
                }
            }
            c.storage_p[k] = p;
            c.storage_e[k] = std::clamp(e_next, 0.0, st.e_max_mwh);
            storage_total += p;
        }
        c.mismatch = demand + storage_total - ren_total - base_dispatch;
        return c;
    };
    auto feasible = [&](const Continuous& c) {
        return c.mismatch <= head_up + cfg.balance_tolerance_mw && -c.mismatch <= head_down + cfg.balance_tolerance_mw;
    };

    Continuous cont = continuous(1.0);
    if (cfg.oracle_action_limit && !feasible(cont) && feasible(continuous(0.0))) {
        double ok = 0.0, bad = 1.0;
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (ok + bad);
            (feasible(continuous(mid)) ? ok : bad) = mid;
        }
        cont = continuous(ok);
    }
    s.curtail_caps = cont.caps;
    s.storage_power = cont.storage_p;
    s.storage_energy = cont.storage_e;
    for (int k = 0; k < n_sto; ++k) info.storage_mwh[k] = std::abs(cont.storage_p[k]) * cfg.dt_hours;
    for (int r = 0; r < n_ren; ++r) {
        s.gen_p[ren[r]] = cont.ren_out[r];
        info.curtailed_mwh += (scheduled[ren[r]] - cont.ren_out[r]) * cfg.dt_hours;
    }
    info.load_mwh = demand * cfg.dt_hours;

    // (5) automatic redispatch proportional to ramp headroom
    bool game_over = false;
    if (!feasible(cont)) {
        game_over = true;
        info.reason = "demand not met: redispatch needs exceed ramp headroom";
    } else {
        const double need = cont.mismatch;
        for (std::size_t k = 0; k < disp.size(); ++k) {
            double p = target[k];
            if (need > 0.0 && head_up > 0.0) p += std::min(need, head_up) * (hi[k] - target[k]) / head_up;
            if (need < 0.0 && head_down > 0.0) p += std::max(need, -head_down) * (target[k] - lo[k]) / head_down;
            s.gen_p[disp[k]] = p;
            info.redispatch_mwh[disp[k]] = std::abs(p - scheduled[disp[k]]) * cfg.dt_hours;
        }
    }

    // (6) power flow, (7) overload cascade
    if (!game_over) {
        FlowResult flow = solve_islanded(g, s.topology, {s.gen_p, s.load_p, s.storage_power});
        for (int l = 0; l < n_line; ++l) {
            if (s.topology.line_status[l] && flow.rho[l] > 1.0) {
                ++s.overflow_count[l];
            } else {
                s.overflow_count[l] = 0;
            }
        }
        for (int iteration = 0; iteration <= n_line; ++iteration) {
            bool tripped = false;
            for (int l = 0; l < n_line; ++l) {
                if (!s.topology.line_status[l]) continue;
                if (flow.rho[l] >= cfg.hard_overflow_rho || s.overflow_count[l] > cfg.overflow_budget) {
                    s.topology.line_status[l] = 0;
                    s.topology.line_cooldown[l] = cfg.cooldown_steps;
                    s.overflow_count[l] = 0;
                    line_touched[l] = 1;
                    ++info.cascade_events;
                    tripped = true;
                }
            }
            if (!tripped) break;
            flow = solve_islanded(g, s.topology, {s.gen_p, s.load_p, s.storage_power});
        }

        // (8) game over: unsupplied load or slack pushed outside its range
        for (int isl : flow.blackout_islands) {
            if (flow.islands[isl].load_mw > cfg.balance_tolerance_mw) {
                game_over = true;
                info.reason = "demand not met: load islanded without generation";
            }
        }
        for (const auto& isl : flow.islands) {
            if (isl.slack_generator < 0) continue;
            const int sg = isl.slack_generator;
            const Generator& gen = g.generators()[sg];
            double upper = gen.p_max;
            if (gen.renewable()) {
                const auto r = std::find(ren.begin(), ren.end(), sg) - ren.begin();
                upper = std::min(scheduled[sg], s.curtail_caps[r] * gen.p_max);
            }
            if (flow.gen_p[sg] < -cfg.slack_tolerance_mw || flow.gen_p[sg] > upper + cfg.slack_tolerance_mw) {
                game_over = true;
                info.reason = "demand not met: slack " + gen.id + " out of range";
            }
        }
        s.gen_p = flow.gen_p;
        s.line_p = flow.p_flow;
        s.rho = flow.rho;
        s.losses_mw = flow.losses_mw;
    }

    for (int l = 0; l < n_line; ++l) {
        if (!line_touched[l]) s.topology.line_cooldown[l] = std::max(0, s.topology.line_cooldown[l] - 1);
    }
    for (int k = 0; k < g.n_substations(); ++k) {
        if (!sub_touched[k]) s.topology.sub_cooldown[k] = std::max(0, s.topology.sub_cooldown[k] - 1);
    }

    // (9) sparse survival reward
    StepResult result;
    if (game_over) {
        s.done = s.game_over = true;
        s.losses_mw = 0.0;
        info.game_over = true;
        info.blackout_energy_mwh = remaining_load_mwh(ch, s.t, cfg.dt_hours);
        result.reward = static_cast<double>(s.t) / T;
    } else if (s.t >= T) {
        s.done = true;
        result.reward = 1.0;
    }
    info.losses_mw = s.losses_mw;
    for (int gi : disp) info.operation_cost += info.redispatch_mwh[gi] * g.generators()[gi].marginal_cost;
    for (int k = 0; k < n_sto; ++k) info.operation_cost += info.storage_mwh[k] * g.storages()[k].cost_per_mwh;
    info.operation_cost += info.curtailed_mwh * cfg.price_mwh;

    result.done = s.done;
    result.info = std::move(info);
    result.observation = make_observation(s);
    return {std::move(s), std::move(result)};
}

}  // namespace gridmdp
