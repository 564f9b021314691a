#include "gridmdp/io.hpp"

#include <cmath>

namespace gridmdp {

using json = nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void fail(const std::string& what) { throw ActionParseError(what); }

const json& field(const json& doc, const char* key) {
    auto it = doc.find(key);
    if (it == doc.end()) fail(std::string("missing field '") + key + "'");
    return *it;
}

double number(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(where + " must be finite");
    return x;
}

std::string text(const json& v, const std::string& where) {
    if (!v.is_string()) fail(where + " must be a string");
    return v.get<std::string>();
}

void only_keys(const json& doc, std::initializer_list<const char*> allowed) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok) fail("unexpected field '" + it.key() + "'");
    }
}

Curtail parse_caps(const json& caps, const Grid& grid, const EnvState& state) {
    if (!caps.is_object()) fail("'caps' must be an object keyed by renewable generator id");
    Curtail c{state.curtail_caps};
    const auto& ren = grid.renewable_generators();
    for (auto it = caps.begin(); it != caps.end(); ++it) {
        const int g = grid.generator_index(it.key());
        const auto pos = std::find(ren.begin(), ren.end(), g);
        if (g < 0 || pos == ren.end()) fail("'" + it.key() + "' is not a renewable generator");
        const double v = number(it.value(), "cap of " + it.key());
        if (v < 0.0 || v > 1.0) fail("cap of " + it.key() + " must be in [0, 1]");
        c.caps[pos - ren.begin()] = v;
    }
    return c;
}

SetStorage parse_storage(const json& power, const Grid& grid) {
    if (!power.is_object()) fail("'power_mw' must be an object keyed by storage id");
    SetStorage s;
    s.power_mw.assign(static_cast<std::size_t>(grid.n_storages()), 0.0);
    for (auto it = power.begin(); it != power.end(); ++it) {
        const int k = grid.storage_index(it.key());
        if (k < 0) fail("unknown storage '" + it.key() + "'");
        const double v = number(it.value(), "power of " + it.key());
        if (std::abs(v) > grid.storages()[k].p_max_mw) fail("power of " + it.key() + " exceeds p_max");
        s.power_mw[k] = v;
    }
    return s;
}

json caps_json(const std::vector<double>& caps, const Grid& grid) {
    json j = json::object();
    const auto& ren = grid.renewable_generators();
    for (std::size_t r = 0; r < caps.size() && r < ren.size(); ++r) j[grid.generators()[ren[r]].id] = caps[r];
    return j;
}

json storage_json(const std::vector<double>& power, const Grid& grid) {
    json j = json::object();
    for (std::size_t k = 0; k < power.size() && k < grid.storages().size(); ++k) j[grid.storages()[k].id] = power[k];
    return j;
}

std::string element_id(const Grid& grid, const ElementRef& e) {
    switch (e.kind) {
        case ElementKind::LineFrom:
        case ElementKind::LineTo: return grid.lines().at(e.index).id;
        case ElementKind::Generator: return grid.generators().at(e.index).id;
        case ElementKind::Load: return grid.loads().at(e.index).id;
        case ElementKind::Storage: return grid.storages().at(e.index).id;
    }
    return {};
}

}  // namespace

json action_to_json(const Action& action, const Grid& grid) {
    return std::visit(
        Overloaded{
            [](const DoNothing&) { return json{{"type", "do_nothing"}}; },
            [&](const SetLineStatus& a) {
                return json{{"type", "set_line_status"}, {"line", grid.lines().at(a.line).id}, {"connect", a.connect}};
            },
            [&](const SetBusbar& a) {
                json as = json::array();
                for (const auto& x : a.assignments)
                    as.push_back({{"kind", std::string(to_string(x.element.kind))},
                                  {"id", element_id(grid, x.element)},
                                  {"busbar", x.busbar}});
                return json{{"type", "set_busbar"}, {"substation", grid.substations().at(a.substation).id},
                            {"assignments", as}};
            },
            [&](const Curtail& a) { return json{{"type", "curtail"}, {"caps", caps_json(a.caps, grid)}}; },
            [&](const SetStorage& a) {
                return json{{"type", "set_storage"}, {"power_mw", storage_json(a.power_mw, grid)}};
            },
            [&](const Composite& a) {
                return json{{"type", "composite"},
                            {"caps", caps_json(a.curtail.caps, grid)},
                            {"power_mw", storage_json(a.storage.power_mw, grid)}};
            },
        },
        action);
}

Action action_from_json(const json& doc, const Grid& grid, const EnvState& state) {
    if (!doc.is_object()) fail("action must be a JSON object");
    const std::string type = text(field(doc, "type"), "'type'");
    if (type == "do_nothing") {
        only_keys(doc, {"type"});
        return DoNothing{};
    }
    if (type == "set_line_status") {
        only_keys(doc, {"type", "line", "connect"});
        const std::string id = text(field(doc, "line"), "'line'");
        const int l = grid.line_index(id);
        if (l < 0) fail("unknown line '" + id + "'");
        const json& c = field(doc, "connect");
        if (!c.is_boolean()) fail("'connect' must be a boolean");
        return SetLineStatus{l, c.get<bool>()};
    }
    if (type == "set_busbar") {
        only_keys(doc, {"type", "substation", "assignments"});
        const std::string sid = text(field(doc, "substation"), "'substation'");
        SetBusbar a;
        a.substation = grid.substation_index(sid);
        if (a.substation < 0) fail("unknown substation '" + sid + "'");
        const json& as = field(doc, "assignments");
        if (!as.is_array() || as.empty()) fail("'assignments' must be a non-empty array");
        for (const auto& x : as) {
            if (!x.is_object()) fail("each assignment must be an object");
            only_keys(x, {"kind", "id", "busbar"});
            BusAssignment b;
            try {
                b.element.kind = element_kind_from_string(text(field(x, "kind"), "'kind'"));
            } catch (const GridError&) {
                fail("unknown element kind '" + x.at("kind").get<std::string>() + "'");
            }
            const std::string id = text(field(x, "id"), "'id'");
            switch (b.element.kind) {
                case ElementKind::LineFrom:
                case ElementKind::LineTo: b.element.index = grid.line_index(id); break;
                case ElementKind::Generator: b.element.index = grid.generator_index(id); break;
                case ElementKind::Load: b.element.index = grid.load_index(id); break;
                case ElementKind::Storage: b.element.index = grid.storage_index(id); break;
            }
            if (b.element.index < 0) fail("unknown element '" + id + "'");
            const json& bus = field(x, "busbar");
            if (!bus.is_number_integer() || (bus.get<int>() != 1 && bus.get<int>() != 2))
                fail("'busbar' must be 1 or 2");
            b.busbar = static_cast<std::uint8_t>(bus.get<int>());
            a.assignments.push_back(b);
        }
        return a;
    }
    if (type == "curtail") {
        only_keys(doc, {"type", "caps"});
        return parse_caps(field(doc, "caps"), grid, state);
    }
    if (type == "set_storage") {
        only_keys(doc, {"type", "power_mw"});
        return parse_storage(field(doc, "power_mw"), grid);
    }
    if (type == "composite") {
        only_keys(doc, {"type", "caps", "power_mw"});
        Composite c;
        c.curtail = doc.contains("caps") ? parse_caps(doc["caps"], grid, state) : Curtail{state.curtail_caps};
        c.storage = doc.contains("power_mw") ? parse_storage(doc["power_mw"], grid) : parse_storage(json::object(), grid);
        return c;
    }
    fail("unknown action type '" + type + "'");
}

json step_info_to_json(const StepInfo& info) {
    return {{"losses_mw", info.losses_mw},
            {"operation_cost", info.operation_cost},
            {"blackout_energy_mwh", info.blackout_energy_mwh},
            {"cascade_events", info.cascade_events},
            {"illegal_action", info.illegal_action},
            {"game_over", info.game_over},
            {"reason", info.reason},
            {"redispatch_mwh", info.redispatch_mwh},
            {"storage_mwh", info.storage_mwh},
            {"curtailed_mwh", info.curtailed_mwh},
            {"load_mwh", info.load_mwh}};
}

StepInfo step_info_from_json(const json& j) {
    StepInfo info;
    info.losses_mw = j.at("losses_mw").get<double>();
    info.operation_cost = j.at("operation_cost").get<double>();
    info.blackout_energy_mwh = j.at("blackout_energy_mwh").get<double>();
    info.cascade_events = j.at("cascade_events").get<int>();
    info.illegal_action = j.at("illegal_action").get<bool>();
    info.game_over = j.at("game_over").get<bool>();
    info.reason = j.at("reason").get<std::string>();
    info.redispatch_mwh = j.at("redispatch_mwh").get<std::vector<double>>();
    info.storage_mwh = j.at("storage_mwh").get<std::vector<double>>();
    info.curtailed_mwh = j.at("curtailed_mwh").get<double>();
    info.load_mwh = j.at("load_mwh").get<double>();
    return info;
}

json observation_to_json(const Observation& obs, const Grid& grid) {
    json lines = json::array();
    for (int l = 0; l < grid.n_lines(); ++l) {
        lines.push_back({{"id", grid.lines()[l].id},
                         {"p_mw", obs.line_p[l]},
                         {"rho", obs.rho[l]},
                         {"connected", obs.line_status[l] != 0},
                         {"cooldown", obs.line_cooldown[l]},
                         {"in_maintenance", obs.line_in_maintenance[l] != 0}});
    }
    json gens = json::array();
    const auto& ren = grid.renewable_generators();
    for (int g = 0; g < grid.n_generators(); ++g) {
        const Generator& gen = grid.generators()[g];
        json rec = {{"id", gen.id}, {"type", std::string(to_string(gen.type))}, {"p_mw", obs.gen_p[g]}};
        const auto pos = std::find(ren.begin(), ren.end(), g);
        if (pos != ren.end()) {
            rec["potential_mw"] = obs.renewable_potential[pos - ren.begin()];
            rec["curtail_cap"] = obs.curtail_caps[pos - ren.begin()];
        }
        gens.push_back(std::move(rec));
    }
    json loads = json::array();
    for (int d = 0; d < grid.n_loads(); ++d) loads.push_back({{"id", grid.loads()[d].id}, {"p_mw", obs.load_p[d]}});
    json storages = json::array();
    for (int k = 0; k < grid.n_storages(); ++k) {
        storages.push_back({{"id", grid.storages()[k].id},
                            {"energy_mwh", obs.storage_energy[k]},
                            {"power_mw", obs.storage_power[k]}});
    }
    json subs = json::array();
    for (int k = 0; k < grid.n_substations(); ++k)
        subs.push_back({{"id", grid.substations()[k].id}, {"cooldown", obs.sub_cooldown[k]}});
    return {{"step", obs.step},
            {"horizon", obs.horizon},
            {"done", obs.done},
            {"minute_of_day", obs.clock.minute_of_day},
            {"day_of_year", obs.clock.day_of_year},
            {"max_rho", obs.max_rho()},
            {"lines", lines},
            {"generators", gens},
            {"loads", loads},
            {"storages", storages},
            {"substations", subs},
            {"redispatch_margin_mw", {{"up", obs.redispatch_up_mw}, {"down", obs.redispatch_down_mw}}}};
}

json step_result_to_json(const StepResult& result, const Grid& grid) {
    return {{"observation", observation_to_json(result.observation, grid)},
            {"reward", result.reward},
            {"done", result.done},
            {"info", step_info_to_json(result.info)}};
}

}  // namespace gridmdp
