#include "gridmdp/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace gridmdp {

using nlohmann::json;

namespace {

constexpr std::string_view kGenTypeNames[kGenTypeCount] = {"nuclear", "solar", "wind", "thermal", "hydro"};

template <typename T>
int find_by_id(const std::vector<T>& items, std::string_view id) {
    auto it = std::lower_bound(items.begin(), items.end(), id,
                               [](const T& item, std::string_view key) { return item.id < key; });
    if (it == items.end() || it->id != id) return -1;
    return static_cast<int>(it - items.begin());
}

template <typename T>
void sort_and_check_unique(std::vector<T>& items, const char* what) {
    std::stable_sort(items.begin(), items.end(), [](const T& a, const T& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < items.size(); ++i) {
        if (items[i].id == items[i - 1].id) throw GridError(items[i].id, std::string("duplicate ") + what + " id");
    }
    for (const auto& item : items) {
        if (item.id.empty()) throw GridError("", std::string("empty ") + what + " id");
    }
}

struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

template <typename T>
T field(const json& obj, const char* key, const std::string& owner) {
    auto it = obj.find(key);
    if (it == obj.end()) throw GridError(owner, std::string("missing field '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw GridError(owner, std::string("field '") + key + "' has the wrong type");
    }
}

std::string owner_id(const json& obj, const char* cls) {
    if (!obj.is_object()) throw GridError("", std::string(cls) + " entry is not an object");
    auto it = obj.find("id");
    if (it == obj.end() || !it->is_string()) throw GridError("", std::string(cls) + " entry without string id");
    return it->get<std::string>();
}

const json& array_at(const json& doc, const char* key, bool required) {
    static const json empty = json::array();
    auto it = doc.find(key);
    if (it == doc.end()) {
        if (required) throw GridError("", std::string("missing top-level key '") + key + "'");
        return empty;
    }
    if (!it->is_array()) throw GridError("", std::string("'") + key + "' must be an array");
    return *it;
}

}  // namespace

std::string_view to_string(GenType type) { return kGenTypeNames[static_cast<int>(type)]; }

GenType gen_type_from_string(std::string_view name) {
    for (int i = 0; i < kGenTypeCount; ++i) {
        if (kGenTypeNames[i] == name) return static_cast<GenType>(i);
    }
    throw GridError("", "unknown generator type '" + std::string(name) + "'");
}

Grid Grid::build(double base_mva, std::vector<Substation> substations, std::vector<Line> lines,
                 std::vector<Generator> generators, std::vector<Load> loads, std::vector<Storage> storages) {
    Grid grid;
    grid.base_mva_ = base_mva;

    // Re-index substations by sorted id, then remap every reference.
    const int n_sub = static_cast<int>(substations.size());
    std::vector<int> order(static_cast<std::size_t>(n_sub));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return substations[a].id < substations[b].id; });
    std::vector<int> remap(static_cast<std::size_t>(n_sub));
    for (int i = 0; i < n_sub; ++i) {
        remap[order[i]] = i;
        grid.substations_.push_back(substations[order[i]]);
    }
    auto map_sub = [&](int sub, const std::string& owner) {
        if (sub < 0 || sub >= n_sub) throw GridError(owner, "references an unknown substation");
        return remap[sub];
    };
    for (auto& l : lines) {
        l.from = map_sub(l.from, l.id);
        l.to = map_sub(l.to, l.id);
    }
    for (auto& g : generators) g.substation = map_sub(g.substation, g.id);
    for (auto& d : loads) d.substation = map_sub(d.substation, d.id);
    for (auto& s : storages) s.substation = map_sub(s.substation, s.id);

    grid.lines_ = std::move(lines);
    grid.generators_ = std::move(generators);
    grid.loads_ = std::move(loads);
    grid.storages_ = std::move(storages);

    sort_and_check_unique(grid.substations_, "substation");
    sort_and_check_unique(grid.lines_, "line");
    sort_and_check_unique(grid.generators_, "generator");
    sort_and_check_unique(grid.loads_, "load");
    sort_and_check_unique(grid.storages_, "storage");

    for (int g = 0; g < grid.n_generators(); ++g) {
        (grid.generators_[g].renewable() ? grid.renewable_ : grid.dispatchable_).push_back(g);
    }
    grid.validate();
    return grid;
}

void Grid::validate() const {
    if (!finite_positive(base_mva_)) throw GridError("", "base_mva must be positive");
    if (substations_.empty()) throw GridError("", "grid has no substation");
    for (const auto& l : lines_) {
        if (!finite_positive(l.x_pu)) throw GridError(l.id, "reactance must be positive");
        if (!std::isfinite(l.r_pu) || l.r_pu < 0.0) throw GridError(l.id, "resistance must be non-negative");
        if (!finite_positive(l.thermal_limit_mw)) throw GridError(l.id, "thermal limit must be positive");
        if (l.from == l.to) throw GridError(l.id, "line connects a substation to itself");
    }
    for (const auto& g : generators_) {
        if (!std::isfinite(g.p_min) || !std::isfinite(g.p_max) || g.p_min < 0.0 || g.p_min > g.p_max)
            throw GridError(g.id, "requires 0 <= p_min <= p_max");
        if (!std::isfinite(g.ramp_mw_per_step) || g.ramp_mw_per_step < 0.0)
            throw GridError(g.id, "ramp rate must be non-negative");
        if (!std::isfinite(g.marginal_cost)) throw GridError(g.id, "marginal cost must be finite");
    }
    for (const auto& d : loads_) {
        if (!std::isfinite(d.weight) || d.weight < 0.0) throw GridError(d.id, "weight must be non-negative");
    }
    for (const auto& s : storages_) {
        if (!finite_positive(s.e_max_mwh)) throw GridError(s.id, "e_max must be positive");
        if (!finite_positive(s.p_max_mw)) throw GridError(s.id, "p_max must be positive");
        if (!(s.eff_charge > 0.0 && s.eff_charge <= 1.0)) throw GridError(s.id, "charge efficiency must be in (0,1]");
        if (!(s.eff_discharge > 0.0 && s.eff_discharge <= 1.0))
            throw GridError(s.id, "discharge efficiency must be in (0,1]");
        if (!std::isfinite(s.cost_per_mwh) || s.cost_per_mwh < 0.0)
            throw GridError(s.id, "cost per MWh must be non-negative");
    }

    DisjointSet dsu(n_substations());
    for (const auto& l : lines_) dsu.unite(l.from, l.to);
    for (int s = 1; s < n_substations(); ++s) {
        if (dsu.find(s) != dsu.find(0)) throw GridError(substations_[s].id, "substation graph is not connected");
    }
}

int Grid::substation_index(std::string_view id) const { return find_by_id(substations_, id); }
int Grid::line_index(std::string_view id) const { return find_by_id(lines_, id); }
int Grid::generator_index(std::string_view id) const { return find_by_id(generators_, id); }
int Grid::load_index(std::string_view id) const { return find_by_id(loads_, id); }
int Grid::storage_index(std::string_view id) const { return find_by_id(storages_, id); }

bool operator==(const Substation& a, const Substation& b) { return a.id == b.id; }
bool operator==(const Line& a, const Line& b) {
    return a.id == b.id && a.from == b.from && a.to == b.to && a.x_pu == b.x_pu && a.r_pu == b.r_pu &&
           a.thermal_limit_mw == b.thermal_limit_mw;
}
bool operator==(const Generator& a, const Generator& b) {
    return a.id == b.id && a.substation == b.substation && a.type == b.type && a.p_max == b.p_max &&
           a.p_min == b.p_min && a.ramp_mw_per_step == b.ramp_mw_per_step && a.marginal_cost == b.marginal_cost;
}
bool operator==(const Load& a, const Load& b) {
    return a.id == b.id && a.substation == b.substation && a.weight == b.weight;
}
bool operator==(const Storage& a, const Storage& b) {
    return a.id == b.id && a.substation == b.substation && a.e_max_mwh == b.e_max_mwh && a.p_max_mw == b.p_max_mw &&
           a.eff_charge == b.eff_charge && a.eff_discharge == b.eff_discharge && a.cost_per_mwh == b.cost_per_mwh;
}
bool operator==(const Grid& a, const Grid& b) {
    return a.base_mva_ == b.base_mva_ && a.substations_ == b.substations_ && a.lines_ == b.lines_ &&
           a.generators_ == b.generators_ && a.loads_ == b.loads_ && a.storages_ == b.storages_;
}

Grid parse_grid(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw GridError("", std::string("not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw GridError("", "grid document must be a JSON object");

    double base_mva = 100.0;
    if (auto it = doc.find("base_mva"); it != doc.end()) {
        if (!it->is_number()) throw GridError("", "base_mva must be a number");
        base_mva = it->get<double>();
    } else {
        throw GridError("", "missing top-level key 'base_mva'");
    }

    std::vector<Substation> subs;
    for (const auto& s : array_at(doc, "substations", true)) {
        if (s.is_string()) {
            subs.push_back({s.get<std::string>()});
        } else {
            subs.push_back({owner_id(s, "substation")});
        }
    }
    std::vector<std::string> sub_ids;
    for (const auto& s : subs) sub_ids.push_back(s.id);
    auto sub_ref = [&](const json& obj, const char* key, const std::string& owner) {
        auto name = field<std::string>(obj, key, owner);
        auto it = std::find(sub_ids.begin(), sub_ids.end(), name);
        if (it == sub_ids.end()) throw GridError(owner, "dangling reference to substation '" + name + "'");
        return static_cast<int>(it - sub_ids.begin());
    };

    std::vector<Line> lines;
    for (const auto& l : array_at(doc, "lines", true)) {
        Line line;
        line.id = owner_id(l, "line");
        line.from = sub_ref(l, "from", line.id);
        line.to = sub_ref(l, "to", line.id);
        line.x_pu = field<double>(l, "x_pu", line.id);
        line.r_pu = field<double>(l, "r_pu", line.id);
        line.thermal_limit_mw = field<double>(l, "thermal_limit_mw", line.id);
        lines.push_back(std::move(line));
    }
    std::vector<Generator> gens;
    for (const auto& g : array_at(doc, "generators", true)) {
        Generator gen;
        gen.id = owner_id(g, "generator");
        gen.substation = sub_ref(g, "sub", gen.id);
        try {
            gen.type = gen_type_from_string(field<std::string>(g, "type", gen.id));
        } catch (const GridError& e) {
            if (!e.element().empty()) throw;
            throw GridError(gen.id, e.what());
        }
        gen.p_max = field<double>(g, "p_max", gen.id);
        gen.p_min = field<double>(g, "p_min", gen.id);
        gen.ramp_mw_per_step = field<double>(g, "ramp_mw_per_step", gen.id);
        gen.marginal_cost = field<double>(g, "marginal_cost", gen.id);
        gens.push_back(std::move(gen));
    }
    std::vector<Load> loads;
    for (const auto& d : array_at(doc, "loads", true)) {
        Load load;
        load.id = owner_id(d, "load");
        load.substation = sub_ref(d, "sub", load.id);
        if (d.contains("weight")) load.weight = field<double>(d, "weight", load.id);
        loads.push_back(std::move(load));
    }
    std::vector<Storage> storages;
    for (const auto& s : array_at(doc, "storages", false)) {
        Storage st;
        st.id = owner_id(s, "storage");
        st.substation = sub_ref(s, "sub", st.id);
        st.e_max_mwh = field<double>(s, "e_max_mwh", st.id);
        st.p_max_mw = field<double>(s, "p_max_mw", st.id);
        st.eff_charge = field<double>(s, "eff_c", st.id);
        st.eff_discharge = field<double>(s, "eff_d", st.id);
        st.cost_per_mwh = field<double>(s, "cost_per_mwh", st.id);
        storages.push_back(std::move(st));
    }
    return Grid::build(base_mva, std::move(subs), std::move(lines), std::move(gens), std::move(loads),
                       std::move(storages));
}

std::string serialize_grid(const Grid& grid) {
    json doc;
    doc["base_mva"] = grid.base_mva();
    const auto& subs = grid.substations();
    doc["substations"] = json::array();
    for (const auto& s : subs) doc["substations"].push_back({{"id", s.id}});
    doc["lines"] = json::array();
    for (const auto& l : grid.lines()) {
        doc["lines"].push_back({{"id", l.id},
                                {"from", subs[l.from].id},
                                {"to", subs[l.to].id},
                                {"x_pu", l.x_pu},
                                {"r_pu", l.r_pu},
                                {"thermal_limit_mw", l.thermal_limit_mw}});
    }
    doc["generators"] = json::array();
    for (const auto& g : grid.generators()) {
        doc["generators"].push_back({{"id", g.id},
                                     {"sub", subs[g.substation].id},
                                     {"type", std::string(to_string(g.type))},
                                     {"p_max", g.p_max},
                                     {"p_min", g.p_min},
                                     {"ramp_mw_per_step", g.ramp_mw_per_step},
                                     {"marginal_cost", g.marginal_cost}});
    }
    doc["loads"] = json::array();
    for (const auto& d : grid.loads()) {
        json entry = {{"id", d.id}, {"sub", subs[d.substation].id}};
        if (d.weight != 1.0) entry["weight"] = d.weight;
        doc["loads"].push_back(std::move(entry));
    }
    doc["storages"] = json::array();
    for (const auto& s : grid.storages()) {
        doc["storages"].push_back({{"id", s.id},
                                   {"sub", subs[s.substation].id},
                                   {"e_max_mwh", s.e_max_mwh},
                                   {"p_max_mw", s.p_max_mw},
                                   {"eff_c", s.eff_charge},
                                   {"eff_d", s.eff_discharge},
                                   {"cost_per_mwh", s.cost_per_mwh}});
    }
    return doc.dump(2);
}

Grid load_grid_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GridError("", "cannot open grid file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_grid(buffer.str());
}

void save_grid_file(const Grid& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw GridError("", "cannot write grid file '" + path + "'");
    out << serialize_grid(grid) << '\n';
}

std::string_view to_string(ElementKind kind) {
    switch (kind) {
        case ElementKind::LineFrom: return "line_from";
        case ElementKind::LineTo: return "line_to";
        case ElementKind::Generator: return "generator";
        case ElementKind::Load: return "load";
        case ElementKind::Storage: return "storage";
    }
    return "?";
}

ElementKind element_kind_from_string(std::string_view name) {
    for (auto kind : {ElementKind::LineFrom, ElementKind::LineTo, ElementKind::Generator, ElementKind::Load,
                      ElementKind::Storage}) {
        if (to_string(kind) == name) return kind;
    }
    throw GridError("", "unknown element kind '" + std::string(name) + "'");
}

int substation_of(const Grid& grid, ElementRef element) {
    switch (element.kind) {
        case ElementKind::LineFrom: return grid.lines().at(element.index).from;
        case ElementKind::LineTo: return grid.lines().at(element.index).to;
        case ElementKind::Generator: return grid.generators().at(element.index).substation;
        case ElementKind::Load: return grid.loads().at(element.index).substation;
        case ElementKind::Storage: return grid.storages().at(element.index).substation;
    }
    return -1;
}

std::vector<ElementRef> elements_at(const Grid& grid, int sub) {
    std::vector<ElementRef> out;
    for (int i = 0; i < grid.n_lines(); ++i) {
        if (grid.lines()[i].from == sub) out.push_back({ElementKind::LineFrom, i});
    }
    for (int i = 0; i < grid.n_lines(); ++i) {
        if (grid.lines()[i].to == sub) out.push_back({ElementKind::LineTo, i});
    }
    for (int i = 0; i < grid.n_generators(); ++i) {
        if (grid.generators()[i].substation == sub) out.push_back({ElementKind::Generator, i});
    }
    for (int i = 0; i < grid.n_loads(); ++i) {
        if (grid.loads()[i].substation == sub) out.push_back({ElementKind::Load, i});
    }
    for (int i = 0; i < grid.n_storages(); ++i) {
        if (grid.storages()[i].substation == sub) out.push_back({ElementKind::Storage, i});
    }
    return out;
}

TopologyState TopologyState::initial(const Grid& grid) {
    TopologyState t;
    t.line_status.assign(static_cast<std::size_t>(grid.n_lines()), 1);
    t.line_from_bus.assign(static_cast<std::size_t>(grid.n_lines()), 1);
    t.line_to_bus.assign(static_cast<std::size_t>(grid.n_lines()), 1);
    t.gen_bus.assign(static_cast<std::size_t>(grid.n_generators()), 1);
    t.load_bus.assign(static_cast<std::size_t>(grid.n_loads()), 1);
    t.storage_bus.assign(static_cast<std::size_t>(grid.n_storages()), 1);
    t.line_cooldown.assign(static_cast<std::size_t>(grid.n_lines()), 0);
    t.sub_cooldown.assign(static_cast<std::size_t>(grid.n_substations()), 0);
    return t;
}

std::uint8_t TopologyState::busbar(ElementRef element) const {
    switch (element.kind) {
        case ElementKind::LineFrom: return line_from_bus.at(element.index);
        case ElementKind::LineTo: return line_to_bus.at(element.index);
        case ElementKind::Generator: return gen_bus.at(element.index);
        case ElementKind::Load: return load_bus.at(element.index);
        case ElementKind::Storage: return storage_bus.at(element.index);
    }
    return 0;
}

void TopologyState::set_busbar(ElementRef element, std::uint8_t bus) {
    switch (element.kind) {
        case ElementKind::LineFrom: line_from_bus.at(element.index) = bus; break;
        case ElementKind::LineTo: line_to_bus.at(element.index) = bus; break;
        case ElementKind::Generator: gen_bus.at(element.index) = bus; break;
        case ElementKind::Load: load_bus.at(element.index) = bus; break;
        case ElementKind::Storage: storage_bus.at(element.index) = bus; break;
    }
}

void check_topology(const Grid& grid, const TopologyState& t) {
    auto sized = [](const auto& v, int n) { return static_cast<int>(v.size()) == n; };
    if (!sized(t.line_status, grid.n_lines()) || !sized(t.line_from_bus, grid.n_lines()) ||
        !sized(t.line_to_bus, grid.n_lines()) || !sized(t.gen_bus, grid.n_generators()) ||
        !sized(t.load_bus, grid.n_loads()) || !sized(t.storage_bus, grid.n_storages()) ||
        !sized(t.line_cooldown, grid.n_lines()) || !sized(t.sub_cooldown, grid.n_substations())) {
        throw GridError("", "topology does not match grid dimensions");
    }
    auto valid_bus = [](std::uint8_t b) { return b == 1 || b == 2; };
    for (auto v : {&t.line_from_bus, &t.line_to_bus, &t.gen_bus, &t.load_bus, &t.storage_bus}) {
        for (auto b : *v) {
            if (!valid_bus(b)) throw GridError("", "busbar must be 1 or 2");
        }
    }
    for (auto v : {&t.line_cooldown, &t.sub_cooldown}) {
        for (int c : *v) {
            if (c < 0) throw GridError("", "negative cooldown");
        }
    }
}

BusGraph effective_buses(const Grid& grid, const TopologyState& topology) {
    const int n_sub = grid.n_substations();
    // slot = 2 * substation + (busbar - 1)
    std::vector<char> used(static_cast<std::size_t>(2 * n_sub), 0);
    auto slot = [](int sub, std::uint8_t bus) { return 2 * sub + (bus - 1); };
    for (int i = 0; i < grid.n_lines(); ++i) {
        used[slot(grid.lines()[i].from, topology.line_from_bus[i])] = 1;
        used[slot(grid.lines()[i].to, topology.line_to_bus[i])] = 1;
    }
    for (int i = 0; i < grid.n_generators(); ++i) used[slot(grid.generators()[i].substation, topology.gen_bus[i])] = 1;
    for (int i = 0; i < grid.n_loads(); ++i) used[slot(grid.loads()[i].substation, topology.load_bus[i])] = 1;
    for (int i = 0; i < grid.n_storages(); ++i)
        used[slot(grid.storages()[i].substation, topology.storage_bus[i])] = 1;

    BusGraph g;
    std::vector<int> bus_of_slot(used.size(), -1);
    for (int s = 0; s < 2 * n_sub; ++s) {
        if (!used[s]) continue;
        bus_of_slot[s] = g.n_buses();
        g.buses.push_back({s / 2, s % 2 + 1});
    }
    for (int i = 0; i < grid.n_lines(); ++i) {
        g.line_from.push_back(bus_of_slot[slot(grid.lines()[i].from, topology.line_from_bus[i])]);
        g.line_to.push_back(bus_of_slot[slot(grid.lines()[i].to, topology.line_to_bus[i])]);
    }
    for (int i = 0; i < grid.n_generators(); ++i)
        g.gen.push_back(bus_of_slot[slot(grid.generators()[i].substation, topology.gen_bus[i])]);
    for (int i = 0; i < grid.n_loads(); ++i)
        g.load.push_back(bus_of_slot[slot(grid.loads()[i].substation, topology.load_bus[i])]);
    for (int i = 0; i < grid.n_storages(); ++i)
        g.storage.push_back(bus_of_slot[slot(grid.storages()[i].substation, topology.storage_bus[i])]);

    DisjointSet dsu(g.n_buses());
    for (int i = 0; i < grid.n_lines(); ++i) {
        if (topology.line_status[i]) dsu.unite(g.line_from[i], g.line_to[i]);
    }
    // Component ids numbered by first appearance in bus order.
    std::vector<int> id_of_root(static_cast<std::size_t>(g.n_buses()), -1);
    g.component.resize(static_cast<std::size_t>(g.n_buses()));
    for (int b = 0; b < g.n_buses(); ++b) {
        int root = dsu.find(b);
        if (id_of_root[root] < 0) id_of_root[root] = g.n_components++;
        g.component[b] = id_of_root[root];
    }
    return g;
}

}  // namespace gridmdp
