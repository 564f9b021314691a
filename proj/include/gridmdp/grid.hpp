#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridmdp {

/// Raised for malformed grid documents. `element()` names the offending
/// element id when one is known.
class GridError : public std::runtime_error {
public:
    GridError(const std::string& element, const std::string& what)
        : std::runtime_error(element.empty() ? what : element + ": " + what), element_(element) {}

    const std::string& element() const { return element_; }

private:
    std::string element_;
};

enum class GenType : std::uint8_t { Nuclear, Solar, Wind, Thermal, Hydro };

inline constexpr int kGenTypeCount = 5;

std::string_view to_string(GenType type);
GenType gen_type_from_string(std::string_view name);

inline bool is_renewable(GenType type) { return type == GenType::Solar || type == GenType::Wind; }

struct Substation {
    std::string id;
};

struct Line {
    std::string id;
    int from = 0;  // substation index
    int to = 0;
    double x_pu = 0.0;
    double r_pu = 0.0;
    double thermal_limit_mw = 0.0;
};

struct Generator {
    std::string id;
    int substation = 0;
    GenType type = GenType::Thermal;
    double p_max = 0.0;
    double p_min = 0.0;
    double ramp_mw_per_step = 0.0;
    double marginal_cost = 0.0;

    bool renewable() const { return is_renewable(type); }
};

struct Load {
    std::string id;
    int substation = 0;
    // Relative share of system demand used by the chronics generator.
    double weight = 1.0;
};

struct Storage {
    std::string id;
    int substation = 0;
    double e_max_mwh = 0.0;
    double p_max_mw = 0.0;
    double eff_charge = 0.95;
    double eff_discharge = 0.95;
    double cost_per_mwh = 0.0;
};

/// Static network description. Every element class is kept sorted by id,
/// which fixes the index order used everywhere else (observations, CSV
/// columns, topology vectors). Construct through `Grid::build` or
/// `parse_grid`; both validate.
class Grid {
public:
    static Grid build(double base_mva, std::vector<Substation> substations, std::vector<Line> lines,
                      std::vector<Generator> generators, std::vector<Load> loads,
                      std::vector<Storage> storages);

    double base_mva() const { return base_mva_; }
    const std::vector<Substation>& substations() const { return substations_; }
    const std::vector<Line>& lines() const { return lines_; }
    const std::vector<Generator>& generators() const { return generators_; }
    const std::vector<Load>& loads() const { return loads_; }
    const std::vector<Storage>& storages() const { return storages_; }

    int n_substations() const { return static_cast<int>(substations_.size()); }
    int n_lines() const { return static_cast<int>(lines_.size()); }
    int n_generators() const { return static_cast<int>(generators_.size()); }
    int n_loads() const { return static_cast<int>(loads_.size()); }
    int n_storages() const { return static_cast<int>(storages_.size()); }
    int n_renewables() const { return static_cast<int>(renewable_.size()); }

    /// Generator indices of solar and wind units, ascending.
    const std::vector<int>& renewable_generators() const { return renewable_; }
    /// Generator indices of nuclear, thermal and hydro units, ascending.
    const std::vector<int>& dispatchable_generators() const { return dispatchable_; }

    int substation_index(std::string_view id) const;  // -1 when absent
    int line_index(std::string_view id) const;
    int generator_index(std::string_view id) const;
    int load_index(std::string_view id) const;
    int storage_index(std::string_view id) const;

    friend bool operator==(const Grid& a, const Grid& b);

private:
    void validate() const;

    double base_mva_ = 100.0;
    std::vector<Substation> substations_;
    std::vector<Line> lines_;
    std::vector<Generator> generators_;
    std::vector<Load> loads_;
    std::vector<Storage> storages_;
    std::vector<int> renewable_;
    std::vector<int> dispatchable_;
};

bool operator==(const Substation& a, const Substation& b);
bool operator==(const Line& a, const Line& b);
bool operator==(const Generator& a, const Generator& b);
bool operator==(const Load& a, const Load& b);
bool operator==(const Storage& a, const Storage& b);

Grid parse_grid(std::string_view document);
std::string serialize_grid(const Grid& grid);
Grid load_grid_file(const std::string& path);
void save_grid_file(const Grid& grid, const std::string& path);

enum class ElementKind : std::uint8_t { LineFrom, LineTo, Generator, Load, Storage };

std::string_view to_string(ElementKind kind);
ElementKind element_kind_from_string(std::string_view name);

struct ElementRef {
    ElementKind kind = ElementKind::Load;
    int index = 0;

    friend bool operator==(const ElementRef&, const ElementRef&) = default;
};

/// Substation hosting the given element end.
int substation_of(const Grid& grid, ElementRef element);

/// Every element end attached to substation `sub`, in kind-then-index order.
std::vector<ElementRef> elements_at(const Grid& grid, int sub);

/// Mutable switching state of the network. Busbars are numbered 1 and 2.
struct TopologyState {
    std::vector<std::uint8_t> line_status;  // 1 = in service
    std::vector<std::uint8_t> line_from_bus;
    std::vector<std::uint8_t> line_to_bus;
    std::vector<std::uint8_t> gen_bus;
    std::vector<std::uint8_t> load_bus;
    std::vector<std::uint8_t> storage_bus;
    std::vector<int> line_cooldown;
    std::vector<int> sub_cooldown;

    /// All lines in service, every element on busbar 1, no cooldowns.
    static TopologyState initial(const Grid& grid);

    std::uint8_t busbar(ElementRef element) const;
    void set_busbar(ElementRef element, std::uint8_t busbar);

    friend bool operator==(const TopologyState&, const TopologyState&) = default;
};

/// Throws GridError when `topology` does not fit `grid`.
void check_topology(const Grid& grid, const TopologyState& topology);

/// Electrical buses induced by a topology: one bus per (substation, busbar)
/// pair with at least one element attached, ordered by (substation, busbar).
struct BusGraph {
    struct Bus {
        int substation = 0;
        int busbar = 1;
    };

    std::vector<Bus> buses;
    std::vector<int> line_from;  // bus index of each line end
    std::vector<int> line_to;
    std::vector<int> gen;
    std::vector<int> load;
    std::vector<int> storage;
    std::vector<int> component;  // component id per bus, via in-service lines only
    int n_components = 0;

    int n_buses() const { return static_cast<int>(buses.size()); }
};

BusGraph effective_buses(const Grid& grid, const TopologyState& topology);

}  // namespace gridmdp
