#include "gridmdp/chronics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace gridmdp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Days since 1970-01-01 for a proleptic Gregorian date.
long days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

void civil_from_days(long z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

long start_minutes(const std::string& datetime) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    if (std::sscanf(datetime.c_str(), "%d-%d-%dT%d:%d", &y, &mo, &d, &h, &mi) != 5 || mo < 1 || mo > 12 || d < 1 ||
        d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59) {
        throw ChronicsError("bad start datetime '" + datetime + "' (expected YYYY-MM-DDTHH:MM)");
    }
    return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 1440L + h * 60L + mi;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ChronicsError("malformed number '" + std::string(text) + "' in " + where);
    return v;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<std::string> read_lines(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ChronicsError("cannot open " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

void write_table(const fs::path& file, const std::vector<std::string>& ids, const Table& table) {
    std::ofstream out(file);
    if (!out) throw ChronicsError("cannot write " + file.string());
    for (std::size_t c = 0; c < ids.size(); ++c) out << (c ? "," : "") << ids[c];
    out << '\n';
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
        for (Eigen::Index c = 0; c < table.cols(); ++c) out << (c ? "," : "") << format_double(table(r, c));
        out << '\n';
    }
}

Table read_table(const fs::path& file, const std::vector<std::string>& ids, const char* element_kind) {
    auto lines = read_lines(file);
    const std::string where = file.filename().string();
    if (lines.empty()) throw ChronicsError(where + " is empty");
    auto header = split(lines[0]);
    if (ids.empty() && header.size() == 1 && header[0].empty()) {
        return Table(static_cast<Eigen::Index>(lines.size() - 1), 0);
    }
    std::vector<int> column_of(ids.size(), -1);
    for (std::size_t c = 0; c < header.size(); ++c) {
        auto it = std::find(ids.begin(), ids.end(), header[c]);
        if (it == ids.end())
            throw ChronicsError(where + ": column '" + std::string(header[c]) + "' matches no " + element_kind);
        if (column_of[it - ids.begin()] >= 0) throw ChronicsError(where + ": duplicate column '" + *it + "'");
        column_of[it - ids.begin()] = static_cast<int>(c);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (column_of[i] < 0) throw ChronicsError(where + ": missing column for " + element_kind + " '" + ids[i] + "'");
    }
    Table table(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto cells = split(lines[r]);
        if (cells.size() != header.size())
            throw ChronicsError(where + ": row " + std::to_string(r) + " has " + std::to_string(cells.size()) +
                                " fields, expected " + std::to_string(header.size()));
        for (std::size_t i = 0; i < ids.size(); ++i)
            table(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(i)) = parse_double(cells[column_of[i]], where);
    }
    return table;
}

template <typename T>
std::vector<std::string> ids_of(const std::vector<T>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) out.push_back(item.id);
    return out;
}

std::vector<std::string> renewable_ids(const Grid& grid) {
    std::vector<std::string> out;
    for (int g : grid.renewable_generators()) out.push_back(grid.generators()[g].id);
    return out;
}

double daily_shape(double hour) {
    auto bump = [](double h, double centre, double width) {
        const double z = (h - centre) / width;
        return std::exp(-z * z);
    };
    return 0.72 + 0.18 * bump(hour, 9.0, 2.5) + 0.28 * bump(hour, 19.5, 2.2) - 0.10 * bump(hour, 4.0, 2.5);
}

double weekly_factor(const GenConfig& cfg, int weekday) {
    if (weekday == 5) return cfg.saturday_factor;
    if (weekday == 6) return cfg.sunday_factor;
    return 1.0;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id)};
    return std::mt19937_64(seq);
}

}  // namespace

bool Chronics::in_maintenance(int line, int step) const {
    return std::any_of(maintenance.begin(), maintenance.end(),
                       [&](const MaintenanceWindow& w) { return w.line == line && w.covers(step); });
}

bool operator==(const Chronics& a, const Chronics& b) {
    return a.n_steps == b.n_steps && a.load_p == b.load_p && a.renewable_potential == b.renewable_potential &&
           a.dispatch_p == b.dispatch_p && a.maintenance == b.maintenance && a.meta == b.meta;
}

StepClock clock_at(const ChronicsMeta& meta, int step) {
    const long minutes = start_minutes(meta.start_datetime) + static_cast<long>(step) * meta.step_minutes;
    const long day = minutes >= 0 ? minutes / 1440 : (minutes - 1439) / 1440;
    StepClock clk;
    clk.minute_of_day = static_cast<int>(minutes - day * 1440);
    int y = 0;
    unsigned m = 0, d = 0;
    civil_from_days(day, y, m, d);
    clk.day_of_year = static_cast<int>(day - days_from_civil(y, 1, 1));
    clk.days_in_year = leap(y) ? 366 : 365;
    clk.weekday = static_cast<int>(((day % 7) + 7 + 3) % 7);  // 1970-01-01 was a Thursday
    return clk;
}

bool GenConfig::is_night(double hour) const {
    if (night_start_hour > night_end_hour) return hour >= night_start_hour || hour < night_end_hour;
    return hour >= night_start_hour && hour < night_end_hour;
}

GenConfig gen_config_from_json(const std::string& text) {
    GenConfig cfg;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ChronicsError(std::string("chronics config is not valid JSON: ") + e.what());
    }
    auto get = [&](const char* key, auto& target) {
        if (auto it = doc.find(key); it != doc.end()) {
            try {
                it->get_to(target);
            } catch (const json::exception&) {
                throw ChronicsError(std::string("chronics config: bad value for '") + key + "'");
            }
        }
    };
    get("days", cfg.days);
    get("start_datetime", cfg.start_datetime);
    get("peak_load_mw", cfg.peak_load_mw);
    get("seasonal_amplitude", cfg.seasonal_amplitude);
    get("saturday_factor", cfg.saturday_factor);
    get("sunday_factor", cfg.sunday_factor);
    get("load_noise_phi", cfg.load_noise_phi);
    get("load_noise_sigma", cfg.load_noise_sigma);
    get("night_start_hour", cfg.night_start_hour);
    get("night_end_hour", cfg.night_end_hour);
    get("cloud_floor", cfg.cloud_floor);
    get("cloud_phi", cfg.cloud_phi);
    get("cloud_sigma", cfg.cloud_sigma);
    get("wind_mean", cfg.wind_mean);
    get("wind_std", cfg.wind_std);
    get("wind_correlation_hours", cfg.wind_correlation_hours);
    if (auto it = doc.find("maintenance"); it != doc.end()) {
        for (const auto& m : *it) {
            cfg.maintenance.push_back({m.at("line_id").get<std::string>(), m.at("start_step").get<int>(),
                                       m.at("n_steps").get<int>()});
        }
    }
    return cfg;
}

std::string gen_config_to_json(const GenConfig& cfg) {
    json doc = {{"days", cfg.days},
                {"start_datetime", cfg.start_datetime},
                {"peak_load_mw", cfg.peak_load_mw},
                {"seasonal_amplitude", cfg.seasonal_amplitude},
                {"saturday_factor", cfg.saturday_factor},
                {"sunday_factor", cfg.sunday_factor},
                {"load_noise_phi", cfg.load_noise_phi},
                {"load_noise_sigma", cfg.load_noise_sigma},
                {"night_start_hour", cfg.night_start_hour},
                {"night_end_hour", cfg.night_end_hour},
                {"cloud_floor", cfg.cloud_floor},
                {"cloud_phi", cfg.cloud_phi},
                {"cloud_sigma", cfg.cloud_sigma},
                {"wind_mean", cfg.wind_mean},
                {"wind_std", cfg.wind_std},
                {"wind_correlation_hours", cfg.wind_correlation_hours}};
    doc["maintenance"] = json::array();
    for (const auto& m : cfg.maintenance)
        doc["maintenance"].push_back({{"line_id", m.line_id}, {"start_step", m.start_step}, {"n_steps", m.n_steps}});
    return doc.dump(2);
}

Chronics generate_chronics(const Grid& grid, const GenConfig& cfg, std::uint64_t seed) {
    if (cfg.days <= 0) throw ChronicsError("horizon must be at least one day");
    if (!(cfg.night_start_hour > cfg.night_end_hour))
        throw ChronicsError("night window must wrap midnight (night_start_hour > night_end_hour)");

    Chronics ch;
    ch.n_steps = cfg.n_steps();
    ch.meta.seed = seed;
    ch.meta.start_datetime = cfg.start_datetime;
    const int n = ch.n_steps;
    const int n_load = grid.n_loads();
    const auto& ren = grid.renewable_generators();
    const int n_ren = static_cast<int>(ren.size());
    ch.load_p = Table::Zero(n, n_load);
    ch.renewable_potential = Table::Zero(n, n_ren);
    ch.dispatch_p = Table::Zero(n, grid.n_generators());

    for (const auto& m : cfg.maintenance) {
        const int line = grid.line_index(m.line_id);
        if (line < 0) throw ChronicsError("maintenance references unknown line '" + m.line_id + "'");
        if (m.start_step < 0 || m.n_steps <= 0) throw ChronicsError("maintenance window for '" + m.line_id + "' is empty");
        ch.maintenance.push_back({line, m.start_step, m.n_steps});
    }

    // (1) load curves
    double weight_sum = 0.0;
    for (const auto& d : grid.loads()) weight_sum += d.weight;
    {
        auto rng = stream(seed, 1);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double stationary = cfg.load_noise_sigma / std::sqrt(1.0 - cfg.load_noise_phi * cfg.load_noise_phi);
        std::vector<double> noise(static_cast<std::size_t>(n_load));
        for (auto& x : noise) x = stationary * normal(rng);
        for (int t = 0; t < n; ++t) {
            const StepClock clk = clock_at(ch.meta, t);
            const double hour = clk.minute_of_day / 60.0;
            const double seasonal =
                1.0 + cfg.seasonal_amplitude * std::cos(2.0 * kPi * (clk.day_of_year - 20.0) / clk.days_in_year);
            const double system = cfg.peak_load_mw * seasonal * weekly_factor(cfg, clk.weekday) * daily_shape(hour);
            for (int d = 0; d < n_load; ++d) {
                if (t > 0) noise[d] = cfg.load_noise_phi * noise[d] + cfg.load_noise_sigma * normal(rng);
                const double share = weight_sum > 0.0 ? grid.loads()[d].weight / weight_sum : 0.0;
                ch.load_p(t, d) = std::max(0.0, system * share * (1.0 + noise[d]));
            }
        }
    }

    // (2) solar, (3) wind
    {
        auto rng = stream(seed, 2);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double day_length = cfg.night_start_hour - cfg.night_end_hour;
        const double wind_phi = std::exp(-kStepHours / cfg.wind_correlation_hours);
        const double wind_innovation = cfg.wind_std * std::sqrt(1.0 - wind_phi * wind_phi);
        const double cloud_stationary = cfg.cloud_sigma / std::sqrt(1.0 - cfg.cloud_phi * cfg.cloud_phi);
        for (int r = 0; r < n_ren; ++r) {
            const Generator& gen = grid.generators()[ren[r]];
            if (gen.type == GenType::Solar) {
                double z = cloud_stationary * normal(rng);
                for (int t = 0; t < n; ++t) {
                    if (t > 0) z = cfg.cloud_phi * z + cfg.cloud_sigma * normal(rng);
                    const double hour = clock_at(ch.meta, t).minute_of_day / 60.0;
                    if (cfg.is_night(hour)) continue;
                    const double bell = std::sin(kPi * (hour - cfg.night_end_hour) / day_length);
                    const double cloud = cfg.cloud_floor + (1.0 - cfg.cloud_floor) / (1.0 + std::exp(-z));
                    ch.renewable_potential(t, r) = gen.p_max * std::clamp(bell, 0.0, 1.0) * cloud;
                }
            } else {
                double x = cfg.wind_mean + cfg.wind_std * normal(rng);
                for (int t = 0; t < n; ++t) {
                    if (t > 0) x = cfg.wind_mean + wind_phi * (x - cfg.wind_mean) + wind_innovation * normal(rng);
                    ch.renewable_potential(t, r) = gen.p_max * std::clamp(x, 0.0, 1.0);
                }
            }
        }
    }

    // (4) merit-order dispatch, (5) proportional curtailment on oversupply
    std::vector<int> merit = grid.dispatchable_generators();
    std::stable_sort(merit.begin(), merit.end(), [&](int a, int b) {
        return grid.generators()[a].marginal_cost < grid.generators()[b].marginal_cost;
    });
    for (int t = 0; t < n; ++t) {
        double demand = 0.0;
        for (int d = 0; d < n_load; ++d) demand += ch.load_p(t, d);
        double potential = 0.0;
        for (int r = 0; r < n_ren; ++r) potential += ch.renewable_potential(t, r);

        double lo_sum = 0.0, hi_sum = 0.0;
        std::vector<double> lo(merit.size()), hi(merit.size());
        for (std::size_t k = 0; k < merit.size(); ++k) {
            const Generator& g = grid.generators()[merit[k]];
            lo[k] = g.p_min;
            hi[k] = g.p_max;
            if (t > 0) {
                const double prev = ch.dispatch_p(t - 1, merit[k]);
                lo[k] = std::max(lo[k], prev - g.ramp_mw_per_step);
                hi[k] = std::min(hi[k], prev + g.ramp_mw_per_step);
            }
            lo_sum += lo[k];
            hi_sum += hi[k];
        }

        const double residual = demand - potential;
        if (residual > hi_sum + 1e-9) {
            throw InfeasibleDispatch(t, "demand " + format_double(demand) + " MW exceeds available generation");
        }
        if (residual >= lo_sum) {
            double need = residual - lo_sum;
            for (std::size_t k = 0; k < merit.size(); ++k) {
                const double add = std::min(hi[k] - lo[k], need);
                ch.dispatch_p(t, merit[k]) = lo[k] + add;
                need -= add;
            }
            for (int r = 0; r < n_ren; ++r) ch.dispatch_p(t, ren[r]) = ch.renewable_potential(t, r);
        } else {
            const double budget = demand - lo_sum;
            if (budget < -1e-9)
                throw InfeasibleDispatch(t, "minimum dispatchable output exceeds demand " + format_double(demand) + " MW");
            for (std::size_t k = 0; k < merit.size(); ++k) ch.dispatch_p(t, merit[k]) = lo[k];
            const double ratio = std::max(0.0, budget) / potential;
            for (int r = 0; r < n_ren; ++r) ch.dispatch_p(t, ren[r]) = ch.renewable_potential(t, r) * ratio;
        }
    }
    return ch;
}

MixReport energy_mix(const Chronics& chronics, const Grid& grid) {
    MixReport report;
    std::array<double, kGenTypeCount> energy{};
    for (int g = 0; g < grid.n_generators(); ++g) {
        energy[static_cast<int>(grid.generators()[g].type)] += chronics.dispatch_p.col(g).sum();
    }
    report.total_mwh = std::accumulate(energy.begin(), energy.end(), 0.0);
    if (!(report.total_mwh > 0.0)) throw ChronicsError("energy mix undefined: no generation in chronics");
    for (int k = 0; k < kGenTypeCount; ++k) report.share[k] = energy[k] / report.total_mwh;
    report.total_mwh *= kStepHours;
    return report;
}

void save_chronics(const Chronics& ch, const Grid& grid, const fs::path& dir) {
    fs::create_directories(dir);
    write_table(dir / "load_p.csv", ids_of(grid.loads()), ch.load_p);
    write_table(dir / "renewable_potential.csv", renewable_ids(grid), ch.renewable_potential);
    write_table(dir / "dispatch_p.csv", ids_of(grid.generators()), ch.dispatch_p);
    {
        std::ofstream out(dir / "maintenance.csv");
        if (!out) throw ChronicsError("cannot write maintenance.csv");
        out << "line_id,start_step,n_steps\n";
        for (const auto& w : ch.maintenance)
            out << grid.lines()[w.line].id << ',' << w.start_step << ',' << w.n_steps << '\n';
    }
    json meta = {{"seed", ch.meta.seed},
                 {"start_datetime", ch.meta.start_datetime},
                 {"step_minutes", ch.meta.step_minutes},
                 {"n_steps", ch.n_steps}};
    std::ofstream out(dir / "meta.json");
    if (!out) throw ChronicsError("cannot write meta.json");
    out << meta.dump(2) << '\n';
}

Chronics load_chronics(const fs::path& dir, const Grid& grid) {
    if (!fs::is_directory(dir)) throw ChronicsError("scenario directory not found: " + dir.string());
    for (const char* name : {"load_p.csv", "renewable_potential.csv", "dispatch_p.csv", "meta.json"}) {
        if (!fs::exists(dir / name)) throw ChronicsError("not found: " + (dir / name).string());
    }
    Chronics ch;
    ch.load_p = read_table(dir / "load_p.csv", ids_of(grid.loads()), "load");
    ch.renewable_potential = read_table(dir / "renewable_potential.csv", renewable_ids(grid), "renewable generator");
    ch.dispatch_p = read_table(dir / "dispatch_p.csv", ids_of(grid.generators()), "generator");
    ch.n_steps = static_cast<int>(ch.load_p.rows());
    if (ch.renewable_potential.rows() != ch.n_steps || ch.dispatch_p.rows() != ch.n_steps)
        throw ChronicsError("chronics files disagree on the number of steps");

    if (fs::exists(dir / "maintenance.csv")) {
        auto lines = read_lines(dir / "maintenance.csv");
        for (std::size_t r = 1; r < lines.size(); ++r) {
            auto cells = split(lines[r]);
            if (cells.size() != 3) throw ChronicsError("maintenance.csv: malformed row " + std::to_string(r));
            const int line = grid.line_index(cells[0]);
            if (line < 0) throw ChronicsError("maintenance.csv: unknown line '" + std::string(cells[0]) + "'");
            ch.maintenance.push_back({line, static_cast<int>(parse_double(cells[1], "maintenance.csv")),
                                      static_cast<int>(parse_double(cells[2], "maintenance.csv"))});
        }
    }

    std::ifstream in(dir / "meta.json");
    json meta;
    try {
        meta = json::parse(in);
        ch.meta.seed = meta.at("seed").get<std::uint64_t>();
        ch.meta.start_datetime = meta.at("start_datetime").get<std::string>();
        ch.meta.step_minutes = meta.value("step_minutes", kStepMinutes);
    } catch (const json::exception& e) {
        throw ChronicsError(std::string("meta.json: ") + e.what());
    }
    if (ch.meta.step_minutes != kStepMinutes) throw ChronicsError("meta.json: only 5-minute steps are supported");
    if (meta.contains("n_steps") && meta["n_steps"].get<int>() != ch.n_steps)
        throw ChronicsError("meta.json: n_steps disagrees with CSV row count");
    start_minutes(ch.meta.start_datetime);  // validates the format
    return ch;
}

Scenario load_scenario(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ChronicsError("scenario directory not found: " + dir.string());
    if (!fs::exists(dir / "grid.json")) throw ChronicsError("not found: " + (dir / "grid.json").string());
    Scenario sc{fs::absolute(dir).lexically_normal().filename().string(), load_grid_file((dir / "grid.json").string()),
                Chronics{}};
    if (sc.id.empty()) sc.id = fs::absolute(dir).lexically_normal().parent_path().filename().string();
    sc.chronics = load_chronics(dir, sc.grid);
    return sc;
}

void save_scenario(const Scenario& scenario, const fs::path& dir) {
    fs::create_directories(dir);
    save_grid_file(scenario.grid, (dir / "grid.json").string());
    save_chronics(scenario.chronics, scenario.grid, dir);
}

std::vector<fs::path> list_scenarios(const fs::path& root) {
    std::vector<fs::path> out;
    if (!fs::is_directory(root)) return out;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "grid.json")) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace gridmdp
