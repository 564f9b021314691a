#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gridmdp/harness.hpp"
#include "gridmdp/service.hpp"

namespace fs = std::filesystem;
using namespace gridmdp;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// LINE:START:STEPS
MaintenanceSpec parse_maintenance(const std::string& text) {
    MaintenanceSpec m;
    const auto a = text.find(':');
    const auto b = text.find(':', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos)
        throw std::invalid_argument("maintenance must be LINE:START:STEPS, got '" + text + "'");
    m.line_id = text.substr(0, a);
    m.start_step = std::stoi(text.substr(a + 1, b - a - 1));
    m.n_steps = std::stoi(text.substr(b + 1));
    return m;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    if (out.empty()) throw std::invalid_argument("empty value list");
    return out;
}

fs::path scenario_path(const std::string& name, const fs::path& data) {
    if (fs::exists(fs::path(name) / "grid.json") || fs::exists(name)) return name;
    return data / "scenarios" / name;
}

void print_report(const RunReport& r) {
    std::printf("scenario %s  agent %s\n", r.scenario_id.c_str(), r.agent.c_str());
    std::printf("survived %d / %d%s\n", r.survived_steps, r.horizon, r.game_over ? "  (game over)" : "");
    std::printf("costs: losses %.2f  operation %.2f  blackout %.2f  total %.2f\n", r.costs.losses_cost,
                r.costs.operation_cost, r.costs.blackout_cost, r.costs.total);
    std::printf("score %.4f  (%.2f s)\n", r.score, r.wall_seconds);
}

std::optional<ExpertRulesConfig> rules_override(double safe, double margin, bool set_safe, bool set_margin) {
    if (!set_safe && !set_margin) return std::nullopt;
    ExpertRulesConfig rules;
    rules.safe_max_rho = safe;
    rules.limit_cs_margin = margin;
    rules.validate();
    return rules;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grid operation environment, agents and scoring"};
    app.require_subcommand(1);
    const fs::path data = default_data_dir();

    // generate-chronics
    auto* gen = app.add_subcommand("generate-chronics", "Generate a scenario directory");
    std::string gen_grid = (data / "default_grid.json").string(), gen_out, gen_start, gen_config;
    int gen_days = 7;
    std::uint64_t gen_seed = 0;
    std::vector<std::string> gen_maint;
    gen->add_option("--grid", gen_grid, "Grid file")->capture_default_str();
    gen->add_option("--days", gen_days, "Horizon in days")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--start", gen_start, "Start datetime, YYYY-MM-DDTHH:MM");
    gen->add_option("--maintenance", gen_maint, "LINE:START:STEPS, repeatable");
    gen->add_option("--config", gen_config, "Generator config JSON");

    // run
    auto* run = app.add_subcommand("run", "Play one episode and write a report");
    std::string run_agent = "do-nothing", run_scenario, run_report;
    double run_safe = 0.99, run_margin = 60.0;
    run->add_option("--agent", run_agent, "do-nothing | expert | ppo:DIR | mixture:DIR | untrained[:SEED]")
        ->capture_default_str();
    run->add_option("--scenario", run_scenario, "Scenario directory or name under $GRIDMDP_DATA_DIR/scenarios")
        ->required();
    run->add_option("--report", run_report, "Report file");
    auto* run_safe_opt = run->add_option("--safe-max-rho", run_safe, "Override the expert threshold");
    auto* run_margin_opt = run->add_option("--limit-cs-margin", run_margin, "Override the action margin (MW)");

    // train-ppo
    auto* train = app.add_subcommand("train-ppo", "Train the baseline policy");
    std::string train_config, train_out;
    long train_steps = -1;
    std::int64_t train_seed = -1;
    train->add_option("--config", train_config, "Training config JSON")->required();
    train->add_option("--out", train_out, "Agent output directory")->required();
    train->add_option("--steps", train_steps, "Override total_steps");
    train->add_option("--seed", train_seed, "Override seed");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Score the full agent over a range of one expert-rule parameter");
    std::string sweep_param, sweep_values, sweep_agent = "untrained", sweep_scenarios, sweep_out;
    int sweep_stress = 10;
    std::uint64_t sweep_first = 1000;
    sweep->add_option("--param", sweep_param, "safe-max-rho | limit-cs-margin")
        ->required()
        ->check(CLI::IsMember({"safe-max-rho", "limit-cs-margin"}));
    sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
    sweep->add_option("--agent", sweep_agent, "Agent with a policy: ppo:DIR or untrained[:SEED]")
        ->capture_default_str();
    sweep->add_option("--scenarios", sweep_scenarios, "Scenario root (default: generated stress weeks)");
    sweep->add_option("--stress", sweep_stress, "Number of stress weeks when --scenarios is absent")
        ->capture_default_str();
    sweep->add_option("--first-seed", sweep_first, "First stress seed")->capture_default_str();
    sweep->add_option("--out", sweep_out, "Also write the table to this CSV file");

    // score
    auto* score = app.add_subcommand("score", "Leaderboard over saved reports");
    std::string score_dir;
    score->add_option("--reports", score_dir, "Directory of report JSON files")->required();

    // serve
    auto* srv = app.add_subcommand("serve", "HTTP service for interactive episodes");
    int srv_port = 8080;
    std::string srv_host = "127.0.0.1", srv_data = data.string();
    srv->add_option("--port", srv_port, "Port")->capture_default_str();
    srv->add_option("--host", srv_host, "Bind address")->capture_default_str();
    srv->add_option("--data", srv_data, "Data root with scenarios/")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*gen) {
            GenConfig cfg;
            if (!gen_config.empty()) cfg = gen_config_from_json(read_file(gen_config));
            cfg.days = gen_days;
            if (!gen_start.empty()) cfg.start_datetime = gen_start;
            for (const auto& m : gen_maint) cfg.maintenance.push_back(parse_maintenance(m));
            Scenario sc;
            sc.grid = load_grid_file(gen_grid);
            sc.chronics = generate_chronics(sc.grid, cfg, gen_seed);
            save_scenario(sc, gen_out);
            std::printf("wrote %d steps to %s\n", sc.chronics.n_steps, gen_out.c_str());
            return 0;
        }
        if (*run) {
            auto sc = std::make_shared<const Scenario>(load_scenario(scenario_path(run_scenario, data)));
            auto rules = rules_override(run_safe, run_margin, run_safe_opt->count() > 0, run_margin_opt->count() > 0);
            auto agent = make_agent(run_agent, sc->grid, rules);
            const RunReport r = run_episode(*agent, sc);
            print_report(r);
            if (!run_report.empty()) save_report(r, run_report);
            return 0;
        }
        if (*train) {
            const fs::path cfg_path = train_config;
            TrainingSetup setup = training_setup_from_json(nlohmann::json::parse(read_file(cfg_path)),
                                                           cfg_path.has_parent_path() ? cfg_path.parent_path() : ".");
            if (train_steps >= 0) setup.ppo.total_steps = train_steps;
            if (train_seed >= 0) setup.seed = static_cast<std::uint64_t>(train_seed);
            std::printf("training on %zu scenarios, %ld steps, seed %llu\n", setup.scenarios.size(),
                        setup.ppo.total_steps, static_cast<unsigned long long>(setup.seed));
            const TrainResult res = run_training(setup);
            ExpertRulesConfig eval_rules;  // deployed with the evaluation defaults
            save_agent(train_out, res.network, eval_rules, setup.env.cooldown_steps);
            write_training_log(res.log, fs::path(train_out) / "training_log.csv");
            if (!res.log.empty()) {
                const auto& last = res.log.back();
                std::printf("%d updates, %d episodes, mean survived %.1f\n", last.update + 1, last.episodes_finished,
                            last.mean_survived_steps);
            }
            return 0;
        }
        if (*sweep) {
            const SweepParam param = sweep_param_from_string(sweep_param);
            std::vector<std::shared_ptr<const Scenario>> scenarios;
            if (!sweep_scenarios.empty()) {
                scenarios = load_scenario_set(sweep_scenarios);
            } else {
                StressConfig cfg;
                cfg.base.start_datetime = "2022-02-14T00:00";
                scenarios = make_stress_suite(load_grid_file((data / "default_grid.json").string()), cfg,
                                              sweep_first, sweep_stress);
            }
            const auto rows = run_sweep(sweep_agent, param, parse_values(sweep_values), scenarios);
            const std::string table = format_sweep_table(param, rows);
            std::cout << table;
            if (!sweep_out.empty()) {
                std::ofstream out(sweep_out);
                out << table;
            }
            return 0;
        }
        if (*score) {
            std::vector<ScoreEntry> entries;
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(score_dir))
                if (e.path().extension() == ".json") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                const RunReport r = load_report(f);
                entries.push_back({r.agent, r.scenario_id, r.score});
            }
            if (entries.empty()) throw std::runtime_error("no reports in " + score_dir);
            std::printf("%-32s %12s %10s\n", "agent", "mean_score", "scenarios");
            for (const auto& row : leaderboard(entries))
                std::printf("%-32s %12.4f %10d\n", row.agent.c_str(), row.mean_score, row.n_scenarios);
            return 0;
        }
        if (*srv) {
            EpisodeService service(srv_data);
            std::printf("listening on http://%s:%d\n", srv_host.c_str(), srv_port);
            std::fflush(stdout);
            serve(service, srv_host, srv_port);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
