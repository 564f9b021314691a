#include "gridmdp/service.hpp"

#include <algorithm>
#include <regex>
#include <stdexcept>

#include <httplib.h>

#include "gridmdp/io.hpp"

namespace gridmdp {

using json = nlohmann::json;

struct EpisodeService::Episode {
    std::mutex mutex;  // serializes requests on this episode
    std::string id;
    std::string scenario;
    std::unique_ptr<Environment> env;
    std::vector<StepInfo> steps;
    std::vector<StepInfo> do_nothing_steps;
    ScenarioRefs refs;
};

namespace {

Reply error(int status, const std::string& message) { return {status, {{"error", message}}}; }

const json& action_of(const json& body) {
    if (body.is_object() && body.contains("action")) return body["action"];
    return body;
}

}  // namespace

EpisodeService::EpisodeService(std::filesystem::path data_root, EnvConfig env_config, ScoringConfig scoring)
    : data_root_(std::move(data_root)), env_config_(env_config), scoring_(scoring) {
    env_config_.validate();
    scoring_.validate();
}

std::shared_ptr<const Scenario> EpisodeService::scenario(const std::string& name) {
    std::filesystem::path dir = name;
    if (!std::filesystem::exists(dir / "grid.json")) dir = data_root_ / "scenarios" / name;
    if (!std::filesystem::exists(dir / "grid.json")) return nullptr;
    const std::string key = std::filesystem::weakly_canonical(dir).string();
    std::lock_guard lock(mutex_);
    auto& slot = scenarios_[key];
    if (!slot) slot = std::make_shared<const Scenario>(load_scenario(dir));
    return slot;
}

std::shared_ptr<EpisodeService::Episode> EpisodeService::find(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = episodes_.find(id);
    return it == episodes_.end() ? nullptr : it->second;
}

json EpisodeService::state_json(const Episode& ep) const {
    const Environment& env = *ep.env;
    json j = observation_to_json(env.observe(), env.grid());
    const ScoringConfig& sc = scoring_;
    double score = 0.0;
    if (env.done()) {
        score = normalize_score(episode_costs({env.horizon(), ep.steps}, env.grid(), sc).total, ep.refs);
    } else {
        // Anchors restricted to the same prefix of the do-nothing run.
        const std::size_t n = std::min(ep.steps.size(), ep.do_nothing_steps.size());
        const std::vector<StepInfo> dn(ep.do_nothing_steps.begin(), ep.do_nothing_steps.begin() + n);
        const EpisodeCosts dn_cost = prefix_costs(dn, env.grid(), sc);
        ScenarioRefs refs{dn_cost.total, sc.best_fraction * dn_cost.losses_cost, ep.refs.c_worst};
        score = normalize_score(prefix_costs(ep.steps, env.grid(), sc).total, refs);
    }
    j["episode_id"] = ep.id;
    j["scenario"] = ep.scenario;
    j["game_over"] = env.state().game_over;
    j["survived_steps"] = survived_steps(env.state());
    j["score_so_far"] = score;
    return j;
}

Reply EpisodeService::create(const json& body) {
    if (!body.is_object() || !body.contains("scenario") || !body["scenario"].is_string())
        return error(422, "body must be {\"scenario\": NAME}");
    const std::string name = body["scenario"].get<std::string>();
    auto sc = scenario(name);
    if (!sc) return error(404, "unknown scenario '" + name + "'");

    auto ep = std::make_shared<Episode>();
    ep->scenario = name;
    ep->env = std::make_unique<Environment>(sc, env_config_);
    Environment dn(sc, env_config_);
    while (!dn.done()) ep->do_nothing_steps.push_back(dn.step(DoNothing{}).info);
    ep->refs = scenario_refs_from({dn.horizon(), ep->do_nothing_steps}, *sc, scoring_);
    {
        std::lock_guard lock(mutex_);
        ep->id = "ep" + std::to_string(next_id_++);
        episodes_[ep->id] = ep;
    }
    std::lock_guard lock(ep->mutex);
    return {201, {{"episode_id", ep->id}, {"observation", state_json(*ep)}}};
}

Reply EpisodeService::state(const std::string& id) {
    auto ep = find(id);
    if (!ep) return error(404, "unknown episode '" + id + "'");
    std::lock_guard lock(ep->mutex);
    return {200, state_json(*ep)};
}

Reply EpisodeService::step(const std::string& id, const json& body) {
    auto ep = find(id);
    if (!ep) return error(404, "unknown episode '" + id + "'");
    std::lock_guard lock(ep->mutex);
    if (ep->env->done()) return error(409, "episode is finished");
    Action action;
    try {
        action = action_from_json(action_of(body), ep->env->grid(), ep->env->state());
    } catch (const ActionParseError& e) {
        return error(422, e.what());
    }
    const StepResult r = ep->env->step(action);
    ep->steps.push_back(r.info);
    json j = step_result_to_json(r, ep->env->grid());
    j["state"] = state_json(*ep);
    return {200, j};
}

Reply EpisodeService::simulate(const std::string& id, const json& body) {
    auto ep = find(id);
    if (!ep) return error(404, "unknown episode '" + id + "'");
    std::lock_guard lock(ep->mutex);
    if (ep->env->done()) return error(409, "episode is finished");
    Action action;
    try {
        action = action_from_json(action_of(body), ep->env->grid(), ep->env->state());
    } catch (const ActionParseError& e) {
        return error(422, e.what());
    }
    return {200, step_result_to_json(ep->env->simulate(action), ep->env->grid())};
}

Reply EpisodeService::suggest(const std::string& id, const json& body) {
    auto ep = find(id);
    if (!ep) return error(404, "unknown episode '" + id + "'");
    if (!body.is_object() || !body.contains("agent") || !body["agent"].is_string())
        return error(422, "body must be {\"agent\": SPEC}");
    std::lock_guard lock(ep->mutex);
    if (ep->env->done()) return error(409, "episode is finished");
    std::unique_ptr<Agent> agent;
    try {
        agent = make_agent(body["agent"].get<std::string>(), ep->env->grid(), std::nullopt,
                           env_config_.cooldown_steps);
    } catch (const std::exception& e) {
        return error(422, e.what());
    }
    const Action a = agent->act(ep->env->observe(), *ep->env);
    return {200, {{"agent", agent->name()}, {"action", action_to_json(a, ep->env->grid())}}};
}

Reply EpisodeService::remove(const std::string& id) {
    std::lock_guard lock(mutex_);
    if (episodes_.erase(id) == 0) return error(404, "unknown episode '" + id + "'");
    return {200, {{"deleted", id}}};
}

Reply EpisodeService::handle(const std::string& method, const std::string& path, const std::string& body) {
    static const std::regex collection(R"(^/episodes/?$)");
    static const std::regex item(R"(^/episodes/([^/]+)/?$)");
    static const std::regex verb(R"(^/episodes/([^/]+)/(step|simulate|agent-suggest)/?$)");

    json doc;
    if (method == "POST") {
        try {
            doc = body.empty() ? json::object() : json::parse(body);
        } catch (const json::parse_error& e) {
            return error(422, std::string("malformed JSON: ") + e.what());
        }
    }
    std::smatch m;
    try {
        if (std::regex_match(path, collection)) {
            if (method == "POST") return create(doc);
            return error(405, "method not allowed");
        }
        if (std::regex_match(path, m, item)) {
            if (method == "GET") return state(m[1]);
            if (method == "DELETE") return remove(m[1]);
            return error(405, "method not allowed");
        }
        if (std::regex_match(path, m, verb)) {
            if (method != "POST") return error(405, "method not allowed");
            if (m[2] == "step") return step(m[1], doc);
            if (m[2] == "simulate") return simulate(m[1], doc);
            return suggest(m[1], doc);
        }
    } catch (const std::exception& e) {
        return error(500, e.what());
    }
    return error(404, "no route for " + path);
}

void bind_routes(httplib::Server& server, EpisodeService& service) {
    auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
        const Reply r = service.handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    server.Get(".*", bridge);
    server.Post(".*", bridge);
    server.Delete(".*", bridge);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
}

void serve(EpisodeService& service, const std::string& host, int port) {
    httplib::Server server;
    bind_routes(server, service);
    if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace gridmdp
