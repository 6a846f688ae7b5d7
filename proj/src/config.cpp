#include "hypomc/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "hypomc/zoo.hpp"

namespace hypomc::io {

namespace {

Vec parse_vec(const json& j, const std::string& field, int expected = -1) {
    if (!j.is_array()) throw ConfigError(field, "expected an array of numbers");
    Vec v(static_cast<int>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(field, "entries must be numbers");
        v[static_cast<int>(i)] = j[i].get<double>();
    }
    if (expected >= 0 && v.size() != expected)
        throw ConfigError(field, "length " + std::to_string(v.size()) +
                                     " does not match model dimension " +
                                     std::to_string(expected));
    return v;
}

Domain parse_domain(const json& j, const std::string& field, int n) {
    if (j.contains("box")) {
        const json& b = j.at("box");
        Box box;
        box.center = parse_vec(b.at("center"), field + ".box.center", n);
        box.radii = parse_vec(b.at("radii"), field + ".box.radii", n);
        if ((box.radii.array() <= 0.0).any())
            throw ConfigError(field + ".box.radii", "radii must be positive");
        return box;
    }
    if (j.contains("ball")) {
        const json& b = j.at("ball");
        Ball ball;
        ball.center = parse_vec(b.at("center"), field + ".ball.center", n);
        ball.radius = b.at("radius").get<double>();
        if (!(ball.radius > 0.0))
            throw ConfigError(field + ".ball.radius", "radius must be positive");
        return ball;
    }
    throw ConfigError(field, "expected a 'box' or 'ball' geometry");
}

json domain_to_json(const Domain& d) {
    json out;
    if (std::holds_alternative<Box>(d)) {
        const Box& b = std::get<Box>(d);
        out["box"]["center"] = std::vector<double>(b.center.data(), b.center.data() + b.center.size());
        out["box"]["radii"] = std::vector<double>(b.radii.data(), b.radii.data() + b.radii.size());
    } else {
        const Ball& b = std::get<Ball>(d);
        out["ball"]["center"] = std::vector<double>(b.center.data(), b.center.data() + b.center.size());
        out["ball"]["radius"] = b.radius;
    }
    return out;
}

EstimatorKind parse_kind(const std::string& s, const std::string& field) {
    if (s == "semigroup_control") return EstimatorKind::semigroup_control;
    if (s == "harmonic_control") return EstimatorKind::harmonic_control;
    if (s == "semigroup_covariance") return EstimatorKind::semigroup_covariance;
    if (s == "general_semigroup") return EstimatorKind::general_semigroup;
    if (s == "general_harmonic") return EstimatorKind::general_harmonic;
    if (s == "fd_oracle") return EstimatorKind::fd_oracle;
    if (s == "asian_closed") return EstimatorKind::asian_closed;
    if (s == "asian_general") return EstimatorKind::asian_general;
    throw ConfigError(field, "unknown estimator kind '" + s + "'");
}

}  // namespace

const char* to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::semigroup_control: return "semigroup_control";
        case EstimatorKind::harmonic_control: return "harmonic_control";
        case EstimatorKind::semigroup_covariance: return "semigroup_covariance";
        case EstimatorKind::general_semigroup: return "general_semigroup";
        case EstimatorKind::general_harmonic: return "general_harmonic";
        case EstimatorKind::fd_oracle: return "fd_oracle";
        case EstimatorKind::asian_closed: return "asian_closed";
        case EstimatorKind::asian_general: return "asian_general";
    }
    return "?";
}

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig cfg;
    if (!doc.is_object()) throw ConfigError("$", "config must be a JSON object");

    // --- model
    if (!doc.contains("model")) throw ConfigError("model", "required");
    const json& jm = doc.at("model");
    Vec zoo_x0;
    double zoo_t = 1.0;
    if (jm.contains("zoo")) {
        std::map<std::string, double> params;
        if (jm.contains("params")) {
            for (auto& [key, val] : jm.at("params").items()) {
                if (!val.is_number())
                    throw ConfigError("model.params." + key, "must be a number");
                params[key] = val.get<double>();
            }
        }
        try {
            zoo::ZooEntry entry = zoo::get_model(jm.at("zoo").get<std::string>(), params);
            cfg.model = std::move(entry.model);
            zoo_x0 = entry.x0;
            zoo_t = entry.t;
        } catch (const std::invalid_argument& e) {
            throw ConfigError("model.zoo", e.what());
        }
    } else if (jm.contains("inline")) {
        const json& ji = jm.at("inline");
        const int n = ji.at("n").get<int>();
        const int r = ji.at("r").get<int>();
        std::vector<std::string> drift;
        for (const auto& s : ji.at("drift")) drift.push_back(s.get<std::string>());
        std::vector<std::vector<std::string>> diffusion;
        for (const auto& fld : ji.at("diffusion")) {
            std::vector<std::string> comps;
            for (const auto& s : fld) comps.push_back(s.get<std::string>());
            diffusion.push_back(std::move(comps));
        }
        try {
            cfg.model = make_model(ji.value("name", std::string("inline")), n, r, drift,
                                   diffusion);
        } catch (const dsl::ParseError& e) {
            throw ConfigError("model.inline", std::string(e.what()) + " (position " +
                                                  std::to_string(e.pos) + ")");
        } catch (const std::invalid_argument& e) {
            throw ConfigError("model.inline", e.what());
        }
        zoo_x0 = Vec::Zero(n);
    } else {
        throw ConfigError("model", "expected 'zoo' or 'inline'");
    }
    const int n = cfg.model.n;

    // --- points and direction
    cfg.x0 = doc.contains("x0") ? parse_vec(doc.at("x0"), "x0", n) : zoo_x0;
    if (cfg.x0.size() != n)
        throw ConfigError("x0", "length does not match model dimension");
    cfg.v = doc.contains("v") ? parse_vec(doc.at("v"), "v", n) : Vec::Unit(n, 0);

    // --- grid
    double t = zoo_t;
    int m = 256;
    if (doc.contains("grid")) {
        const json& jg = doc.at("grid");
        t = jg.value("t", t);
        m = jg.value("m", m);
    }
    if (!(t > 0.0)) throw ConfigError("grid.t", "must be positive");
    if (m < 1) throw ConfigError("grid.m", "must be at least 1");
    cfg.grid = TimeGrid(t, m);

    // --- payoff
    cfg.payoff_src = doc.value("payoff", std::string("x1"));
    try {
        (void)dsl::parse_field_expr(cfg.payoff_src, n);
    } catch (const dsl::ParseError& e) {
        throw ConfigError("payoff", std::string(e.what()) + " (position " +
                                        std::to_string(e.pos) + ")");
    }

    // --- stopping rule
    cfg.rule = StoppingRule::cap();
    if (doc.contains("stopping")) {
        const json& js = doc.at("stopping");
        const std::string mode = js.value("mode", std::string("exit_and_cap"));
        if (mode == "cap_only") cfg.rule.mode = StopMode::cap_only;
        else if (mode == "exit_only") cfg.rule.mode = StopMode::exit_only;
        else if (mode == "exit_and_cap") cfg.rule.mode = StopMode::exit_and_cap;
        else throw ConfigError("stopping.mode", "unknown mode '" + mode + "'");
        if (js.contains("box") || js.contains("ball"))
            cfg.rule.domain = parse_domain(js, "stopping", n);
        try {
            cfg.rule.validate(n);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("stopping", e.what());
        }
    }

    // --- estimator
    if (doc.contains("estimator")) {
        const json& je = doc.at("estimator");
        cfg.kind = parse_kind(je.value("kind", std::string("semigroup_control")),
                              "estimator.kind");
        if (je.contains("strategy")) {
            const json& jst = je.at("strategy");
            const std::string sk = jst.value("kind", std::string("elliptic"));
            if (sk == "elliptic") {
                cfg.control.strategy = ControlStrategy::elliptic;
                const std::string prof = jst.value("profile", std::string("smooth"));
                cfg.control.elliptic.profile = prof == "linear"
                                                   ? EllipticSpec::Profile::linear
                                                   : EllipticSpec::Profile::smooth;
                if (jst.contains("clock_budget"))
                    cfg.control.elliptic.clock_budget = jst.at("clock_budget").get<double>();
            } else if (sk == "bangbang") {
                cfg.control.strategy = ControlStrategy::bangbang;
                cfg.control.bangbang.alpha = jst.value("alpha", 0.25);
                cfg.control.bangbang.hysteresis = jst.value("hysteresis", 0.5);
                cfg.control.bangbang.eps_h_rel = jst.value("eps_h_rel", 1e-8);
                if (jst.contains("horizon_nodes"))
                    cfg.control.bangbang.max_horizon_node = jst.at("horizon_nodes").get<int>();
                if (!(cfg.control.bangbang.alpha > 0.0 && cfg.control.bangbang.alpha < 1.0))
                    throw ConfigError("estimator.strategy.alpha", "must lie in (0,1)");
            } else if (sk == "barrier") {
                cfg.control.strategy = ControlStrategy::barrier;
                if (jst.contains("box") || jst.contains("ball"))
                    cfg.control.barrier.state_domain =
                        parse_domain(jst, "estimator.strategy", n);
                if (jst.contains("driver_ball_radius")) {
                    Ball b;
                    b.center = Vec::Zero(cfg.model.r);
                    b.radius = jst.at("driver_ball_radius").get<double>();
                    cfg.control.barrier.driver_ball = b;
                }
            } else {
                throw ConfigError("estimator.strategy.kind", "unknown strategy '" + sk + "'");
            }
        }
        if (je.contains("clock")) {
            const json& jc = je.at("clock");
            cfg.clock.t0 = jc.value("t0", cfg.grid.t);
            cfg.clock.tan_cap = jc.value("tan_cap", false);
            if (jc.contains("box") || jc.contains("ball"))
                cfg.clock.domain = parse_domain(jc, "estimator.clock", n);
            if (!(cfg.clock.t0 > 0.0))
                throw ConfigError("estimator.clock.t0", "must be positive");
        } else {
            cfg.clock.t0 = cfg.grid.t;
        }
        cfg.perturb.delta = je.value("delta", 1e-3);
        cfg.perturb.skip_correction = je.value("skip_correction", false);
        if (!(cfg.perturb.delta > 0.0))
            throw ConfigError("estimator.delta", "must be positive");
        cfg.fd_eps = je.value("eps", 1e-2);
        if (!(cfg.fd_eps > 0.0)) throw ConfigError("estimator.eps", "must be positive");
        if (je.contains("asian")) {
            const json& ja = je.at("asian");
            cfg.asian.sigma_src = ja.value("sigma", std::string("0.3"));
            cfg.asian.mu_src = ja.value("mu", std::string("0"));
            cfg.asian.s0 = ja.value("s0", 1.0);
            cfg.asian.payoff_src = ja.value("payoff", cfg.payoff_src);
        }
    } else {
        cfg.clock.t0 = cfg.grid.t;
    }
    cfg.asian.method = cfg.kind == EstimatorKind::asian_general ? AsianMethod::general
                                                                : AsianMethod::closed_weight;

    if ((cfg.kind == EstimatorKind::harmonic_control ||
         cfg.kind == EstimatorKind::general_harmonic) &&
        !cfg.rule.domain)
        throw ConfigError("stopping", "harmonic estimators need a domain");

    // --- run parameters
    cfg.paths = doc.value("paths", static_cast<std::int64_t>(1000));
    if (cfg.paths < 1) throw ConfigError("paths", "must be at least 1");
    cfg.seed = doc.value("seed", static_cast<std::uint64_t>(1));
    cfg.workers = doc.value("workers", 1);
    if (doc.contains("output"))
        cfg.per_path_csv = doc.at("output").value("per_path_csv", false);

    const json canon = canonical_json(cfg);
    cfg.canonical = canon.dump(2);
    cfg.config_hash = fnv1a64_hex(canon.dump());
    return cfg;
}

json canonical_json(const ExperimentConfig& cfg) {
    json out;
    json jm;
    jm["inline"]["name"] = cfg.model.name;
    jm["inline"]["n"] = cfg.model.n;
    jm["inline"]["r"] = cfg.model.r;
    {
        std::vector<std::string> drift;
        for (const auto& e : cfg.model.drift) drift.push_back(e.to_string());
        jm["inline"]["drift"] = drift;
        std::vector<std::vector<std::string>> diffusion;
        for (const auto& f : cfg.model.diffusion) {
            std::vector<std::string> comps;
            for (const auto& e : f) comps.push_back(e.to_string());
            diffusion.push_back(std::move(comps));
        }
        jm["inline"]["diffusion"] = diffusion;
    }
    out["model"] = jm;
    out["x0"] = std::vector<double>(cfg.x0.data(), cfg.x0.data() + cfg.x0.size());
    out["v"] = std::vector<double>(cfg.v.data(), cfg.v.data() + cfg.v.size());
    out["payoff"] = cfg.payoff_src;
    out["grid"]["t"] = cfg.grid.t;
    out["grid"]["m"] = cfg.grid.m;
    if (cfg.rule.domain) {
        out["stopping"] = domain_to_json(*cfg.rule.domain);
        out["stopping"]["mode"] = cfg.rule.mode == StopMode::cap_only ? "cap_only"
                                  : cfg.rule.mode == StopMode::exit_only ? "exit_only"
                                                                         : "exit_and_cap";
    }
    json je;
    je["kind"] = to_string(cfg.kind);
    json jst;
    jst["kind"] = to_string(cfg.control.strategy);
    if (cfg.control.strategy == ControlStrategy::elliptic) {
        jst["profile"] =
            cfg.control.elliptic.profile == EllipticSpec::Profile::linear ? "linear" : "smooth";
        if (cfg.control.elliptic.clock_budget > 0.0)
            jst["clock_budget"] = cfg.control.elliptic.clock_budget;
    }
    if (cfg.control.strategy == ControlStrategy::bangbang) {
        jst["alpha"] = cfg.control.bangbang.alpha;
        jst["hysteresis"] = cfg.control.bangbang.hysteresis;
        jst["eps_h_rel"] = cfg.control.bangbang.eps_h_rel;
        if (cfg.control.bangbang.max_horizon_node >= 0)
            jst["horizon_nodes"] = cfg.control.bangbang.max_horizon_node;
    }
    if (cfg.control.strategy == ControlStrategy::barrier) {
        if (cfg.control.barrier.state_domain)
            jst.update(domain_to_json(*cfg.control.barrier.state_domain));
        if (cfg.control.barrier.driver_ball)
            jst["driver_ball_radius"] = cfg.control.barrier.driver_ball->radius;
    }
    je["strategy"] = jst;
    je["clock"]["t0"] = cfg.clock.t0;
    je["clock"]["tan_cap"] = cfg.clock.tan_cap;
    if (cfg.clock.domain) je["clock"].update(domain_to_json(*cfg.clock.domain));
    je["delta"] = cfg.perturb.delta;
    je["skip_correction"] = cfg.perturb.skip_correction;
    je["eps"] = cfg.fd_eps;
    if (cfg.kind == EstimatorKind::asian_closed || cfg.kind == EstimatorKind::asian_general) {
        je["asian"]["sigma"] = cfg.asian.sigma_src;
        je["asian"]["mu"] = cfg.asian.mu_src;
        je["asian"]["s0"] = cfg.asian.s0;
        je["asian"]["payoff"] = cfg.asian.payoff_src;
    }
    out["estimator"] = je;
    out["paths"] = cfg.paths;
    out["seed"] = cfg.seed;
    out["workers"] = cfg.workers;
    out["output"]["per_path_csv"] = cfg.per_path_csv;
    return out;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("$", "cannot open config file '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("$", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

}  // namespace hypomc::io
