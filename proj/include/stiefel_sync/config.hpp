#pragma once

// Scenario configuration: a single JSON document, parsed strictly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stiefel_sync/network.hpp"

namespace stsync {

enum class Scenario {
    FirstOrderHomogeneous,
    FirstOrderLocking,
    SecondOrderHomogeneous,
    PracticalConsensusSweep,
    InvarianceChecks,
};

inline const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::FirstOrderHomogeneous: return "first_order_homogeneous";
        case Scenario::FirstOrderLocking: return "first_order_locking";
        case Scenario::SecondOrderHomogeneous: return "second_order_homogeneous";
        case Scenario::PracticalConsensusSweep: return "practical_consensus_sweep";
        case Scenario::InvarianceChecks: return "invariance_checks";
    }
    return "unknown";
}

inline std::optional<Scenario> parse_scenario_name(const std::string& name) {
    for (Scenario s : {Scenario::FirstOrderHomogeneous, Scenario::FirstOrderLocking,
                       Scenario::SecondOrderHomogeneous, Scenario::PracticalConsensusSweep,
                       Scenario::InvarianceChecks}) {
        if (name == scenario_name(s)) return s;
    }
    return std::nullopt;
}

struct ScenarioConfig {
    Scenario scenario = Scenario::FirstOrderHomogeneous;
    Index n = 4;
    Index p = 2;
    Index N = 4;
    double kappa = 1.0;
    double m = 1.0;
    double gamma = 1.0;
    double xi_scale = 0.0;  ///< target max_i ||Xi_i||_F
    double eta = 1.0;
    double m0 = 1.0;
    std::uint64_t seed = 1;
    std::optional<double> dt;  ///< unset: scenario dt policy
    double horizon = 10.0;
    std::size_t record_every = 10;
    std::string output_dir;
    std::string init = "clustered";
    double radius = 0.25;
    std::optional<double> initial_diameter;  ///< exact D(S0) for clustered data
    double velocity_scale = 0.1;
    double window_T = 0.25;
    std::vector<double> kappa_grid{10.0, 100.0, 1000.0};
    std::optional<Matrix> weights;  ///< unset: all-to-all with unit weights

    bool second_order() const {
        return scenario == Scenario::SecondOrderHomogeneous || scenario == Scenario::PracticalConsensusSweep;
    }

    Topology topology() const { return weights ? Topology(*weights) : all_to_all(N); }

    /// min(1e-3, 1e-2/kappa), additionally capped at m/(2 gamma) for inertial runs.
    double dt_for(double kappa_value, bool inertial, double m_value) const {
        if (dt) return *dt;
        double out = std::min(1e-3, 1e-2 / kappa_value);
        if (inertial) out = std::min(out, 0.5 * m_value / gamma);
        return out;
    }
};

/// Every key a config document may carry.
inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "scenario", "n",       "p",       "N",          "kappa",      "m",
        "gamma",    "xi_scale", "eta",    "m0",         "seed",       "dt",
        "horizon",  "record_every", "output_dir", "init", "radius", "initial_diameter",
        "velocity_scale", "window_T", "kappa_grid", "topology"};
    return keys;
}

/// Keys whose values are lists by design and are never expanded by a sweep.
inline bool list_valued_key(const std::string& key) { return key == "kappa_grid"; }

inline ScenarioConfig default_config(Scenario s) {
    ScenarioConfig c;
    c.scenario = s;
    c.output_dir = std::string("runs/") + scenario_name(s);
    switch (s) {
        case Scenario::FirstOrderHomogeneous:
            c.N = 8;
            c.horizon = 50.0;
            c.initial_diameter = 1.0;
            break;
        case Scenario::FirstOrderLocking:
            c.kappa = 2.0;
            c.xi_scale = 0.1;
            c.horizon = 40.0;
            c.radius = 0.2;
            break;
        case Scenario::SecondOrderHomogeneous:
            c.gamma = 2.0;
            c.horizon = 100.0;
            c.record_every = 1;
            c.radius = 0.5;
            c.velocity_scale = 0.2;
            break;
        case Scenario::PracticalConsensusSweep:
            c.xi_scale = 0.1;
            c.radius = 0.3;
            break;
        case Scenario::InvarianceChecks:
            c.m = 0.5;
            c.gamma = 1.5;
            c.xi_scale = 0.7;
            c.radius = 0.5;
            c.velocity_scale = 0.2;
            c.record_every = 1000;
            break;
    }
    return c;
}

namespace detail {

inline double json_real(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    const double out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError("config key '" + key + "' must be finite");
    return out;
}

inline long long json_int(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
    return v.get<long long>();
}

inline std::string json_string(const nlohmann::json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

inline Matrix json_weights(const nlohmann::json& v) {
    if (v.is_string()) {
        if (v.get<std::string>() != "all_to_all") {
            throw ConfigError("config key 'topology' must be \"all_to_all\" or {\"weights\": [[...]]}");
        }
        return Matrix();
    }
    if (!v.is_object() || v.size() != 1 || !v.contains("weights") || !v["weights"].is_array()) {
        throw ConfigError("config key 'topology' must be \"all_to_all\" or {\"weights\": [[...]]}");
    }
    const auto& rows = v["weights"];
    const Index n = static_cast<Index>(rows.size());
    Matrix out(n, n);
    for (Index i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != n) {
            throw ConfigError("topology weights must form a square matrix");
        }
        for (Index k = 0; k < n; ++k) out(i, k) = json_real(row[static_cast<std::size_t>(k)], "topology");
    }
    return out;
}

}  // namespace detail

/// Builds a config from a parsed document. Unknown keys and ill-typed values
/// raise ConfigError; absent keys take the scenario defaults.
inline ScenarioConfig parse_config(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    const auto& keys = config_keys();
    for (const auto& item : doc.items()) {
        if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
            throw ConfigError("unknown config key '" + item.key() + "'");
        }
    }
    if (!doc.contains("scenario")) throw ConfigError("config key 'scenario' is required");
    const std::string name = detail::json_string(doc["scenario"], "scenario");
    const auto scenario = parse_scenario_name(name);
    if (!scenario) throw ConfigError("unknown scenario '" + name + "'");

    ScenarioConfig c = default_config(*scenario);
    const auto count = [&](const char* key, Index& field) {
        if (doc.contains(key)) field = static_cast<Index>(detail::json_int(doc[key], key));
    };
    const auto real = [&](const char* key, double& field) {
        if (doc.contains(key)) field = detail::json_real(doc[key], key);
    };
    count("n", c.n);
    count("p", c.p);
    count("N", c.N);
    real("kappa", c.kappa);
    real("m", c.m);
    real("gamma", c.gamma);
    real("xi_scale", c.xi_scale);
    real("eta", c.eta);
    real("m0", c.m0);
    real("horizon", c.horizon);
    real("radius", c.radius);
    real("velocity_scale", c.velocity_scale);
    real("window_T", c.window_T);
    if (doc.contains("seed")) {
        const long long seed = detail::json_int(doc["seed"], "seed");
        if (seed < 0) throw ConfigError("constraint seed >= 0 violated");
        c.seed = static_cast<std::uint64_t>(seed);
    }
    if (doc.contains("dt")) {
        if (doc["dt"].is_null()) {
            c.dt.reset();
        } else {
            c.dt = detail::json_real(doc["dt"], "dt");
        }
    }
    if (doc.contains("record_every")) {
        const long long every = detail::json_int(doc["record_every"], "record_every");
        if (every < 1) throw ConfigError("constraint record_every >= 1 violated");
        c.record_every = static_cast<std::size_t>(every);
    }
    if (doc.contains("output_dir")) c.output_dir = detail::json_string(doc["output_dir"], "output_dir");
    if (doc.contains("init")) c.init = detail::json_string(doc["init"], "init");
    if (doc.contains("initial_diameter")) {
        if (doc["initial_diameter"].is_null()) {
            c.initial_diameter.reset();
        } else {
            c.initial_diameter = detail::json_real(doc["initial_diameter"], "initial_diameter");
        }
    }
    if (doc.contains("kappa_grid")) {
        const auto& grid = doc["kappa_grid"];
        if (!grid.is_array()) throw ConfigError("config key 'kappa_grid' must be a list of numbers");
        c.kappa_grid.clear();
        for (const auto& v : grid) c.kappa_grid.push_back(detail::json_real(v, "kappa_grid"));
    }
    if (doc.contains("topology")) {
        Matrix w = detail::json_weights(doc["topology"]);
        if (w.size() == 0) {
            c.weights.reset();
        } else {
            c.weights = std::move(w);
        }
    }
    return c;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

/// Echo of the resolved configuration, written into every verdict.
inline nlohmann::json config_to_json(const ScenarioConfig& c) {
    nlohmann::json j;
    j["scenario"] = scenario_name(c.scenario);
    j["n"] = c.n;
    j["p"] = c.p;
    j["N"] = c.N;
    j["kappa"] = c.kappa;
    j["m"] = c.m;
    j["gamma"] = c.gamma;
    j["xi_scale"] = c.xi_scale;
    j["eta"] = c.eta;
    j["m0"] = c.m0;
    j["seed"] = c.seed;
    j["dt"] = c.dt ? nlohmann::json(*c.dt) : nlohmann::json(nullptr);
    j["horizon"] = c.horizon;
    j["record_every"] = c.record_every;
    j["output_dir"] = c.output_dir;
    j["init"] = c.init;
    j["radius"] = c.radius;
    j["initial_diameter"] = c.initial_diameter ? nlohmann::json(*c.initial_diameter) : nlohmann::json(nullptr);
    j["velocity_scale"] = c.velocity_scale;
    j["window_T"] = c.window_T;
    j["kappa_grid"] = c.kappa_grid;
    if (c.weights) {
        nlohmann::json rows = nlohmann::json::array();
        for (Index i = 0; i < c.weights->rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (Index k = 0; k < c.weights->cols(); ++k) row.push_back((*c.weights)(i, k));
            rows.push_back(row);
        }
        j["topology"] = {{"weights", rows}};
    } else {
        j["topology"] = "all_to_all";
    }
    return j;
}

namespace detail {

inline void require(bool ok, const std::string& constraint) {
    if (!ok) throw ConfigError("constraint " + constraint + " violated");
}

inline std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace detail

/// Shape and range checks shared by all scenarios. Scenario premises that need
/// generated data are checked by the scenario preparation step.
inline void validate_basic(const ScenarioConfig& c) {
    using detail::num;
    using detail::require;
    require(c.n >= 1, "n >= 1 (n=" + std::to_string(c.n) + ")");
    require(c.p >= 1, "p >= 1 (p=" + std::to_string(c.p) + ")");
    require(c.p <= c.n, "p <= n (p=" + std::to_string(c.p) + ", n=" + std::to_string(c.n) + ")");
    require(c.N >= 2, "N >= 2 (N=" + std::to_string(c.N) + ")");
    require(c.kappa > 0.0, "kappa > 0 (kappa=" + num(c.kappa) + ")");
    require(c.gamma > 0.0, "gamma > 0 (gamma=" + num(c.gamma) + ")");
    require(c.xi_scale >= 0.0, "xi_scale >= 0 (xi_scale=" + num(c.xi_scale) + ")");
    require(c.horizon > 0.0, "horizon > 0 (horizon=" + num(c.horizon) + ")");
    if (c.dt) {
        require(*c.dt > 0.0, "dt > 0 (dt=" + num(*c.dt) + ")");
        require(*c.dt <= c.horizon, "dt <= horizon");
    }
    require(c.radius > 0.0, "radius > 0 (radius=" + num(c.radius) + ")");
    require(c.velocity_scale >= 0.0, "velocity_scale >= 0");
    require(c.window_T > 0.0, "window_T > 0");
    require(c.init == "clustered" || c.init == "uniform", "init in {clustered, uniform} (init=" + c.init + ")");
    require(!c.output_dir.empty(), "output_dir is non-empty");
    if (c.initial_diameter) {
        require(*c.initial_diameter > 0.0 && *c.initial_diameter < 2.0 * std::sqrt(static_cast<double>(c.p)),
                "0 < initial_diameter < 2 sqrt(p)");
        require(c.init == "clustered", "initial_diameter requires init = clustered");
    }
    if (c.weights) {
        require(c.weights->rows() == c.N, "topology size == N");
        try {
            (void)Topology(*c.weights);
        } catch (const Error& e) {
            throw ConfigError(std::string("constraint topology is symmetric and positive violated: ") + e.what());
        }
    }

    const double sqrt2 = std::sqrt(2.0);
    switch (c.scenario) {
        case Scenario::FirstOrderHomogeneous:
            require(c.xi_scale == 0.0, "xi_scale = 0 for first_order_homogeneous");
            require(c.init == "clustered", "init = clustered for first_order_homogeneous");
            if (c.initial_diameter) {
                require(*c.initial_diameter < sqrt2, "initial_diameter < sqrt(2)");
            } else {
                require(2.0 * c.radius < sqrt2, "2 radius < sqrt(2)");
            }
            break;
        case Scenario::FirstOrderLocking:
            require(c.xi_scale > 0.0, "xi_scale > 0 for first_order_locking");
            require(c.p >= 2, "p >= 2 for first_order_locking (1 x 1 frequencies vanish)");
            require(c.init == "clustered", "init = clustered for first_order_locking");
            break;
        case Scenario::SecondOrderHomogeneous:
            require(c.xi_scale == 0.0, "xi_scale = 0 for second_order_homogeneous");
            require(c.m > 0.0, "m > 0 (m=" + num(c.m) + ")");
            require(compute_stats(c.topology()).xi_constant, "topology row averages are constant");
            break;
        case Scenario::PracticalConsensusSweep: {
            require(c.kappa_grid.size() >= 2, "kappa_grid has at least two entries");
            for (std::size_t k = 0; k < c.kappa_grid.size(); ++k) {
                require(c.kappa_grid[k] > 0.0, "kappa_grid entries > 0");
                if (k) require(c.kappa_grid[k] > c.kappa_grid[k - 1], "kappa_grid strictly increasing");
            }
            require(c.eta > 0.0, "eta > 0 (eta=" + num(c.eta) + ")");
            require(c.m0 > 0.0, "m0 > 0 (m0=" + num(c.m0) + ")");
            require(c.xi_scale > 0.0, "xi_scale > 0 for practical_consensus_sweep");
            require(c.p >= 2, "p >= 2 for practical_consensus_sweep (1 x 1 frequencies vanish)");
            break;
        }
        case Scenario::InvarianceChecks:
            require(c.m > 0.0, "m > 0 (m=" + num(c.m) + ")");
            break;
    }
}

}  // namespace stsync
