#pragma once

// Named experiments: each prepares its data from a ScenarioConfig, runs the
// flows and reduces the result to a list of pass/fail assertions.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "stiefel_sync/config.hpp"
#include "stiefel_sync/initial_data.hpp"
#include "stiefel_sync/integrator.hpp"

namespace stsync {

enum ExitCode : int { kExitPass = 0, kExitAssertion = 1, kExitConfig = 2, kExitAborted = 3 };

inline constexpr const char* kOutputRootEnv = "STSYNC_OUTPUT_ROOT";
inline constexpr const char* kVerdictSchema = "stsync verdict v1";

struct Assertion {
    std::string name;
    std::string anchor;    ///< property of the model the check exercises
    std::string relation;  ///< "<=", "<" or ">="
    double measured = kNaN;
    double threshold = kNaN;
    bool pass = false;
};

inline Assertion check(std::string name, std::string anchor, double measured, const char* relation,
                       double threshold) {
    Assertion a{std::move(name), std::move(anchor), relation, measured, threshold, false};
    const std::string rel = relation;
    if (rel == "<=") a.pass = measured <= threshold;
    else if (rel == "<") a.pass = measured < threshold;
    else if (rel == ">=") a.pass = measured >= threshold;
    else throw ParameterError("check: unknown relation " + rel);
    return a;
}

struct Series {
    std::string file;
    std::vector<DiagnosticsRecord> rows;
};

struct ScenarioOutcome {
    std::vector<Assertion> assertions;
    std::vector<Series> series;
    nlohmann::json info = nlohmann::json::object();

    bool passed() const {
        for (const auto& a : assertions) if (!a.pass) return false;
        return !assertions.empty();
    }
};

namespace anchors {
inline constexpr const char* kManifold = "manifold invariance of the flows";
inline constexpr const char* kConsensus = "exponential complete consensus, homogeneous first-order ensemble";
inline constexpr const char* kDiameterInequality = "differential inequality for the squared diameter";
inline constexpr const char* kLockPremise = "coupling above the locking threshold, initial diameter below beta";
inline constexpr const char* kPhaseLock = "convergence of relative states to a locked configuration";
inline constexpr const char* kInterDiameter = "contraction of the inter-diameter between two solutions";
inline constexpr const char* kNormalizedVelocity = "common limit of the normalized velocities";
inline constexpr const char* kVelocityDecay = "vanishing velocities, homogeneous second-order ensemble";
inline constexpr const char* kSecondOrderConsensus = "complete consensus, homogeneous second-order ensemble";
inline constexpr const char* kGInequality = "second-order differential inequality for G";
inline constexpr const char* kEnergy = "energy dissipation identity";
inline constexpr const char* kPractical = "practical consensus under small inertia";
inline constexpr const char* kVelocityBound = "uniform bound on the velocity diameter";
inline constexpr const char* kLeftTranslation = "invariance under left multiplication by an orthogonal matrix";
inline constexpr const char* kSplitting = "splitting off a common natural frequency";
inline constexpr const char* kSphere = "reduction to the sphere model for p = 1";
inline constexpr const char* kKuramoto = "reduction to the planar Kuramoto model for p = 1, n = 2";
inline constexpr const char* kRotation = "reduction to the rotation-group model for p = n";
inline constexpr const char* kTimeShift = "time-shifted solutions are solutions";
}  // namespace anchors

namespace detail {

inline double max_increase(const std::vector<double>& v) {
    double out = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < v.size(); ++k) out = std::max(out, v[k] - v[k - 1]);
    return out;
}

inline std::vector<double> column(const Trajectory& traj, double DiagnosticsRecord::*field) {
    std::vector<double> out;
    out.reserve(traj.size());
    for (const auto& r : traj.diagnostics) out.push_back(r.*field);
    return out;
}

inline double max_state_gap(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
    double out = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, (a[i] - b[i]).norm());
    return out;
}

inline std::size_t samples_per_window(double window, double spacing) {
    const double ratio = window / spacing;
    const double whole = std::round(ratio);
    if (whole < 1.0 || std::abs(ratio - whole) > 1e-9 * std::max(1.0, ratio)) return 0;
    return static_cast<std::size_t>(whole);
}

inline IntegratorConfig integrator_config(double dt, double horizon, std::size_t record_every) {
    IntegratorConfig c;
    c.dt = dt;
    c.horizon = horizon;
    c.record_every = record_every;
    return c;
}

inline std::vector<Matrix> initial_states(const ScenarioConfig& c, Rng& rng) {
    if (c.init == "uniform") return uniform_states(c.n, c.p, c.N, rng);
    if (c.initial_diameter) return clustered_states_with_diameter(c.n, c.p, c.N, *c.initial_diameter, rng);
    return clustered_states(c.n, c.p, c.N, c.radius, rng);
}

// Largest |centered dE/dt - dissipation rate| over samples spaced `stride` records apart.
inline double energy_identity_error(const Trajectory& traj, const ModelParams& params, std::size_t stride) {
    double out = 0.0;
    for (std::size_t k = stride; k + stride < traj.size(); ++k) {
        const double deriv = (traj.diagnostics[k + stride].E - traj.diagnostics[k - stride].E) /
                             (traj.times[k + stride] - traj.times[k - stride]);
        out = std::max(out, std::abs(deriv - energy_dissipation_rhs(traj.ensembles[k], params)));
    }
    return out;
}

// Seed of the second solution in the two-seed locking experiment.
inline std::uint64_t twin_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }

}  // namespace detail

// ---------------------------------------------------------------------------
// first_order_homogeneous

struct HomogeneousFirstOrderSetup {
    ModelParams params;
    Topology topo = all_to_all(1);
    Ensemble e0;
    IntegratorConfig integ;
};

inline HomogeneousFirstOrderSetup prepare_first_order_homogeneous(const ScenarioConfig& c) {
    HomogeneousFirstOrderSetup s;
    s.topo = c.topology();
    s.params.kappa = c.kappa;
    s.params.xis.assign(static_cast<std::size_t>(c.N), FrequencyMatrix::zero(c.p));
    Rng rng(c.seed);
    s.e0.states = detail::initial_states(c, rng);
    const double d0 = diameter(s.e0).value;
    detail::require(d0 < std::sqrt(2.0), "D(S0) < sqrt(2) (D(S0)=" + detail::num(d0) + ")");
    s.integ = detail::integrator_config(c.dt_for(c.kappa, false, 0.0), c.horizon, c.record_every);
    return s;
}

inline ScenarioOutcome run_first_order_homogeneous(const ScenarioConfig& c) {
    const auto s = prepare_first_order_homogeneous(c);
    const Trajectory traj = integrate(s.e0, s.params, s.topo, s.integ);
    const TopologyStats stats = compute_stats(s.topo);
    const double rate = c.kappa * stats.a_m / 4.0;

    const std::vector<double> d = detail::column(traj, &DiagnosticsRecord::D);
    const double d0 = d.front();

    // Centered difference of D^2 against -(kappa a_m / 4)(2 - D^2) D^2.
    double worst_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k + 1 < d.size(); ++k) {
        const double h = traj.times[k + 1] - traj.times[k - 1];
        const double lhs = (d[k + 1] * d[k + 1] - d[k - 1] * d[k - 1]) / h;
        const double y = d[k] * d[k];
        worst_excess = std::max(worst_excess, lhs + rate * (2.0 - y) * y);
    }
    // Comparison solution of y' = -rate (2 - y) y with y(0) = D0^2.
    const double y0 = d0 * d0;
    double envelope_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < d.size(); ++k) {
        const double decay = std::exp(-2.0 * rate * traj.times[k]);
        const double y = 2.0 * y0 * decay / (2.0 - y0 + y0 * decay);
        envelope_excess = std::max(envelope_excess, d[k] * d[k] - y);
    }

    ScenarioOutcome out;
    out.assertions.push_back(check("initial_diameter_below_sqrt2", anchors::kConsensus, d0, "<", std::sqrt(2.0)));
    out.assertions.push_back(check("diameter_nonincreasing", anchors::kConsensus, detail::max_increase(d), "<=", 1e-10));
    out.assertions.push_back(check("squared_diameter_inequality", anchors::kDiameterInequality, worst_excess, "<=", 1e-4));
    out.assertions.push_back(check("exponential_envelope", anchors::kConsensus, envelope_excess, "<=", 1e-10));
    out.assertions.push_back(check("final_diameter", anchors::kConsensus, d.back(), "<=", 1e-6));
    out.assertions.push_back(check("max_drift", anchors::kManifold, traj.max_drift_seen, "<=", 1e-8));
    out.info = {{"initial_diameter", d0}, {"final_diameter", d.back()}, {"repairs", traj.repairs},
                {"dt", s.integ.dt}, {"envelope_rate", 2.0 * rate}};
    out.series.push_back({"trajectory.csv", traj.diagnostics});
    return out;
}

// ---------------------------------------------------------------------------
// first_order_locking

struct LockingSetup {
    ModelParams params;
    Topology topo = all_to_all(1);
    TopologyStats stats;
    LockThresholds thresholds;
    Ensemble a0, b0;
    IntegratorConfig integ;
};

inline LockingSetup prepare_first_order_locking(const ScenarioConfig& c) {
    LockingSetup s;
    s.topo = c.topology();
    s.stats = compute_stats(s.topo);
    Rng rng(c.seed);
    s.params.kappa = c.kappa;
    s.params.xis = heterogeneous_frequencies(c.p, c.N, c.xi_scale, rng);
    s.a0.states = detail::initial_states(c, rng);
    Rng twin(detail::twin_seed(c.seed));
    s.b0.states = detail::initial_states(c, twin);

    try {
        s.thresholds = lock_thresholds(c.p, s.stats.a_m, s.stats.a_M, s.stats.Lambda, s.params.xi_inf(), c.kappa);
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("constraint 0 < Lambda < 8 p a_M^2 violated: ") + e.what());
    }
    const auto& t = s.thresholds;
    detail::require(t.kappa_condition, "kappa > kappa_min (kappa=" + detail::num(c.kappa) +
                                           ", kappa_min=" + detail::num(t.kappa_min) + ")");
    detail::require(t.roots_exist, "cubic r^3 - 2r + c0 has roots in [0, sqrt(2)]");
    const double da = diameter(s.a0).value;
    const double db = diameter(s.b0).value;
    detail::require(std::max(da, db) < t.beta, "D(S0) < beta (D(S0)=" + detail::num(std::max(da, db)) +
                                                   ", beta=" + detail::num(t.beta) + ")");

    s.integ = detail::integrator_config(c.dt_for(c.kappa, false, 0.0), c.horizon, c.record_every);
    const double spacing = s.integ.dt * static_cast<double>(c.record_every);
    detail::require(detail::samples_per_window(c.window_T, spacing) > 0,
                    "window_T is a multiple of dt * record_every");
    detail::require(c.horizon >= static_cast<double>(kPhaseLockMinWindows + 1) * c.window_T,
                    "horizon >= " + std::to_string(kPhaseLockMinWindows + 1) + " windows");
    return s;
}

inline ScenarioOutcome run_first_order_locking(const ScenarioConfig& c) {
    const auto s = prepare_first_order_locking(c);
    Trajectory ta;
    Trajectory tb;
    {
        auto fb = std::async(std::launch::async, [&] { return integrate(s.b0, s.params, s.topo, s.integ); });
        ta = integrate(s.a0, s.params, s.topo, s.integ);
        tb = fb.get();
    }
    const auto& th = s.thresholds;
    const double rate = th.contraction_rate(c.kappa, s.stats.Lambda, s.stats.a_M, c.p);
    const double rho_pred = std::exp(-rate * c.window_T);

    // Windowing starts at the first sample inside the alpha region when that
    // leaves enough windows, otherwise at t = 0.
    double start = 0.0;
    std::size_t entry = ta.size();
    for (std::size_t k = 0; k < ta.size(); ++k) {
        if (ta.diagnostics[k].D < th.alpha) {
            entry = k;
            break;
        }
    }
    if (entry < ta.size() &&
        ta.times.back() - ta.times[entry] >= static_cast<double>(kPhaseLockMinWindows + 1) * c.window_T) {
        start = ta.times[entry];
    }
    const PhaseLockVerdict lock = phase_lock_detector(ta, c.window_T, 1e-8, start);
    const double rho_factor = std::max(lock.rho / rho_pred, rho_pred / lock.rho);

    // Inter-diameter between the two solutions.
    std::vector<double> inter(ta.size());
    for (std::size_t k = 0; k < ta.size(); ++k) inter[k] = inter_diameter(ta.ensembles[k], tb.ensembles[k]);
    const double contraction = inter.back() / inter.front();
    const double contraction_bound = std::exp(-rate * ta.times.back());
    // Pointwise rate inside the alpha region (both solutions), when reached.
    std::size_t alpha_samples = 0;
    double rate_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k + 1 < ta.size(); ++k) {
        const bool inside = std::max({ta.diagnostics[k - 1].D, ta.diagnostics[k + 1].D, tb.diagnostics[k - 1].D,
                                      tb.diagnostics[k + 1].D}) < th.alpha;
        if (!inside) continue;
        ++alpha_samples;
        const double deriv = (inter[k + 1] - inter[k - 1]) / (ta.times[k + 1] - ta.times[k - 1]);
        rate_excess = std::max(rate_excess, deriv + rate * inter[k]);
    }

    // Normalized velocities S_i^T S_i' share a limit.
    const auto omega = reduced_velocity(ta.final_ensemble(), s.params, s.topo);
    double spread = 0.0;
    for (std::size_t i = 0; i < omega.size(); ++i) {
        for (std::size_t j = i + 1; j < omega.size(); ++j) spread = std::max(spread, (omega[i] - omega[j]).norm());
    }

    ScenarioOutcome out;
    out.assertions.push_back(check("coupling_above_threshold", anchors::kLockPremise, c.kappa, ">=", th.kappa_min));
    out.assertions.push_back(check("initial_diameter_below_beta", anchors::kLockPremise,
                                   std::max(ta.diagnostics.front().D, tb.diagnostics.front().D), "<", th.beta));
    out.assertions.push_back(check("phase_locked", anchors::kPhaseLock, lock.locked ? 1.0 : 0.0, ">=", 1.0));
    out.assertions.push_back(check("window_ratio_below_one", anchors::kPhaseLock, lock.rho, "<", 1.0));
    out.assertions.push_back(check("window_ratio_within_factor_2", anchors::kInterDiameter, rho_factor, "<=", 2.0));
    out.assertions.push_back(check("inter_diameter_contraction", anchors::kInterDiameter, contraction, "<=",
                                   contraction_bound));
    if (alpha_samples > 0) {
        out.assertions.push_back(check("inter_diameter_rate_in_alpha_region", anchors::kInterDiameter, rate_excess,
                                       "<=", 1e-6));
    }
    out.assertions.push_back(check("normalized_velocity_spread", anchors::kNormalizedVelocity, spread, "<=",
                                   10.0 * lock.final_delta));
    out.assertions.push_back(check("max_drift", anchors::kManifold, std::max(ta.max_drift_seen, tb.max_drift_seen),
                                   "<=", 1e-8));
    out.info = {{"kappa_star", th.kappa_star},
                {"kappa_min", th.kappa_min},
                {"alpha", th.alpha},
                {"beta", th.beta},
                {"lambda_bound", th.lambda_bound},
                {"Lambda", s.stats.Lambda},
                {"xi_inf", s.params.xi_inf()},
                {"predicted_rate", rate},
                {"predicted_rho", rho_pred},
                {"fitted_rho", lock.rho},
                {"lock_reason", lock.reason},
                {"window_start", lock.start_time},
                {"final_delta", lock.final_delta},
                {"final_diameter", ta.diagnostics.back().D},
                {"alpha_region_samples", alpha_samples},
                {"inter_diameter_initial", inter.front()},
                {"inter_diameter_final", inter.back()},
                {"repairs", ta.repairs + tb.repairs},
                {"dt", s.integ.dt}};
    out.series.push_back({"trajectory.csv", ta.diagnostics});
    out.series.push_back({"trajectory_twin.csv", tb.diagnostics});
    return out;
}

// ---------------------------------------------------------------------------
// second_order_homogeneous

struct HomogeneousSecondOrderSetup {
    ModelParams params;
    Topology topo = all_to_all(1);
    Ensemble e0;
    IntegratorConfig integ;
};

inline HomogeneousSecondOrderSetup prepare_second_order_homogeneous(const ScenarioConfig& c) {
    HomogeneousSecondOrderSetup s;
    s.topo = c.topology();
    s.params.kappa = c.kappa;
    s.params.m = c.m;
    s.params.gamma = c.gamma;
    s.params.xis.assign(static_cast<std::size_t>(c.N), FrequencyMatrix::zero(c.p));
    Rng rng(c.seed);
    s.e0.states = detail::initial_states(c, rng);
    s.e0.velocities = tangent_velocities(s.e0.states, c.velocity_scale, rng);
    s.integ = detail::integrator_config(c.dt_for(c.kappa, true, c.m), c.horizon, c.record_every);
    return s;
}

inline ScenarioOutcome run_second_order_homogeneous(const ScenarioConfig& c) {
    const auto s = prepare_second_order_homogeneous(c);
    const Trajectory traj = integrate(s.e0, s.params, s.topo, s.integ);
    const ResidualSeries monitor = inequality_monitor_D25(traj, s.params, s.topo);
    const VelocityBoundReport vb = velocity_bound_check(traj, s.params, s.topo);

    const std::vector<double> e = detail::column(traj, &DiagnosticsRecord::E);
    const double err_h = detail::energy_identity_error(traj, s.params, 1);
    const double err_2h = detail::energy_identity_error(traj, s.params, 2);

    const auto& last = traj.diagnostics.back();
    ScenarioOutcome out;
    out.assertions.push_back(check("final_velocity_diameter", anchors::kVelocityDecay, last.Dvel, "<=", 1e-5));
    out.assertions.push_back(check("final_G", anchors::kSecondOrderConsensus, last.G, "<=", 1e-5));
    out.assertions.push_back(check("G_inequality_min_residual", anchors::kGInequality, monitor.min_residual, ">=", -1e-6));
    out.assertions.push_back(check("energy_nonincreasing", anchors::kEnergy, detail::max_increase(e), "<=", 1e-10));
    out.assertions.push_back(check("energy_identity_refinement", anchors::kEnergy, err_2h / err_h, ">=", 3.5));
    out.assertions.push_back(check("velocity_bound", anchors::kVelocityBound, vb.sup_velocity, "<=", vb.bound + 1e-8));
    out.assertions.push_back(check("max_drift", anchors::kManifold, traj.max_drift_seen, "<=", 1e-8));
    out.info = {{"initial_energy", e.front()}, {"final_energy", e.back()}, {"repairs", traj.repairs},
                {"energy_identity_error", err_h}, {"energy_identity_error_2h", err_2h},
                {"dt", s.integ.dt}, {"final_diameter", last.D}};
    out.series.push_back({"trajectory.csv", traj.diagnostics});
    return out;
}

// ---------------------------------------------------------------------------
// practical_consensus_sweep

struct SweepMemberSetup {
    double kappa = 0.0;
    ModelParams params;
    IntegratorConfig integ;
};

struct PracticalSweepSetup {
    Topology topo = all_to_all(1);
    Ensemble e0;
    std::vector<SweepMemberSetup> members;
};

/// Each member's horizon is horizon * kappa_grid[0] / kappa (relaxation time ~ 1/kappa);
/// recording keeps about 2000 samples per member.
inline PracticalSweepSetup prepare_practical_consensus_sweep(const ScenarioConfig& c) {
    PracticalSweepSetup s;
    s.topo = c.topology();
    const TopologyStats stats = compute_stats(s.topo);
    Rng rng(c.seed);
    const auto xis = heterogeneous_frequencies(c.p, c.N, c.xi_scale, rng);
    s.e0.states = detail::initial_states(c, rng);
    s.e0.velocities = tangent_velocities(s.e0.states, c.velocity_scale, rng);
    const double v0 = velocity_diameter(s.e0);
    const double xi_inf = c.xi_scale;
    for (double kappa : c.kappa_grid) {
        SweepMemberSetup m;
        m.kappa = kappa;
        m.params.kappa = kappa;
        m.params.gamma = c.gamma;
        m.params.m = c.m0 / std::pow(kappa, 1.0 + c.eta);
        m.params.xis = xis;
        const double premise = (xi_inf + kappa * stats.a_M * std::sqrt(static_cast<double>(c.p))) / c.gamma;
        detail::require(v0 < premise, "D(V0) < (|Xi| + kappa a_M sqrt(p)) / gamma at kappa=" + detail::num(kappa));
        const double dt = c.dt_for(kappa, true, m.params.m);
        const double horizon = c.horizon * c.kappa_grid.front() / kappa;
        detail::require(dt <= horizon, "dt <= member horizon at kappa=" + detail::num(kappa));
        const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
        m.integ = detail::integrator_config(dt, horizon, std::max<std::size_t>(1, steps / 2000));
        s.members.push_back(m);
    }
    return s;
}

inline ScenarioOutcome run_practical_consensus_sweep(const ScenarioConfig& c) {
    const auto s = prepare_practical_consensus_sweep(c);
    std::vector<std::future<Trajectory>> jobs;
    for (const auto& m : s.members) {
        jobs.push_back(std::async(std::launch::async,
                                  [&s, &m] { return integrate(s.e0, m.params, s.topo, m.integ); }));
    }
    std::vector<Trajectory> trajs;
    for (auto& j : jobs) trajs.push_back(j.get());

    ScenarioOutcome out;
    std::vector<double> tail_g;
    nlohmann::json members = nlohmann::json::array();
    for (std::size_t k = 0; k < trajs.size(); ++k) {
        const auto& traj = trajs[k];
        const auto& m = s.members[k];
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t q = 0; q < traj.size(); ++q) {
            if (traj.times[q] >= 0.5 * m.integ.horizon) {
                sum += traj.diagnostics[q].G;
                ++count;
            }
        }
        tail_g.push_back(sum / static_cast<double>(count));
        const VelocityBoundReport vb = velocity_bound_check(traj, m.params, s.topo);
        const std::string tag = "kappa=" + detail::num(m.kappa);
        out.assertions.push_back(check("velocity_bound[" + tag + "]", anchors::kVelocityBound, vb.sup_velocity, "<=",
                                       vb.bound + 1e-8));
        out.assertions.push_back(check("max_drift[" + tag + "]", anchors::kManifold, traj.max_drift_seen, "<=", 1e-8));
        members.push_back({{"kappa", m.kappa}, {"m", m.params.m}, {"dt", m.integ.dt}, {"horizon", m.integ.horizon},
                           {"tail_G", tail_g.back()}, {"repairs", traj.repairs}});
        out.series.push_back({"kappa_" + detail::num(m.kappa) + ".csv", traj.diagnostics});
    }

    double worst_ratio = 0.0;
    for (std::size_t k = 1; k < tail_g.size(); ++k) worst_ratio = std::max(worst_ratio, tail_g[k] / tail_g[k - 1]);
    // Least-squares slope of log G_tail against log kappa.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double count = static_cast<double>(tail_g.size());
    for (std::size_t k = 0; k < tail_g.size(); ++k) {
        const double x = std::log(s.members[k].kappa);
        const double y = std::log(tail_g[k]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);

    out.assertions.push_back(check("tail_G_decreasing_in_kappa", anchors::kPractical, worst_ratio, "<", 1.0));
    out.assertions.push_back(check("tail_G_loglog_slope", anchors::kPractical, slope, "<=", -0.8));
    out.info = {{"members", members}, {"loglog_slope", slope}};
    return out;
}

// ---------------------------------------------------------------------------
// invariance_checks

inline ScenarioOutcome run_invariance_checks(const ScenarioConfig& c) {
    const Topology topo = c.topology();
    const TopologyStats stats = compute_stats(topo);
    Rng rng(c.seed);
    ScenarioOutcome out;
    nlohmann::json info = nlohmann::json::object();

    ModelParams first;
    first.kappa = c.kappa;
    first.xis = heterogeneous_frequencies(c.p, c.N, c.xi_scale, rng);
    ModelParams second = first;
    second.m = c.m;
    second.gamma = c.gamma;

    Ensemble e1;
    e1.states = detail::initial_states(c, rng);
    Ensemble e2 = e1;
    e2.velocities = tangent_velocities(e2.states, c.velocity_scale, rng);
    const Matrix l = random_stiefel(c.n, c.n, rng).matrix();

    const IntegratorConfig ic1 = detail::integrator_config(c.dt_for(c.kappa, false, 0.0), c.horizon, c.record_every);
    const IntegratorConfig ic2 = detail::integrator_config(c.dt_for(c.kappa, true, c.m), c.horizon, c.record_every);

    // Left translation, both orders.
    const Trajectory t1 = integrate(e1, first, topo, ic1);
    const Trajectory t1l = integrate(left_translate(e1, l), first, topo, ic1);
    const Trajectory t2 = integrate(e2, second, topo, ic2);
    const Trajectory t2l = integrate(left_translate(e2, l), second, topo, ic2);
    const double lt1 = detail::max_state_gap(left_translate(t1.final_ensemble(), l).states, t1l.final_ensemble().states);
    const double lt2 = detail::max_state_gap(left_translate(t2.final_ensemble(), l).states, t2l.final_ensemble().states);
    out.assertions.push_back(check("left_translation_first_order", anchors::kLeftTranslation, lt1, "<=", 1e-8));
    out.assertions.push_back(check("left_translation_second_order", anchors::kLeftTranslation, lt2, "<=", 1e-8));

    // Splitting with a common frequency.
    ModelParams common1 = first;
    common1.xis = common_frequency(c.p, c.N, c.xi_scale, rng);
    ModelParams free1 = common1;
    for (auto& xi : free1.xis) xi = FrequencyMatrix::zero(c.p);
    ModelParams common2 = common1;
    common2.m = c.m;
    common2.gamma = c.gamma;
    ModelParams free2 = free1;
    free2.m = c.m;
    free2.gamma = c.gamma;
    const FrequencyMatrix& xi = common1.xis.front();

    const Trajectory s1 = integrate(e1, common1, topo, ic1);
    const Trajectory y1 = integrate(e1, free1, topo, ic1);
    Ensemble y2_0 = e2;
    for (std::size_t i = 0; i < y2_0.velocities.size(); ++i) {
        y2_0.velocities[i] = e2.velocities[i] - e2.states[i] * xi.matrix() / c.gamma;
    }
    const Trajectory s2 = integrate(e2, common2, topo, ic2);
    const Trajectory y2 = integrate(y2_0, free2, topo, ic2);
    double split1 = 0.0, split2 = 0.0;
    for (std::size_t i = 0; i < e1.states.size(); ++i) {
        const Matrix a = split_transform(s1.final_ensemble().states[i], xi, s1.times.back(), 1).matrix();
        split1 = std::max(split1, (a - y1.final_ensemble().states[i]).norm());
        const Matrix b = split_transform(s2.final_ensemble().states[i], xi, s2.times.back(), 2, c.gamma).matrix();
        split2 = std::max(split2, (b - y2.final_ensemble().states[i]).norm());
    }
    out.assertions.push_back(check("splitting_first_order", anchors::kSplitting, split1, "<=", 1e-8));
    out.assertions.push_back(check("splitting_second_order", anchors::kSplitting, split2, "<=", 1e-8));

    // Sphere reduction: p = 1 in R^n, pointwise right-hand sides.
    double sphere = 0.0;
    {
        ModelParams ps;
        ps.kappa = c.kappa;
        ps.xis.assign(static_cast<std::size_t>(c.N), FrequencyMatrix::zero(1));
        for (int draw = 0; draw < 10; ++draw) {
            Ensemble es;
            es.states = uniform_states(c.n, 1, c.N, rng);
            std::vector<Vector> x;
            for (const auto& sm : es.states) x.push_back(sm.col(0));
            const auto a = rhs_first_order(es, ps, topo);
            const auto b = rhs_sphere(x, {}, topo, c.kappa);
            for (std::size_t i = 0; i < a.size(); ++i) sphere = std::max(sphere, (a[i].col(0) - b[i]).norm());
        }
    }
    out.assertions.push_back(check("sphere_rhs_deviation", anchors::kSphere, sphere, "<=", 1e-12));

    // Kuramoto reduction: p = 1, n = 2, trajectory against the angle flow.
    double kuramoto = 0.0;
    {
        ModelParams pk;
        pk.kappa = c.kappa;
        pk.xis.assign(static_cast<std::size_t>(c.N), FrequencyMatrix::zero(1));
        Vector theta(c.N);
        Ensemble ek;
        for (Index i = 0; i < c.N; ++i) {
            theta(i) = 2.0 * std::numbers::pi * rng.uniform();
            Matrix sm(2, 1);
            sm << std::cos(theta(i)), std::sin(theta(i));
            ek.states.push_back(sm);
        }
        const double dt = ic1.dt;
        const IntegratorConfig ick = detail::integrator_config(dt, c.horizon, 1);
        const Trajectory tk = integrate(ek, pk, topo, ick);
        const Vector nu = Vector::Zero(c.N);
        const auto f = [&](const Vector& th) { return rhs_kuramoto(th, nu, topo, c.kappa); };
        for (std::size_t k = 0; k < tk.size(); ++k) {
            if (k > 0) theta = rk4_step(theta, f, dt);
            for (Index i = 0; i < c.N; ++i) {
                const Matrix& sm = tk.ensembles[k].states[static_cast<std::size_t>(i)];
                kuramoto = std::max(kuramoto, std::hypot(sm(0, 0) - std::cos(theta(i)), sm(1, 0) - std::sin(theta(i))));
            }
        }
    }
    out.assertions.push_back(check("kuramoto_trajectory_deviation", anchors::kKuramoto, kuramoto, "<=", 1e-8));

    // Rotation-group reduction: p = n, Omega_i = R_i Xi_i R_i^T.
    double rotation = 0.0;
    {
        ModelParams pr;
        pr.kappa = c.kappa;
        pr.xis = heterogeneous_frequencies(c.n, c.N, std::max(c.xi_scale, 0.1), rng);
        for (int draw = 0; draw < 10; ++draw) {
            Ensemble er;
            er.states = uniform_states(c.n, c.n, c.N, rng);
            std::vector<Matrix> omegas;
            for (std::size_t i = 0; i < er.states.size(); ++i) {
                omegas.push_back(er.states[i] * pr.xis[i].matrix() * er.states[i].transpose());
            }
            const auto a = rhs_first_order(er, pr, topo);
            const auto b = rhs_so_n(er.states, omegas, topo, c.kappa);
            rotation = std::max(rotation, detail::max_state_gap(a, b));
        }
    }
    out.assertions.push_back(check("rotation_rhs_deviation", anchors::kRotation, rotation, "<=", 1e-12));

    // Velocity bound along the second-order run.
    const VelocityBoundReport vb = velocity_bound_check(t2, second, topo);
    out.assertions.push_back(check("velocity_bound", anchors::kVelocityBound, vb.sup_velocity, "<=", vb.bound + 1e-8));

    // Time shift: restart from the recorded sample nearest the midpoint.
    double shift1 = 0.0, shift2 = 0.0;
    {
        const std::size_t mid1 = t1.size() / 2;
        const double tail1 = t1.times.back() - t1.times[mid1];
        if (tail1 > 0.0) {
            const Trajectory r1 = integrate(t1.ensembles[mid1], first, topo,
                                            detail::integrator_config(ic1.dt, tail1, ic1.record_every));
            shift1 = detail::max_state_gap(r1.final_ensemble().states, t1.final_ensemble().states);
        }
        const std::size_t mid2 = t2.size() / 2;
        const double tail2 = t2.times.back() - t2.times[mid2];
        if (tail2 > 0.0) {
            const Trajectory r2 = integrate(t2.ensembles[mid2], second, topo,
                                            detail::integrator_config(ic2.dt, tail2, ic2.record_every));
            shift2 = detail::max_state_gap(r2.final_ensemble().states, t2.final_ensemble().states);
        }
    }
    out.assertions.push_back(check("time_shift_first_order", anchors::kTimeShift, shift1, "<=", 1e-10));
    out.assertions.push_back(check("time_shift_second_order", anchors::kTimeShift, shift2, "<=", 1e-10));

    const double drift = std::max({t1.max_drift_seen, t1l.max_drift_seen, t2.max_drift_seen, t2l.max_drift_seen,
                                   s1.max_drift_seen, y1.max_drift_seen, s2.max_drift_seen, y2.max_drift_seen});
    out.assertions.push_back(check("max_drift", anchors::kManifold, drift, "<=", 1e-8));

    info["repairs_first_order"] = t1.repairs;
    info["repairs_second_order"] = t2.repairs;
    info["a_M"] = stats.a_M;
    out.info = info;
    out.series.push_back({"trajectory_first_order.csv", t1.diagnostics});
    out.series.push_back({"trajectory_second_order.csv", t2.diagnostics});
    return out;
}

// ---------------------------------------------------------------------------
// Validation, output and dispatch.

/// Full pre-run check: static constraints plus premises on generated data.
inline void validate_scenario(const ScenarioConfig& c) {
    validate_basic(c);
    try {
        switch (c.scenario) {
            case Scenario::FirstOrderHomogeneous: (void)prepare_first_order_homogeneous(c); break;
            case Scenario::FirstOrderLocking: (void)prepare_first_order_locking(c); break;
            case Scenario::SecondOrderHomogeneous: (void)prepare_second_order_homogeneous(c); break;
            case Scenario::PracticalConsensusSweep: (void)prepare_practical_consensus_sweep(c); break;
            case Scenario::InvarianceChecks: break;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("initial data could not be prepared: ") + e.what());
    }
}

inline ScenarioOutcome dispatch_scenario(const ScenarioConfig& c) {
    switch (c.scenario) {
        case Scenario::FirstOrderHomogeneous: return run_first_order_homogeneous(c);
        case Scenario::FirstOrderLocking: return run_first_order_locking(c);
        case Scenario::SecondOrderHomogeneous: return run_second_order_homogeneous(c);
        case Scenario::PracticalConsensusSweep: return run_practical_consensus_sweep(c);
        case Scenario::InvarianceChecks: return run_invariance_checks(c);
    }
    throw ConfigError("unknown scenario");
}

/// $STSYNC_OUTPUT_ROOT / output_dir when the variable is set (an absolute
/// output_dir is re-rooted), otherwise output_dir as given.
inline std::filesystem::path resolve_output_dir(const std::string& output_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(output_dir);
    const char* root = std::getenv(kOutputRootEnv);
    if (root && *root) return fs::path(root) / dir.relative_path();
    return dir;
}

inline nlohmann::json assertion_to_json(const Assertion& a) {
    return {{"name", a.name},       {"anchor", a.anchor},       {"relation", a.relation},
            {"measured", a.measured}, {"threshold", a.threshold}, {"pass", a.pass}};
}

struct RunResult {
    int exit_code = kExitPass;
    std::string message;
    std::filesystem::path directory;
    nlohmann::json verdict;
    ScenarioOutcome outcome;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

inline void write_series(const std::filesystem::path& path, const Series& s) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    write_csv_header(os);
    for (const auto& r : s.rows) write_csv_row(os, r);
}

/// Validates, runs and writes artifacts. Exit code 2 leaves no artifacts;
/// 3 and 1 still write a verdict.
inline RunResult run_scenario(const ScenarioConfig& c) {
    RunResult result;
    try {
        validate_scenario(c);
    } catch (const ConfigError& e) {
        result.exit_code = kExitConfig;
        result.message = e.what();
        return result;
    }
    result.directory = resolve_output_dir(c.output_dir);
    std::filesystem::create_directories(result.directory);

    nlohmann::json verdict;
    verdict["schema"] = kVerdictSchema;
    verdict["scenario"] = scenario_name(c.scenario);
    verdict["config"] = config_to_json(c);
    try {
        result.outcome = dispatch_scenario(c);
    } catch (const DriftAbortError& e) {
        result.exit_code = kExitAborted;
        result.message = e.what();
        verdict["error"] = {{"kind", "drift_abort"}, {"message", e.what()}, {"time", e.time()},
                            {"agent", e.agent()}, {"drift", e.drift()}};
    } catch (const NumericalBlowupError& e) {
        result.exit_code = kExitAborted;
        result.message = e.what();
        verdict["error"] = {{"kind", "blowup"}, {"message", e.what()}, {"time", e.time()}};
    } catch (const Error& e) {
        result.exit_code = kExitAborted;
        result.message = e.what();
        verdict["error"] = {{"kind", "run_error"}, {"message", e.what()}};
    }

    if (result.exit_code == kExitAborted) {
        verdict["status"] = "aborted";
        verdict["assertions"] = nlohmann::json::array();
    } else {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& a : result.outcome.assertions) list.push_back(assertion_to_json(a));
        verdict["assertions"] = list;
        verdict["info"] = result.outcome.info;
        nlohmann::json files = nlohmann::json::array();
        for (const auto& s : result.outcome.series) {
            write_series(result.directory / s.file, s);
            files.push_back(s.file);
        }
        verdict["artifacts"] = files;
        result.exit_code = result.outcome.passed() ? kExitPass : kExitAssertion;
        verdict["status"] = result.exit_code == kExitPass ? "pass" : "fail";
    }
    verdict["exit_code"] = result.exit_code;
    write_json(result.directory / "verdict.json", verdict);
    result.verdict = std::move(verdict);
    return result;
}

// ---------------------------------------------------------------------------
// Sweeps: list-valued fields expand into a cartesian product of runs.

inline std::vector<nlohmann::json> expand_sweep(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("sweep config must be a JSON object");
    std::vector<nlohmann::json> members{nlohmann::json::object()};
    for (const auto& item : doc.items()) {
        const bool expand = item.value().is_array() && !list_valued_key(item.key());
        if (expand && item.key() == "output_dir") throw ConfigError("output_dir cannot be swept");
        if (expand && item.value().empty()) throw ConfigError("swept key '" + item.key() + "' has no values");
        std::vector<nlohmann::json> next;
        for (const auto& m : members) {
            if (expand) {
                for (const auto& v : item.value()) {
                    nlohmann::json copy = m;
                    copy[item.key()] = v;
                    next.push_back(std::move(copy));
                }
            } else {
                nlohmann::json copy = m;
                copy[item.key()] = item.value();
                next.push_back(std::move(copy));
            }
        }
        members = std::move(next);
    }
    return members;
}

struct SweepResult {
    int exit_code = kExitPass;
    std::string message;
    std::filesystem::path directory;
    nlohmann::json summary;
};

/// Validates every member first, then runs members concurrently, each in its
/// own subdirectory, and aggregates their verdicts.
inline SweepResult run_sweep(const nlohmann::json& doc) {
    SweepResult result;
    std::vector<ScenarioConfig> configs;
    std::string base = "runs/sweep";
    try {
        if (doc.is_object() && doc.contains("output_dir")) base = detail::json_string(doc["output_dir"], "output_dir");
        const auto members = expand_sweep(doc);
        for (std::size_t k = 0; k < members.size(); ++k) {
            ScenarioConfig c = parse_config(members[k]);
            char tag[32];
            std::snprintf(tag, sizeof tag, "member_%03zu", k);
            c.output_dir = (std::filesystem::path(base) / tag).string();
            try {
                validate_scenario(c);
            } catch (const ConfigError& e) {
                throw ConfigError(std::string(tag) + ": " + e.what());
            }
            configs.push_back(std::move(c));
        }
    } catch (const ConfigError& e) {
        result.exit_code = kExitConfig;
        result.message = e.what();
        return result;
    }

    std::vector<RunResult> runs(configs.size());
    const std::size_t lanes = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t first = 0; first < configs.size(); first += lanes) {
        std::vector<std::future<RunResult>> jobs;
        for (std::size_t k = first; k < std::min(configs.size(), first + lanes); ++k) {
            jobs.push_back(std::async(std::launch::async, [&configs, k] { return run_scenario(configs[k]); }));
        }
        for (std::size_t q = 0; q < jobs.size(); ++q) runs[first + q] = jobs[q].get();
    }

    bool aborted = false, failed = false;
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t k = 0; k < runs.size(); ++k) {
        aborted = aborted || runs[k].exit_code == kExitAborted;
        failed = failed || runs[k].exit_code == kExitAssertion;
        list.push_back({{"directory", runs[k].directory.string()},
                        {"exit_code", runs[k].exit_code},
                        {"config", config_to_json(configs[k])}});
    }
    result.exit_code = aborted ? kExitAborted : failed ? kExitAssertion : kExitPass;
    result.directory = resolve_output_dir(base);
    std::filesystem::create_directories(result.directory);
    result.summary = {{"schema", kVerdictSchema}, {"members", list}, {"exit_code", result.exit_code}};
    write_json(result.directory / "sweep_verdict.json", result.summary);
    return result;
}

}  // namespace stsync
