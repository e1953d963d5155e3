#pragma once

// Fixed-step classical Runge-Kutta integration of the consensus flows with
// post-step drift monitoring and polar repair.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "stiefel_sync/diagnostics.hpp"
#include "stiefel_sync/dynamics.hpp"

namespace stsync {

struct IntegratorConfig {
    double dt = 1e-3;
    double horizon = 1.0;
    std::size_t record_every = 1;
    double drift_repair = kDriftTolerance;  ///< retraction trigger
    double drift_fail = 1e-6;               ///< abort threshold

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ParameterError("IntegratorConfig: dt must be positive");
        if (!(horizon > 0.0) || !std::isfinite(horizon)) {
            throw ParameterError("IntegratorConfig: horizon must be positive");
        }
        if (!(dt <= horizon)) throw ParameterError("IntegratorConfig: dt must not exceed the horizon");
        if (record_every < 1) throw ParameterError("IntegratorConfig: record_every must be at least 1");
        if (!(drift_repair > 0.0 && drift_repair < drift_fail)) {
            throw ParameterError("IntegratorConfig: need 0 < drift_repair < drift_fail");
        }
    }

    /// Number of steps; the horizon is rounded to the nearest multiple of dt.
    std::size_t steps() const {
        return static_cast<std::size_t>(std::llround(horizon / dt));
    }
};

namespace detail {

inline Ensemble axpy(const Ensemble& e, double h, const EnsembleRates& r) {
    Ensemble out;
    out.states.resize(e.states.size());
    for (std::size_t i = 0; i < e.states.size(); ++i) out.states[i] = e.states[i] + h * r.dstates[i];
    if (e.second_order()) {
        out.velocities.resize(e.velocities.size());
        for (std::size_t i = 0; i < e.velocities.size(); ++i) {
            out.velocities[i] = e.velocities[i] + h * r.dvelocities[i];
        }
    }
    return out;
}

inline bool all_finite(const EnsembleRates& r) {
    for (const auto& m : r.dstates) if (!m.allFinite()) return false;
    for (const auto& m : r.dvelocities) if (!m.allFinite()) return false;
    return true;
}

}  // namespace detail

/// Rate function of the first-order flow, in the form step_rk4 expects.
inline auto first_order_rhs(const ModelParams& params, const Topology& topo) {
    return [&params, &topo](const Ensemble& e) {
        EnsembleRates r;
        r.dstates = rhs_first_order(e, params, topo);
        return r;
    };
}

/// Rate function of the second-order flow (no tangency check at RK stages).
inline auto second_order_rhs(const ModelParams& params, const Topology& topo) {
    detail::check_second_order_params(params, "second_order_rhs");
    return [&params, &topo](const Ensemble& e) { return detail::second_order_rates(e, params, topo); };
}

/// One classical four-stage Runge-Kutta step; no retraction inside the step.
template <class Rhs>
Ensemble step_rk4(const Ensemble& e, Rhs&& rhs, double dt, double t = 0.0) {
    const auto checked = [&](const Ensemble& y) {
        EnsembleRates r = rhs(y);
        if (!detail::all_finite(r)) {
            throw NumericalBlowupError("step_rk4: non-finite rate at t = " + std::to_string(t), t);
        }
        return r;
    };
    const EnsembleRates k1 = checked(e);
    const EnsembleRates k2 = checked(detail::axpy(e, 0.5 * dt, k1));
    const EnsembleRates k3 = checked(detail::axpy(e, 0.5 * dt, k2));
    const EnsembleRates k4 = checked(detail::axpy(e, dt, k3));
    Ensemble out = e;
    const double w = dt / 6.0;
    for (std::size_t i = 0; i < out.states.size(); ++i) {
        out.states[i] += w * (k1.dstates[i] + 2.0 * k2.dstates[i] + 2.0 * k3.dstates[i] + k4.dstates[i]);
    }
    for (std::size_t i = 0; i < out.velocities.size(); ++i) {
        out.velocities[i] +=
            w * (k1.dvelocities[i] + 2.0 * k2.dvelocities[i] + 2.0 * k3.dvelocities[i] + k4.dvelocities[i]);
    }
    return out;
}

/// Classical RK4 step for plain vector states (used by the angle reduction).
template <class State, class Rhs>
State rk4_step(const State& y, Rhs&& f, double dt) {
    const State k1 = f(y);
    const State k2 = f(State(y + 0.5 * dt * k1));
    const State k3 = f(State(y + 0.5 * dt * k2));
    const State k4 = f(State(y + dt * k3));
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Advances E0 to the horizon. After every step each agent's drift is checked:
/// above drift_fail aborts, above drift_repair triggers a polar retraction
/// (and tangent re-projection of the velocity). A velocity whose tangency
/// residual exceeds drift_repair is re-projected as well. Samples are taken at
/// t = 0, every record_every steps, and at the final step.
inline Trajectory integrate(const Ensemble& e0, const ModelParams& params, const Topology& topo,
                            const IntegratorConfig& config) {
    config.validate();
    detail::check_model_shapes(e0, params, topo, "integrate");
    validate_ensemble(e0, config.drift_repair, config.drift_repair);

    const bool second = e0.second_order();
    if (second) detail::check_second_order_params(params, "integrate");

    Trajectory traj;
    traj.dt = config.dt;
    const auto record = [&](double t, const Ensemble& e) {
        traj.times.push_back(t);
        traj.ensembles.push_back(e);
        traj.diagnostics.push_back(compute_record(t, e, params, topo));
    };

    const std::size_t steps = config.steps();
    Ensemble e = e0;
    record(0.0, e);

    const auto first_rhs = [&](const Ensemble& y) {
        EnsembleRates r;
        r.dstates = coupling_terms(y.states, topo, params.kappa);
        for (std::size_t i = 0; i < r.dstates.size(); ++i) r.dstates[i].noalias() += y.states[i] * params.xis[i].matrix();
        return r;
    };
    const auto second_rhs = [&](const Ensemble& y) { return detail::second_order_rates(y, params, topo); };

    for (std::size_t step = 1; step <= steps; ++step) {
        const double t_prev = static_cast<double>(step - 1) * config.dt;
        const double t = static_cast<double>(step) * config.dt;
        e = second ? step_rk4(e, second_rhs, config.dt, t_prev) : step_rk4(e, first_rhs, config.dt, t_prev);

        for (std::size_t i = 0; i < e.states.size(); ++i) {
            if (!e.states[i].allFinite() || (second && !e.velocities[i].allFinite())) {
                throw NumericalBlowupError("integrate: non-finite state at t = " + std::to_string(t), t);
            }
            const double drift = frame_drift(e.states[i]);
            traj.max_drift_seen = std::max(traj.max_drift_seen, drift);
            if (drift > config.drift_fail) {
                throw DriftAbortError("integrate: agent " + std::to_string(i) + " drifted by " +
                                          std::to_string(drift) + " at t = " + std::to_string(t),
                                      t, i, drift);
            }
            bool repaired = false;
            if (drift > config.drift_repair) {
                e.states[i] = retract_polar(e.states[i]).matrix();
                repaired = true;
            }
            if (second) {
                const Matrix& s = e.states[i];
                const Matrix& v = e.velocities[i];
                const double residual = (v.transpose() * s + s.transpose() * v).norm();
                if (repaired || residual > config.drift_repair) {
                    e.velocities[i] = project_tangent(v, s);
                    repaired = true;
                }
            }
            if (repaired) ++traj.repairs;
        }

        if (step % config.record_every == 0 || step == steps) record(t, e);
    }
    return traj;
}

}  // namespace stsync
