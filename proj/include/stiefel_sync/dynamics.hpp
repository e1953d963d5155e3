#pragma once

// Right-hand sides of the first- and second-order consensus flows on St(p, n),
// the classical reductions (sphere, SO(n), planar Kuramoto), and the
// frequency-splitting transforms.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stiefel_sync/network.hpp"
#include "stiefel_sync/stiefel_core.hpp"

namespace stsync {

/// N agents on a common St(p, n). Velocities are present iff second order.
struct Ensemble {
    std::vector<Matrix> states;
    std::vector<Matrix> velocities;

    bool second_order() const noexcept { return !velocities.empty(); }
    Index agents() const noexcept { return static_cast<Index>(states.size()); }
    Index n() const { return states.empty() ? 0 : states.front().rows(); }
    Index p() const { return states.empty() ? 0 : states.front().cols(); }
};

struct ModelParams {
    double kappa = 1.0;  ///< coupling strength
    double m = 0.0;      ///< inertia; must be positive for the second-order flow
    double gamma = 1.0;  ///< friction
    std::vector<FrequencyMatrix> xis;

    /// max_i ||Xi_i||_F
    double xi_inf() const {
        double out = 0.0;
        for (const auto& xi : xis) out = std::max(out, xi.norm());
        return out;
    }
};

/// Time derivatives of an Ensemble. `dvelocities` is empty for first-order flows.
struct EnsembleRates {
    std::vector<Matrix> dstates;
    std::vector<Matrix> dvelocities;
};

namespace detail {

inline void check_ensemble_shapes(const Ensemble& e, const char* op) {
    if (e.states.empty()) {
        throw DimensionError(std::string(op) + ": ensemble is empty");
    }
    const Index n = e.n();
    const Index p = e.p();
    require_frame_shape(n, p, op);
    for (const auto& s : e.states) {
        if (s.rows() != n || s.cols() != p) {
            throw DimensionError(std::string(op) + ": agents do not share a common (n, p)");
        }
    }
    if (e.second_order()) {
        if (e.velocities.size() != e.states.size()) {
            throw DimensionError(std::string(op) + ": velocity count does not match state count");
        }
        for (const auto& v : e.velocities) {
            if (v.rows() != n || v.cols() != p) {
                throw DimensionError(std::string(op) + ": velocity shape differs from state shape");
            }
        }
    }
}

inline void check_model_shapes(const Ensemble& e, const ModelParams& params, const Topology& topo,
                               const char* op) {
    check_ensemble_shapes(e, op);
    if (topo.size() != e.agents()) {
        throw DimensionError(std::string(op) + ": topology has " + std::to_string(topo.size()) +
                             " agents, ensemble has " + std::to_string(e.agents()));
    }
    if (static_cast<Index>(params.xis.size()) != e.agents()) {
        throw DimensionError(std::string(op) + ": expected one frequency matrix per agent");
    }
    for (const auto& xi : params.xis) {
        if (xi.p() != e.p()) {
            throw DimensionError(std::string(op) + ": frequency matrix must be p x p");
        }
    }
}

}  // namespace detail

/// Verifies the manifold constraint on every state and, when present, the
/// tangency of every velocity. Throws ContractError on violation.
inline void validate_ensemble(const Ensemble& e, double drift_tol = kDriftTolerance,
                              double tangency_tol = kTangencyTolerance) {
    detail::check_ensemble_shapes(e, "validate_ensemble");
    for (std::size_t i = 0; i < e.states.size(); ++i) {
        const double drift = frame_drift(e.states[i]);
        if (drift > drift_tol) {
            throw ContractError("validate_ensemble: agent " + std::to_string(i) + " has drift " +
                                std::to_string(drift));
        }
        if (e.second_order()) {
            const Matrix c = e.velocities[i].transpose() * e.states[i] +
                             e.states[i].transpose() * e.velocities[i];
            if (c.norm() > tangency_tol) {
                throw ContractError("validate_ensemble: velocity of agent " + std::to_string(i) +
                                    " violates the tangency constraint (" + std::to_string(c.norm()) +
                                    ")");
            }
        }
    }
}

/// Coupling force on every agent:
///   (kappa/N) sum_k a_ik [S_k - (S_i S_i^T S_k + S_i S_k^T S_i) / 2].
/// Evaluated as (kappa/N) [C_i - S_i sym(S_i^T C_i)] with C_i = sum_k a_ik S_k,
/// which is the same polynomial in the states; k runs in ascending order.
inline std::vector<Matrix> coupling_terms(const std::vector<Matrix>& states, const Topology& topo,
                                          double kappa) {
    const Index n_agents = static_cast<Index>(states.size());
    const double weight = kappa / static_cast<double>(n_agents);
    std::vector<Matrix> out(states.size());
    Matrix c(states.front().rows(), states.front().cols());
    for (Index i = 0; i < n_agents; ++i) {
        c.setZero();
        for (Index k = 0; k < n_agents; ++k) {
            c.noalias() += topo(i, k) * states[k];
        }
        const Matrix& s = states[i];
        const Matrix g = s.transpose() * c;
        out[i] = weight * (c - s * (0.5 * (g + g.transpose())));
    }
    return out;
}

/// dS_i/dt = S_i Xi_i + coupling_i.
inline std::vector<Matrix> rhs_first_order(const Ensemble& e, const ModelParams& params,
                                           const Topology& topo) {
    detail::check_model_shapes(e, params, topo, "rhs_first_order");
    std::vector<Matrix> out = coupling_terms(e.states, topo, params.kappa);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].noalias() += e.states[i] * params.xis[i].matrix();
    }
    return out;
}

namespace detail {

// No tangency check: intermediate Runge-Kutta stages are slightly off the
// constraint by construction.
inline EnsembleRates second_order_rates(const Ensemble& e, const ModelParams& params,
                                        const Topology& topo) {
    const double m = params.m;
    const double gamma = params.gamma;
    EnsembleRates rates;
    rates.dstates = e.velocities;
    rates.dvelocities = coupling_terms(e.states, topo, params.kappa);
    for (std::size_t i = 0; i < e.states.size(); ++i) {
        const Matrix& s = e.states[i];
        const Matrix& v = e.velocities[i];
        const Matrix& xi = params.xis[i].matrix();
        Matrix force = rates.dvelocities[i];
        force.noalias() -= m * (s * (v.transpose() * v));
        force.noalias() -= gamma * v;
        force.noalias() += s * xi;
        Matrix inertial = 2.0 * (v * xi);
        inertial.noalias() -= s * (xi * (s.transpose() * v));
        inertial.noalias() += s * ((v.transpose() * s) * xi);
        force.noalias() += (m / gamma) * inertial;
        rates.dvelocities[i] = force / m;
    }
    return rates;
}

inline void check_second_order_params(const ModelParams& params, const char* op) {
    if (!(params.m > 0.0)) {
        throw ParameterError(std::string(op) + ": mass must be positive (use the first-order flow for m = 0)");
    }
    if (!(params.gamma > 0.0)) {
        throw ParameterError(std::string(op) + ": friction must be positive");
    }
}

}  // namespace detail

/// Position and velocity rates of the second-order flow. The acceleration is
///   S_i'' = ( -m S_i V_i^T V_i - gamma V_i + S_i Xi_i
///             + (m/gamma)(2 V_i Xi_i - S_i Xi_i S_i^T V_i + S_i V_i^T S_i Xi_i)
///             + coupling_i ) / m
/// with V_i = S_i'. Throws ContractError when a velocity is not tangent.
inline EnsembleRates rhs_second_order(const Ensemble& e, const ModelParams& params, const Topology& topo,
                                      double tangency_tol = kTangencyTolerance) {
    detail::check_model_shapes(e, params, topo, "rhs_second_order");
    if (!e.second_order()) {
        throw ContractError("rhs_second_order: ensemble carries no velocities");
    }
    detail::check_second_order_params(params, "rhs_second_order");
    for (std::size_t i = 0; i < e.states.size(); ++i) {
        const Matrix c = e.velocities[i].transpose() * e.states[i] +
                         e.states[i].transpose() * e.velocities[i];
        if (c.norm() > tangency_tol) {
            throw ContractError("rhs_second_order: velocity of agent " + std::to_string(i) +
                                " is not tangent (residual " + std::to_string(c.norm()) + ")");
        }
    }
    return detail::second_order_rates(e, params, topo);
}

/// S_i^T S_i' = Xi_i + (kappa/2N) sum_k a_ik (S_i^T S_k - S_k^T S_i); skew-symmetric.
inline std::vector<Matrix> reduced_velocity(const Ensemble& e, const ModelParams& params,
                                            const Topology& topo) {
    detail::check_model_shapes(e, params, topo, "reduced_velocity");
    const Index n_agents = e.agents();
    const double weight = params.kappa / (2.0 * static_cast<double>(n_agents));
    std::vector<Matrix> out(e.states.size());
    for (Index i = 0; i < n_agents; ++i) {
        Matrix acc = Matrix::Zero(e.p(), e.p());
        for (Index k = 0; k < n_agents; ++k) {
            const Matrix g = e.states[i].transpose() * e.states[k];
            acc += topo(i, k) * (g - g.transpose());
        }
        out[i] = params.xis[i].matrix() + weight * acc;
    }
    return out;
}

/// Sphere model x_i' = Omega_i x_i + (kappa/N)(I - x_i x_i^T) sum_j a_ij x_j.
/// `omegas` may be empty (no left frequencies).
inline std::vector<Vector> rhs_sphere(const std::vector<Vector>& x, const std::vector<Matrix>& omegas,
                                      const Topology& topo, double kappa) {
    const Index n_agents = static_cast<Index>(x.size());
    if (n_agents == 0 || topo.size() != n_agents) {
        throw DimensionError("rhs_sphere: agent count does not match topology");
    }
    if (!omegas.empty() && static_cast<Index>(omegas.size()) != n_agents) {
        throw DimensionError("rhs_sphere: expected one Omega per agent");
    }
    const Index dim = x.front().size();
    for (Index i = 0; i < n_agents; ++i) {
        if (x[i].size() != dim) {
            throw DimensionError("rhs_sphere: vectors differ in dimension");
        }
        if (std::abs(x[i].norm() - 1.0) > kDriftTolerance) {
            throw ContractError("rhs_sphere: x_" + std::to_string(i) + " is not a unit vector");
        }
    }
    const double weight = kappa / static_cast<double>(n_agents);
    std::vector<Vector> out(x.size());
    for (Index i = 0; i < n_agents; ++i) {
        Vector sum = Vector::Zero(dim);
        for (Index j = 0; j < n_agents; ++j) sum += topo(i, j) * x[j];
        out[i] = weight * (sum - x[i] * x[i].dot(sum));
        if (!omegas.empty()) {
            if (omegas[i].rows() != dim || omegas[i].cols() != dim) {
                throw DimensionError("rhs_sphere: Omega must be n x n");
            }
            out[i] += omegas[i] * x[i];
        }
    }
    return out;
}

/// Planar Kuramoto theta_i' = nu_i + (kappa/N) sum_j a_ij sin(theta_j - theta_i).
inline Vector rhs_kuramoto(const Vector& theta, const Vector& nu, const Topology& topo, double kappa) {
    const Index n_agents = theta.size();
    if (nu.size() != n_agents || topo.size() != n_agents) {
        throw DimensionError("rhs_kuramoto: sizes of theta, nu and topology differ");
    }
    const double weight = kappa / static_cast<double>(n_agents);
    Vector out(n_agents);
    for (Index i = 0; i < n_agents; ++i) {
        double acc = 0.0;
        for (Index j = 0; j < n_agents; ++j) acc += topo(i, j) * std::sin(theta(j) - theta(i));
        out(i) = nu(i) + weight * acc;
    }
    return out;
}

/// Rotation model R_i' = Omega_i R_i + (kappa/N) sum_j a_ij R_i skew(R_i^T R_j).
inline std::vector<Matrix> rhs_so_n(const std::vector<Matrix>& rotations, const std::vector<Matrix>& omegas,
                                    const Topology& topo, double kappa) {
    const Index n_agents = static_cast<Index>(rotations.size());
    if (n_agents == 0 || topo.size() != n_agents) {
        throw DimensionError("rhs_so_n: agent count does not match topology");
    }
    if (!omegas.empty() && static_cast<Index>(omegas.size()) != n_agents) {
        throw DimensionError("rhs_so_n: expected one Omega per agent");
    }
    for (Index i = 0; i < n_agents; ++i) {
        const Matrix& r = rotations[i];
        if (r.rows() != r.cols() || r.rows() != rotations.front().rows()) {
            throw DimensionError("rhs_so_n: rotations must share a square shape");
        }
        if (frame_drift(r) > kDriftTolerance) {
            throw ContractError("rhs_so_n: R_" + std::to_string(i) + " is not orthogonal");
        }
    }
    const double weight = kappa / static_cast<double>(n_agents);
    std::vector<Matrix> out(rotations.size());
    for (Index i = 0; i < n_agents; ++i) {
        const Matrix& r = rotations[i];
        Matrix acc = Matrix::Zero(r.rows(), r.cols());
        for (Index j = 0; j < n_agents; ++j) {
            acc += topo(i, j) * skew(r.transpose() * rotations[j]);
        }
        out[i] = weight * (r * acc);
        if (!omegas.empty()) out[i] += omegas[i] * r;
    }
    return out;
}

/// Rotated variable S e^{-t Xi} (order 1) or S e^{-t Xi / gamma} (order 2).
inline StiefelPoint split_transform(const Matrix& s, const FrequencyMatrix& xi, double t, int order,
                                    double gamma = 1.0) {
    if (order != 1 && order != 2) {
        throw ParameterError("split_transform: order must be 1 or 2, got " + std::to_string(order));
    }
    if (xi.p() != s.cols()) {
        throw DimensionError("split_transform: frequency matrix must be p x p");
    }
    double rate = 1.0;
    if (order == 2) {
        if (!(gamma > 0.0)) throw ParameterError("split_transform: friction must be positive");
        rate = 1.0 / gamma;
    }
    return StiefelPoint(s * exp_skew(xi, -rate * t));
}

/// Admissible initial velocity: scale * project_tangent(raw, S).
inline Matrix make_tangent_velocity(const Matrix& s, const Matrix& raw, double scale) {
    return scale * project_tangent(raw, s);
}

/// L S_i (and L V_i) for every agent.
inline Ensemble left_translate(const Ensemble& e, const Matrix& l) {
    Ensemble out;
    out.states.reserve(e.states.size());
    for (const auto& s : e.states) out.states.push_back(l * s);
    for (const auto& v : e.velocities) out.velocities.push_back(l * v);
    return out;
}

}  // namespace stsync
