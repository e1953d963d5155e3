#pragma once

// Initial-condition generators for scenario runs.

#include <cmath>
#include <vector>

#include "stiefel_sync/diagnostics.hpp"
#include "stiefel_sync/dynamics.hpp"

namespace stsync {

namespace detail {

// Unit-norm tangent direction at c.
inline Matrix unit_tangent(const Matrix& c, Rng& rng) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        Matrix v = project_tangent(rng.gaussian(c.rows(), c.cols()), c);
        const double norm = v.norm();
        if (norm > 1e-8) return v / norm;
    }
    throw DegenerateInputError("unit_tangent: tangent space is trivial");
}

inline std::vector<Matrix> retract_around(const Matrix& c, const std::vector<Matrix>& offsets, double scale) {
    std::vector<Matrix> out;
    out.reserve(offsets.size());
    for (const auto& v : offsets) out.push_back(retract_polar(c + scale * v).matrix());
    return out;
}

}  // namespace detail

/// Random centre S* with tangent perturbations of size at most r, retracted.
/// D(S0) <= 2r: the polar retraction of S* + V moves no farther than ||V||.
inline std::vector<Matrix> clustered_states(Index n, Index p, Index agents, double radius, Rng& rng) {
    detail::require_frame_shape(n, p, "clustered_states");
    if (agents < 1 || !(radius >= 0.0)) {
        throw ParameterError("clustered_states: need at least one agent and a non-negative radius");
    }
    const Matrix c = random_stiefel(n, p, rng).matrix();
    std::vector<Matrix> offsets;
    for (Index i = 0; i < agents; ++i) offsets.push_back(rng.uniform() * detail::unit_tangent(c, rng));
    std::vector<Matrix> out = detail::retract_around(c, offsets, radius);
    const double d = diameter(out).value;
    if (d > 2.0 * radius * (1.0 + 1e-12)) {
        throw ContractError("clustered_states: generated diameter exceeds 2r");
    }
    return out;
}

/// Clustered states rescaled by bisection so that D(S0) equals `target`.
inline std::vector<Matrix> clustered_states_with_diameter(Index n, Index p, Index agents, double target,
                                                          Rng& rng) {
    detail::require_frame_shape(n, p, "clustered_states_with_diameter");
    if (agents < 2 || !(target > 0.0)) {
        throw ParameterError("clustered_states_with_diameter: need two agents and a positive target");
    }
    const Matrix c = random_stiefel(n, p, rng).matrix();
    std::vector<Matrix> offsets;
    for (Index i = 0; i < agents; ++i) {
        offsets.push_back((0.25 + 0.75 * rng.uniform()) * detail::unit_tangent(c, rng));
    }
    const auto diam = [&](double s) { return diameter(detail::retract_around(c, offsets, s)).value; };

    double lo = 0.0;
    double hi = target;
    int grow = 0;
    while (diam(hi) < target) {
        lo = hi;
        hi *= 2.0;
        if (++grow > 60) {
            throw DegenerateInputError("clustered_states_with_diameter: target diameter is not reachable");
        }
    }
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (diam(mid) < target ? lo : hi) = mid;
    }
    const double s = std::abs(diam(lo) - target) <= std::abs(diam(hi) - target) ? lo : hi;
    return detail::retract_around(c, offsets, s);
}

/// Independent random frames.
inline std::vector<Matrix> uniform_states(Index n, Index p, Index agents, Rng& rng) {
    std::vector<Matrix> out;
    for (Index i = 0; i < agents; ++i) out.push_back(random_stiefel(n, p, rng).matrix());
    return out;
}

/// scale * (tangent projection of a Gaussian matrix) at every state.
inline std::vector<Matrix> tangent_velocities(const std::vector<Matrix>& states, double scale, Rng& rng) {
    std::vector<Matrix> out;
    for (const auto& s : states) out.push_back(make_tangent_velocity(s, rng.gaussian(s.rows(), s.cols()), scale));
    return out;
}

/// Independent random frequencies rescaled so that max_i ||Xi_i||_F = xi_inf.
/// For p = 1 every frequency is zero.
inline std::vector<FrequencyMatrix> heterogeneous_frequencies(Index p, Index agents, double xi_inf, Rng& rng) {
    std::vector<FrequencyMatrix> out;
    for (Index i = 0; i < agents; ++i) out.push_back(random_skew(p, 1.0, rng));
    double largest = 0.0;
    for (const auto& xi : out) largest = std::max(largest, xi.norm());
    for (auto& xi : out) xi = largest > 0.0 ? FrequencyMatrix(xi.matrix() * (xi_inf / largest)) : FrequencyMatrix::zero(p);
    return out;
}

/// One random frequency of Frobenius norm `norm`, shared by all agents.
inline std::vector<FrequencyMatrix> common_frequency(Index p, Index agents, double norm, Rng& rng) {
    const auto one = heterogeneous_frequencies(p, 1, norm, rng);
    return std::vector<FrequencyMatrix>(static_cast<std::size_t>(agents), one.front());
}

}  // namespace stsync
