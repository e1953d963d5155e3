#pragma once

// Functionals along solutions (diameters, averaged distances, energies),
// the analytic locking thresholds and second-order Gronwall bounds they are
// compared against, and post-hoc checks over recorded trajectories.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "stiefel_sync/dynamics.hpp"
#include "stiefel_sync/network.hpp"
#include "stiefel_sync/stiefel_core.hpp"

namespace stsync {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One diagnostic sample. Second-order-only fields are NaN for first-order runs.
struct DiagnosticsRecord {
    double t = 0.0;
    double D = 0.0;      ///< max_{i,j} ||S_i - S_j||_F
    double Dvel = kNaN;  ///< max_i ||S_i'||_F
    double G = 0.0;      ///< (1/N^2) sum_{i,j} ||S_i - S_j||_F^2
    double K = kNaN;
    double L = kNaN;
    double E = kNaN;
    double maxDrift = 0.0;
    double XiInf = 0.0;
};

inline constexpr const char* kCsvSchemaLine = "# stsync diagnostics csv v1";
inline constexpr const char* kCsvHeader = "t,D,Dvel,G,K,L,E,maxDrift";

inline void write_csv_header(std::ostream& os) {
    os << kCsvSchemaLine << '\n' << kCsvHeader << '\n';
}

inline void write_csv_row(std::ostream& os, const DiagnosticsRecord& r) {
    const auto put = [&os](double v) {
        if (std::isnan(v)) {
            os << "nan";
        } else {
            os << v;
        }
    };
    const auto precision = os.precision(17);
    put(r.t); os << ',';
    put(r.D); os << ',';
    put(r.Dvel); os << ',';
    put(r.G); os << ',';
    put(r.K); os << ',';
    put(r.L); os << ',';
    put(r.E); os << ',';
    put(r.maxDrift); os << '\n';
    os.precision(precision);
}

struct Diameter {
    double value = 0.0;
    Index i = 0;
    Index j = 0;
};

/// Largest pairwise Frobenius distance; ties go to the lexicographically smallest (i, j).
inline Diameter diameter(const std::vector<Matrix>& states) {
    Diameter d;
    const Index n = static_cast<Index>(states.size());
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            const double dist = (states[i] - states[j]).norm();
            if (dist > d.value) {
                d = {dist, i, j};
            }
        }
    }
    return d;
}

inline Diameter diameter(const Ensemble& e) { return diameter(e.states); }

/// max_i ||V_i||_F
inline double velocity_diameter(const Ensemble& e) {
    double out = 0.0;
    for (const auto& v : e.velocities) out = std::max(out, v.norm());
    return out;
}

/// H_ij = I_p - S_i^T S_j
inline Matrix gram_defect(const Matrix& si, const Matrix& sj) {
    detail::require_same_shape(si, sj, "gram_defect");
    return Matrix::Identity(si.cols(), si.cols()) - si.transpose() * sj;
}

/// tr(H_ij + H_ji); equals ||S_i - S_j||_F^2 on the manifold.
inline double gram_defect_trace(const Matrix& si, const Matrix& sj) {
    return (gram_defect(si, sj) + gram_defect(sj, si)).trace();
}

inline double g_functional(const std::vector<Matrix>& states) {
    const std::size_t n = states.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            acc += (states[i] - states[j]).squaredNorm();
        }
    }
    return acc / static_cast<double>(n * n);
}

inline double g_functional(const Ensemble& e) { return g_functional(e.states); }

struct EnergyParts {
    double K = 0.0;  ///< (m/N) sum_i ||V_i||^2
    double L = 0.0;  ///< (kappa/2N^2) sum_{i,j} a_ij ||S_i - S_j||^2
    double E = 0.0;
};

inline EnergyParts energy(const Ensemble& e, const ModelParams& params, const Topology& topo) {
    if (!e.second_order()) {
        throw ContractError("energy: ensemble carries no velocities");
    }
    detail::check_ensemble_shapes(e, "energy");
    if (topo.size() != e.agents()) {
        throw DimensionError("energy: topology size differs from agent count");
    }
    const Index n = e.agents();
    const double nn = static_cast<double>(n);
    EnergyParts out;
    double kin = 0.0;
    for (const auto& v : e.velocities) kin += v.squaredNorm();
    out.K = params.m / nn * kin;
    double pot = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            pot += topo(i, j) * (e.states[i] - e.states[j]).squaredNorm();
        }
    }
    out.L = params.kappa / (2.0 * nn * nn) * pot;
    out.E = out.K + out.L;
    return out;
}

/// Right side of the energy balance:
///   -(2 gamma/N) sum ||V_i||^2 + (1/N) sum tr(V_i^T S_i Xi_i - Xi_i S_i^T V_i).
inline double energy_dissipation_rhs(const Ensemble& e, const ModelParams& params) {
    if (!e.second_order()) {
        throw ContractError("energy_dissipation_rhs: ensemble carries no velocities");
    }
    if (params.xis.size() != e.states.size()) {
        throw DimensionError("energy_dissipation_rhs: expected one frequency matrix per agent");
    }
    const double nn = static_cast<double>(e.agents());
    double friction = 0.0;
    double rotation = 0.0;
    for (std::size_t i = 0; i < e.states.size(); ++i) {
        const Matrix& s = e.states[i];
        const Matrix& v = e.velocities[i];
        const Matrix& xi = params.xis[i].matrix();
        friction += v.squaredNorm();
        rotation += (v.transpose() * s * xi - xi * s.transpose() * v).trace();
    }
    return -2.0 * params.gamma / nn * friction + rotation / nn;
}

/// max_{i,j} ||S_i^T S_j - S~_i^T S~_j||_F over all ordered pairs.
inline double inter_diameter(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw DimensionError("inter_diameter: ensembles differ in agent count");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        detail::require_same_shape(a[i], b[i], "inter_diameter");
    }
    double out = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            const double d = (a[i].transpose() * a[j] - b[i].transpose() * b[j]).norm();
            out = std::max(out, d);
        }
    }
    return out;
}

inline double inter_diameter(const Ensemble& a, const Ensemble& b) {
    return inter_diameter(a.states, b.states);
}

inline double max_drift(const Ensemble& e) {
    double out = 0.0;
    for (const auto& s : e.states) out = std::max(out, frame_drift(s));
    return out;
}

inline DiagnosticsRecord compute_record(double t, const Ensemble& e, const ModelParams& params,
                                        const Topology& topo) {
    DiagnosticsRecord r;
    r.t = t;
    r.D = diameter(e).value;
    r.G = g_functional(e);
    r.maxDrift = max_drift(e);
    r.XiInf = params.xi_inf();
    if (e.second_order()) {
        r.Dvel = velocity_diameter(e);
        const EnergyParts parts = energy(e, params, topo);
        r.K = parts.K;
        r.L = parts.L;
        r.E = parts.E;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Locking thresholds for heterogeneous first-order ensembles.

struct LockThresholds {
    double kappa_star = 0.0;    ///< 16 p^2 a_M^3 |Xi| / (a_m (8 p a_M^2 Lambda - Lambda^3))
    double kappa_min = 0.0;     ///< max(sqrt(6p)/9 |Xi| / a_m, kappa_star)
    bool kappa_condition = false;
    double c0 = 0.0;            ///< 2 sqrt(p) |Xi| / (kappa a_m)
    bool roots_exist = false;
    double alpha = kNaN;        ///< root in [0, sqrt(2/3)]
    double beta = kNaN;         ///< root in [sqrt(2/3), sqrt(2)]
    double lambda_bound = 0.0;  ///< Lambda / (2 a_M sqrt(p))
    bool alpha_below_lambda_bound = false;

    /// Contraction rate 2 kappa (Lambda - 2 a_M sqrt(p) alpha) of the inter-diameter.
    double contraction_rate(double kappa, double Lambda, double a_M, Index p) const {
        return 2.0 * kappa * (Lambda - 2.0 * a_M * std::sqrt(static_cast<double>(p)) * alpha);
    }
};

inline double lock_cubic(double r, double c0) { return r * r * r - 2.0 * r + c0; }

namespace detail {

// Root of the cubic in [lo, hi] given sign(f(lo)) != sign(f(hi)).
inline double bisect_cubic(double lo, double hi, double c0) {
    double f_lo = lock_cubic(lo, c0);
    if (f_lo == 0.0) return lo;
    if (lock_cubic(hi, c0) == 0.0) return hi;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = lock_cubic(mid, c0);
        if (f_mid == 0.0) return mid;
        if ((f_mid > 0.0) == (f_lo > 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

inline LockThresholds lock_thresholds(Index p, double a_m, double a_M, double Lambda, double xi_inf,
                                      double kappa) {
    const double pp = static_cast<double>(p);
    if (!(Lambda > 0.0 && Lambda < 8.0 * pp * a_M * a_M)) {
        throw ParameterError("lock_thresholds: Lambda = " + std::to_string(Lambda) +
                             " lies outside (0, 8 p a_M^2)");
    }
    if (!(kappa > 0.0) || !(a_m > 0.0) || !(xi_inf >= 0.0)) {
        throw ParameterError("lock_thresholds: kappa and a_m must be positive, |Xi| non-negative");
    }
    LockThresholds out;
    out.kappa_star = 16.0 * pp * pp * a_M * a_M * a_M * xi_inf /
                     (a_m * (8.0 * pp * a_M * a_M * Lambda - Lambda * Lambda * Lambda));
    out.kappa_min = std::max(std::sqrt(6.0 * pp) / 9.0 * xi_inf / a_m, out.kappa_star);
    out.kappa_condition = kappa > out.kappa_min;
    out.c0 = 2.0 * std::sqrt(pp) * xi_inf / (kappa * a_m);
    out.lambda_bound = Lambda / (2.0 * a_M * std::sqrt(pp));

    const double r_star = std::sqrt(2.0 / 3.0);
    const double f_min = lock_cubic(r_star, out.c0);
    constexpr double kDoubleRootTol = 1e-14;
    if (f_min > kDoubleRootTol) {
        out.roots_exist = false;
        return out;
    }
    out.roots_exist = true;
    if (f_min >= -kDoubleRootTol) {
        out.alpha = r_star;
        out.beta = r_star;
    } else {
        out.alpha = detail::bisect_cubic(0.0, r_star, out.c0);
        out.beta = detail::bisect_cubic(r_star, std::sqrt(2.0), out.c0);
    }
    out.alpha_below_lambda_bound = out.alpha < out.lambda_bound;
    return out;
}

// ---------------------------------------------------------------------------
// Second-order Gronwall bounds for a y'' + b y' + c y <= eps0.

struct GronwallBound {
    double bound = 0.0;    ///< upper bound on y(t)
    double limsup = 0.0;   ///< eps0/c (overdamped) or 4 a eps0 / b^2 (underdamped)
    bool overdamped = false;
};

/// The overdamped bound carries a free constant `d` in its e^{-nu1 t} term;
/// it is taken as d = eps0.
inline GronwallBound gronwall_bound(double a, double b, double c, double eps0, double y0, double yprime0,
                                    double t) {
    if (!(a > 0.0 && b > 0.0 && c > 0.0)) {
        throw ParameterError("gronwall_bound: a, b, c must be positive");
    }
    if (!(eps0 >= 0.0)) {
        throw ParameterError("gronwall_bound: eps0 must be non-negative");
    }
    const double disc = b * b - 4.0 * a * c;
    if (std::abs(disc) <= 1e-14 * b * b) {
        throw ParameterError("gronwall_bound: critically damped case b^2 = 4ac is not covered");
    }
    GronwallBound out;
    if (disc > 0.0) {
        const double root = std::sqrt(disc);
        const double nu1 = (b + root) / (2.0 * a);
        const double nu2 = (b - root) / (2.0 * a);
        const double d = eps0;
        out.overdamped = true;
        out.limsup = eps0 / c;
        out.bound = eps0 / c + (y0 + d / c) * std::exp(-nu1 * t) +
                    a / root * (yprime0 + nu1 * y0 - 2.0 * eps0 / (b - root)) *
                        (std::exp(-nu2 * t) - std::exp(-nu1 * t));
    } else {
        const double level = 4.0 * a * eps0 / (b * b);
        const double rate = b / (2.0 * a);
        out.overdamped = false;
        out.limsup = level;
        out.bound = level + (y0 - level + (rate * y0 + yprime0 - 2.0 * eps0 / b) * t) * std::exp(-rate * t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Recorded solutions and checks over them.

struct Trajectory {
    std::vector<double> times;
    std::vector<Ensemble> ensembles;
    std::vector<DiagnosticsRecord> diagnostics;
    std::size_t repairs = 0;
    double max_drift_seen = 0.0;  ///< largest per-step drift before any repair
    double dt = 0.0;

    std::size_t size() const noexcept { return times.size(); }
    const Ensemble& final_ensemble() const { return ensembles.back(); }
};

namespace detail {

inline double uniform_spacing(const std::vector<double>& times, const char* op) {
    if (times.size() < 3) {
        throw ParameterError(std::string(op) + ": need at least three samples");
    }
    const double h = times[1] - times[0];
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double hk = times[k] - times[k - 1];
        if (std::abs(hk - h) > 1e-9 * h) {
            throw ParameterError(std::string(op) + ": samples are not uniformly spaced");
        }
    }
    return h;
}

}  // namespace detail

struct ResidualSeries {
    std::vector<double> times;
    std::vector<double> residuals;  ///< right side minus left side
    double min_residual = std::numeric_limits<double>::infinity();
};

/// Checks m G'' + gamma G' + 2 kappa xi G <= 16 m D(V)^2 + 8 |Xi| + (16 m sqrt(p) |Xi| / gamma) D(V)
/// with centered differences for G' and G'' at every interior sample.
inline ResidualSeries inequality_monitor_D25(const Trajectory& traj, const ModelParams& params,
                                             const Topology& topo) {
    const double h = detail::uniform_spacing(traj.times, "inequality_monitor_D25");
    const TopologyStats stats = compute_stats(topo);
    if (!stats.xi_constant) {
        throw ContractError("inequality_monitor_D25: row averages of the topology are not constant");
    }
    if (traj.ensembles.empty() || !traj.ensembles.front().second_order()) {
        throw ContractError("inequality_monitor_D25: trajectory is not second order");
    }
    const double xi = stats.xi_common();
    const double xi_inf = params.xi_inf();
    const double sqrt_p = std::sqrt(static_cast<double>(traj.ensembles.front().p()));
    std::vector<double> g(traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) g[k] = g_functional(traj.ensembles[k]);

    ResidualSeries out;
    for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
        const double g1 = (g[k + 1] - g[k - 1]) / (2.0 * h);
        const double g2 = (g[k + 1] - 2.0 * g[k] + g[k - 1]) / (h * h);
        const double lhs = params.m * g2 + params.gamma * g1 + 2.0 * params.kappa * xi * g[k];
        const double dv = velocity_diameter(traj.ensembles[k]);
        const double rhs = 16.0 * params.m * dv * dv + 8.0 * xi_inf +
                           16.0 * params.m * sqrt_p * xi_inf / params.gamma * dv;
        out.times.push_back(traj.times[k]);
        out.residuals.push_back(rhs - lhs);
        out.min_residual = std::min(out.min_residual, rhs - lhs);
    }
    return out;
}

struct VelocityBoundReport {
    bool pass = false;
    double bound = 0.0;         ///< max(max_i ||V_i(0)||, (|Xi| + kappa a_M sqrt(p)) / gamma)
    double steady_bound = 0.0;  ///< (|Xi| + kappa a_M sqrt(p)) / gamma
    double sup_velocity = 0.0;
    double time_of_sup = 0.0;
};

inline VelocityBoundReport velocity_bound_check(const Trajectory& traj, const ModelParams& params,
                                                const Topology& topo, double slack = 1e-8) {
    if (traj.ensembles.empty() || !traj.ensembles.front().second_order()) {
        throw ContractError("velocity_bound_check: trajectory is not second order");
    }
    const TopologyStats stats = compute_stats(topo);
    const double sqrt_p = std::sqrt(static_cast<double>(traj.ensembles.front().p()));
    VelocityBoundReport out;
    out.steady_bound = (params.xi_inf() + params.kappa * stats.a_M * sqrt_p) / params.gamma;
    out.bound = std::max(velocity_diameter(traj.ensembles.front()), out.steady_bound);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const double v = velocity_diameter(traj.ensembles[k]);
        if (v > out.sup_velocity) {
            out.sup_velocity = v;
            out.time_of_sup = traj.times[k];
        }
    }
    out.pass = out.sup_velocity <= out.bound + slack;
    return out;
}

// ---------------------------------------------------------------------------
// Phase locking by window differencing of the Gram matrices A_ij = S_i^T S_j.

struct PhaseLockVerdict {
    bool locked = false;
    std::string reason;
    double start_time = 0.0;
    std::vector<double> deltas;  ///< delta(n) = max_ij ||A_ij(t_n) - A_ij(t_{n-1})||_F
    double rho = kNaN;           ///< fitted per-window ratio
    double final_delta = kNaN;
    std::vector<Matrix> limits;  ///< A_ij at the last window, row-major in (i, j)
};

inline constexpr double kPhaseLockNoiseFloor = 1e-13;
inline constexpr std::size_t kPhaseLockMinWindows = 5;

inline std::vector<Matrix> gram_matrices(const std::vector<Matrix>& states) {
    std::vector<Matrix> out;
    out.reserve(states.size() * states.size());
    for (const auto& si : states) {
        for (const auto& sj : states) out.push_back(si.transpose() * sj);
    }
    return out;
}

inline PhaseLockVerdict phase_lock_detector(const Trajectory& traj, double window_T, double tol,
                                            double start_time = 0.0) {
    if (!(window_T > 0.0)) {
        throw ParameterError("phase_lock_detector: window must be positive");
    }
    if (traj.times.empty() || traj.times.back() - start_time < 2.0 * window_T - 1e-12) {
        throw ParameterError("phase_lock_detector: insufficient horizon for two windows");
    }
    // Sample indices at start_time + n * window_T.
    std::vector<std::size_t> idx;
    const double slack = 1e-9 * std::max(1.0, traj.times.back());
    std::size_t cursor = 0;
    for (int n = 0;; ++n) {
        const double target = start_time + n * window_T;
        if (target > traj.times.back() + slack) break;
        while (cursor < traj.size() && traj.times[cursor] < target - slack) ++cursor;
        if (cursor == traj.size() || std::abs(traj.times[cursor] - target) > slack) {
            throw ParameterError("phase_lock_detector: window boundaries do not fall on recorded samples");
        }
        idx.push_back(cursor);
    }

    PhaseLockVerdict out;
    out.start_time = start_time;
    std::vector<Matrix> prev = gram_matrices(traj.ensembles[idx.front()].states);
    for (std::size_t w = 1; w < idx.size(); ++w) {
        std::vector<Matrix> cur = gram_matrices(traj.ensembles[idx[w]].states);
        double delta = 0.0;
        for (std::size_t q = 0; q < cur.size(); ++q) delta = std::max(delta, (cur[q] - prev[q]).norm());
        out.deltas.push_back(delta);
        prev = std::move(cur);
    }
    out.limits = std::move(prev);
    out.final_delta = out.deltas.back();

    if (out.deltas.size() < kPhaseLockMinWindows) {
        out.reason = "fewer than " + std::to_string(kPhaseLockMinWindows) + " windows";
        return out;
    }
    // Windows above the round-off floor; once below it they must stay there.
    std::size_t significant = 0;
    while (significant < out.deltas.size() && out.deltas[significant] > kPhaseLockNoiseFloor) ++significant;
    for (std::size_t w = significant; w < out.deltas.size(); ++w) {
        if (out.deltas[w] > kPhaseLockNoiseFloor) {
            out.reason = "window differences rise again after reaching the noise floor";
            return out;
        }
    }
    for (std::size_t w = 1; w < significant; ++w) {
        if (out.deltas[w] > out.deltas[w - 1]) {
            out.reason = "window differences are not monotonically decreasing";
            return out;
        }
    }
    if (significant >= 2) {
        // Least-squares slope of log delta against the window index.
        const double count = static_cast<double>(significant);
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (std::size_t w = 0; w < significant; ++w) {
            const double x = static_cast<double>(w);
            const double y = std::log(out.deltas[w]);
            sx += x; sy += y; sxx += x * x; sxy += x * y;
        }
        const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
        out.rho = std::exp(slope);
    } else {
        out.rho = 0.0;
    }
    if (!(out.rho < 1.0)) {
        out.reason = "fitted window ratio is not below one";
        return out;
    }
    if (out.final_delta > tol) {
        out.reason = "final window difference above tolerance";
        return out;
    }
    out.locked = true;
    out.reason = "locked";
    return out;
}

}  // namespace stsync
