#pragma once

// Cooperative interaction networks and the scalar statistics derived from them.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stiefel_sync/stiefel_core.hpp"

namespace stsync {

/// Symmetric, strictly positive N x N weight matrix a_ik.
class Topology {
public:
    explicit Topology(Matrix weights) : a_(std::move(weights)) {
        if (a_.rows() < 1 || a_.rows() != a_.cols()) {
            throw DimensionError("Topology: weights must be a non-empty square matrix, got " +
                                 detail::shape(a_));
        }
        for (Index i = 0; i < a_.rows(); ++i) {
            for (Index k = 0; k < a_.cols(); ++k) {
                if (!std::isfinite(a_(i, k)) || a_(i, k) <= 0.0) {
                    throw ContractError("Topology: weight a(" + std::to_string(i) + "," +
                                        std::to_string(k) + ") must be finite and positive");
                }
                if (a_(i, k) != a_(k, i)) {
                    throw ContractError("Topology: weights are not symmetric at (" + std::to_string(i) +
                                        "," + std::to_string(k) + ")");
                }
            }
        }
    }

    Index size() const noexcept { return a_.rows(); }
    double operator()(Index i, Index k) const { return a_(i, k); }
    const Matrix& weights() const noexcept { return a_; }

private:
    Matrix a_;
};

inline Topology all_to_all(Index n_agents) {
    if (n_agents < 1) {
        throw ParameterError("all_to_all: agent count must be at least 1");
    }
    return Topology(Matrix::Ones(n_agents, n_agents));
}

struct TopologyStats {
    double a_m = 0.0;       ///< min weight
    double a_M = 0.0;       ///< max weight
    double dA = 0.0;        ///< max over (i, j, k) of |a_ik - a_jk|
    Vector xi;              ///< row averages (1/N) sum_k a_ik
    double Lambda = 0.0;    ///< a_m - (N-1)/N (a_M + dA)
    bool xi_constant = false;

    /// 0 < Lambda < 8 p a_M^2, the window in which the locking threshold is defined.
    bool lambda_admissible(Index p) const {
        return Lambda > 0.0 && Lambda < 8.0 * static_cast<double>(p) * a_M * a_M;
    }

    /// Common row average; meaningful only when xi_constant holds.
    double xi_common() const { return xi.size() ? xi(0) : 0.0; }
};

inline TopologyStats compute_stats(const Topology& topo) {
    const Matrix& a = topo.weights();
    const Index n = topo.size();
    TopologyStats s;
    s.a_m = a.minCoeff();
    s.a_M = a.maxCoeff();
    // For a fixed column k the largest |a_ik - a_jk| is the column range.
    s.dA = 0.0;
    for (Index k = 0; k < n; ++k) {
        s.dA = std::max(s.dA, a.col(k).maxCoeff() - a.col(k).minCoeff());
    }
    s.xi = a.rowwise().sum() / static_cast<double>(n);
    const double nn = static_cast<double>(n);
    s.Lambda = s.a_m - (nn - 1.0) / nn * (s.a_M + s.dA);
    const double spread = s.xi.maxCoeff() - s.xi.minCoeff();
    s.xi_constant = spread <= 1e-12 * std::max(1.0, s.xi.cwiseAbs().maxCoeff());
    return s;
}

}  // namespace stsync
