#pragma once

// Dense matrix primitives and the geometry of St(p, n) = { S : S^T S = I_p }.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "stiefel_sync/errors.hpp"
#include "stiefel_sync/random.hpp"

namespace stsync {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kDriftTolerance = 1e-9;
inline constexpr double kTangencyTolerance = 1e-10;
inline constexpr double kRankTolerance = 1e-12;

namespace detail {

inline std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_square(const Matrix& x, const char* op) {
    if (x.rows() != x.cols()) {
        throw DimensionError(std::string(op) + ": expected a square matrix, got " + shape(x));
    }
}

inline void require_frame_shape(Index n, Index p, const char* op) {
    if (p < 1 || n < 1) {
        throw DimensionError(std::string(op) + ": n and p must be positive");
    }
    if (p > n) {
        throw DimensionError(std::string(op) + ": frame size p=" + std::to_string(p) +
                             " exceeds ambient dimension n=" + std::to_string(n));
    }
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
    }
}

}  // namespace detail

/// Symmetric part (X + X^T) / 2.
inline Matrix sym(const Matrix& x) {
    detail::require_square(x, "sym");
    return 0.5 * (x + x.transpose());
}

/// Skew-symmetric part (X - X^T) / 2. Antisymmetry of the result is exact.
inline Matrix skew(const Matrix& x) {
    detail::require_square(x, "skew");
    return 0.5 * (x - x.transpose());
}

/// Orthonormality defect of a candidate frame.
struct DriftReport {
    double drift = 0.0;        ///< ||S^T S - I_p||_F
    double norm_defect = 0.0;  ///< | ||S||_F^2 - p |
    bool pass = false;         ///< drift <= tolerance
};

inline double frame_drift(const Matrix& s) {
    const Index p = s.cols();
    return (s.transpose() * s - Matrix::Identity(p, p)).norm();
}

inline DriftReport validate_stiefel(const Matrix& s, double tol = kDriftTolerance) {
    detail::require_frame_shape(s.rows(), s.cols(), "validate_stiefel");
    DriftReport report;
    report.drift = frame_drift(s);
    report.norm_defect = std::abs(s.squaredNorm() - static_cast<double>(s.cols()));
    report.pass = report.drift <= tol;
    return report;
}

/// An n x p matrix with orthonormal columns (validated on construction).
class StiefelPoint {
public:
    explicit StiefelPoint(Matrix s, double tol = kDriftTolerance) : s_(std::move(s)) {
        const DriftReport report = validate_stiefel(s_, tol);
        if (!report.pass) {
            throw ContractError("StiefelPoint: orthonormality drift " + std::to_string(report.drift) +
                                " exceeds tolerance " + std::to_string(tol));
        }
    }

    const Matrix& matrix() const noexcept { return s_; }
    operator const Matrix&() const noexcept { return s_; }  // NOLINT(google-explicit-constructor)
    Index n() const noexcept { return s_.rows(); }
    Index p() const noexcept { return s_.cols(); }

private:
    Matrix s_;
};

/// Generalized natural frequency: a p x p skew-symmetric matrix.
class FrequencyMatrix {
public:
    FrequencyMatrix() = default;

    /// Keeps only the skew part of `x`, so Xi + Xi^T == 0 holds bit-exactly.
    explicit FrequencyMatrix(const Matrix& x) : xi_(skew(x)) {}

    static FrequencyMatrix zero(Index p) { return FrequencyMatrix(Matrix::Zero(p, p)); }

    const Matrix& matrix() const noexcept { return xi_; }
    operator const Matrix&() const noexcept { return xi_; }  // NOLINT(google-explicit-constructor)
    Index p() const noexcept { return xi_.rows(); }
    double norm() const { return xi_.norm(); }

private:
    Matrix xi_;
};

/// ||sym(S^T V)||_F; zero iff V is tangent to the manifold at S.
inline double tangency_residual(const Matrix& s, const Matrix& v) {
    detail::require_same_shape(s, v, "tangency_residual");
    const Matrix g = s.transpose() * v;
    return (0.5 * (g + g.transpose())).norm();
}

/// Orthogonal projection onto the tangent space at S: X - S sym(S^T X).
inline Matrix project_tangent(const Matrix& x, const Matrix& s) {
    detail::require_same_shape(x, s, "project_tangent");
    const Matrix g = s.transpose() * x;
    return x - s * (0.5 * (g + g.transpose()));
}

/// Nearest point of St(p, n) in Frobenius norm: U W^T from the thin SVD of X.
inline StiefelPoint retract_polar(const Matrix& x) {
    detail::require_frame_shape(x.rows(), x.cols(), "retract_polar");
    Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sigma = svd.singularValues();
    if (sigma.size() == 0 || sigma(sigma.size() - 1) < kRankTolerance) {
        throw DegenerateInputError("retract_polar: input is rank deficient (smallest singular value " +
                                   std::to_string(sigma.size() ? sigma(sigma.size() - 1) : 0.0) + ")");
    }
    Matrix q = svd.matrixU() * svd.matrixV().transpose();
    return StiefelPoint(std::move(q), 1e-10);
}

/// QR-orthonormalized Gaussian sample with positive R diagonal.
inline StiefelPoint random_stiefel(Index n, Index p, Rng& rng) {
    detail::require_frame_shape(n, p, "random_stiefel");
    const Matrix g = rng.gaussian(n, p);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, p);
    const Matrix r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    for (Index j = 0; j < p; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) = -q.col(j);
        }
    }
    return StiefelPoint(std::move(q), 1e-10);
}

inline StiefelPoint random_stiefel(Index n, Index p, std::uint64_t seed) {
    Rng rng(seed);
    return random_stiefel(n, p, rng);
}

inline FrequencyMatrix random_skew(Index p, double scale, Rng& rng) {
    if (p < 1) {
        throw DimensionError("random_skew: p must be positive");
    }
    if (!(scale >= 0.0)) {
        throw ParameterError("random_skew: scale must be non-negative");
    }
    return FrequencyMatrix(scale * skew(rng.gaussian(p, p)));
}

inline FrequencyMatrix random_skew(Index p, double scale, std::uint64_t seed) {
    Rng rng(seed);
    return random_skew(p, scale, rng);
}

/// e^{t Xi} for skew-symmetric Xi (Pade scaling and squaring).
inline Matrix exp_skew(const Matrix& xi, double t) {
    detail::require_square(xi, "exp_skew");
    const double scale = std::max(1.0, xi.norm());
    if ((xi + xi.transpose()).norm() > 1e-12 * scale) {
        throw ContractError("exp_skew: argument is not skew-symmetric");
    }
    if (t == 0.0 || xi.isZero(0.0)) {
        return Matrix::Identity(xi.rows(), xi.cols());
    }
    const Matrix arg = t * xi;
    return arg.exp();
}

inline Matrix exp_skew(const FrequencyMatrix& xi, double t) { return exp_skew(xi.matrix(), t); }

}  // namespace stsync
