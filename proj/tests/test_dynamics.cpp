#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stiefel_sync/integrator.hpp"

using namespace stsync;

namespace {

struct Sample {
    Ensemble e;
    ModelParams params;
    Topology topo = all_to_all(1);
    std::vector<Matrix> xis;
};

Matrix random_weights(Index n, Rng& rng) {
    Matrix a(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index k = i; k < n; ++k) a(i, k) = a(k, i) = 0.2 + rng.uniform();
    return a;
}

Sample random_sample(Index n, Index p, Index agents, std::uint64_t seed, bool second = false) {
    Rng rng(seed);
    Sample s;
    s.topo = Topology(random_weights(agents, rng));
    s.params.kappa = 0.5 + rng.uniform();
    s.params.m = 0.3 + rng.uniform();
    s.params.gamma = 0.5 + rng.uniform();
    for (Index i = 0; i < agents; ++i) {
        s.e.states.push_back(random_stiefel(n, p, rng).matrix());
        s.params.xis.push_back(random_skew(p, 0.7, rng));
        s.xis.push_back(s.params.xis.back().matrix());
        if (second) s.e.velocities.push_back(make_tangent_velocity(s.e.states.back(), rng.gaussian(n, p), 0.5));
    }
    return s;
}

}  // namespace

TEST(RhsFirstOrder, MatchesPerPairFormula) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Sample s = random_sample(5, 3, 6, seed);
        const auto got = rhs_first_order(s.e, s.params, s.topo);
        const auto ref = oracle::first_order(s.e.states, s.xis, s.topo.weights(), s.params.kappa);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LE((got[i] - ref[i]).norm(), 1e-13);
    }
}

TEST(RhsFirstOrder, MatchesPerPairFormulaOffManifold) {
    Sample s = random_sample(4, 2, 4, 9);
    Rng rng(10);
    for (auto& st : s.e.states) st += 0.1 * rng.gaussian(4, 2);
    const auto got = rhs_first_order(s.e, s.params, s.topo);
    const auto ref = oracle::first_order(s.e.states, s.xis, s.topo.weights(), s.params.kappa);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LE((got[i] - ref[i]).norm(), 1e-13);
}

TEST(RhsFirstOrder, HandEvaluatedCircleExample) {
    Ensemble e;
    Matrix x1(2, 1), x2(2, 1);
    x1 << 1, 0;
    x2 << 0, 1;
    e.states = {x1, x2};
    ModelParams p;
    p.kappa = 1.0;
    p.xis.assign(2, FrequencyMatrix::zero(1));
    const auto r = rhs_first_order(e, p, all_to_all(2));
    EXPECT_NEAR(r[0](0, 0), 0.0, 1e-16);
    EXPECT_NEAR(r[0](1, 0), 0.5, 1e-16);
    EXPECT_NEAR(r[1](0, 0), 0.5, 1e-16);
    EXPECT_NEAR(r[1](1, 0), 0.0, 1e-16);
}

TEST(RhsFirstOrder, TrivialCases) {
    Rng rng(4);
    const Matrix s0 = random_stiefel(4, 2, rng).matrix();
    Ensemble e;
    e.states.assign(3, s0);
    ModelParams p;
    p.kappa = 2.0;
    p.xis.assign(3, FrequencyMatrix::zero(2));
    for (const auto& r : rhs_first_order(e, p, all_to_all(3))) EXPECT_LE(r.norm(), 1e-15);

    Ensemble one;
    one.states = {s0};
    ModelParams q;
    q.kappa = 3.0;
    q.xis = {random_skew(2, 1.0, rng)};
    EXPECT_LE((rhs_first_order(one, q, all_to_all(1))[0] - s0 * q.xis[0].matrix()).norm(), 1e-15);
}

TEST(RhsFirstOrder, TangentAtManifoldPoints) {
    const Sample s = random_sample(6, 3, 5, 12);
    const auto r = rhs_first_order(s.e, s.params, s.topo);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_LE(tangency_residual(s.e.states[i], r[i]), 1e-12);
}

TEST(RhsFirstOrder, LeftTranslationEquivariance) {
    const Sample s = random_sample(5, 2, 4, 15);
    const Matrix l = random_stiefel(5, 5, 99).matrix();
    const auto base = rhs_first_order(s.e, s.params, s.topo);
    const auto moved = rhs_first_order(left_translate(s.e, l), s.params, s.topo);
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_LE((l * base[i] - moved[i]).norm(), 1e-12);
}

TEST(RhsFirstOrder, ShapeErrors) {
    Sample s = random_sample(4, 2, 3, 6);
    EXPECT_THROW(rhs_first_order(s.e, s.params, all_to_all(4)), DimensionError);
    ModelParams bad = s.params;
    bad.xis.pop_back();
    EXPECT_THROW(rhs_first_order(s.e, bad, s.topo), DimensionError);
    bad = s.params;
    bad.xis[0] = FrequencyMatrix::zero(3);
    EXPECT_THROW(rhs_first_order(s.e, bad, s.topo), DimensionError);
    Ensemble mixed = s.e;
    mixed.states[1] = Matrix::Identity(4, 3);
    EXPECT_THROW(rhs_first_order(mixed, s.params, s.topo), DimensionError);
}

TEST(RhsSecondOrder, MatchesTermByTermFormula) {
    for (std::uint64_t seed : {21u, 22u}) {
        const Sample s = random_sample(5, 2, 4, seed, true);
        const EnsembleRates r = rhs_second_order(s.e, s.params, s.topo);
        const auto ref = oracle::second_order_accel(s.e.states, s.e.velocities, s.xis, s.topo.weights(),
                                                    s.params.kappa, s.params.m, s.params.gamma);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            EXPECT_EQ(r.dstates[i], s.e.velocities[i]);
            EXPECT_LE((r.dvelocities[i] - ref[i]).norm(), 1e-12);
        }
    }
}

TEST(RhsSecondOrder, ZeroVelocityReducesToCoupling) {
    Sample s = random_sample(4, 2, 4, 30, true);
    for (auto& v : s.e.velocities) v.setZero();
    for (auto& xi : s.params.xis) xi = FrequencyMatrix::zero(2);
    const EnsembleRates r = rhs_second_order(s.e, s.params, s.topo);
    const auto first = rhs_first_order(Ensemble{s.e.states, {}}, s.params, s.topo);
    for (std::size_t i = 0; i < first.size(); ++i) {
        EXPECT_LE((s.params.m * r.dvelocities[i] - first[i]).norm(), 1e-14);
    }
}

TEST(RhsSecondOrder, ConstraintIsPropagated) {
    // d/dt (V^T S + S^T V) = A^T S + 2 V^T V + S^T A must vanish at admissible data.
    const Sample s = random_sample(6, 3, 5, 33, true);
    const EnsembleRates r = rhs_second_order(s.e, s.params, s.topo);
    for (std::size_t i = 0; i < s.e.states.size(); ++i) {
        const Matrix& st = s.e.states[i];
        const Matrix& v = s.e.velocities[i];
        const Matrix& a = r.dvelocities[i];
        EXPECT_LE((a.transpose() * st + 2.0 * v.transpose() * v + st.transpose() * a).norm(), 1e-10);
    }
}

TEST(RhsSecondOrder, Errors) {
    Sample s = random_sample(4, 2, 3, 40, true);
    ModelParams massless = s.params;
    massless.m = 0.0;
    EXPECT_THROW(rhs_second_order(s.e, massless, s.topo), ParameterError);
    Ensemble bent = s.e;
    bent.velocities[0] += bent.states[0];
    EXPECT_THROW(rhs_second_order(bent, s.params, s.topo), ContractError);
    EXPECT_THROW(rhs_second_order(Ensemble{s.e.states, {}}, s.params, s.topo), ContractError);
}

TEST(RhsSecondOrder, ConsensusAtRestIsEquilibrium) {
    Rng rng(41);
    const Matrix s0 = random_stiefel(4, 2, rng).matrix();
    Ensemble e{std::vector<Matrix>(3, s0), std::vector<Matrix>(3, Matrix::Zero(4, 2))};
    ModelParams p;
    p.kappa = 1.0;
    p.m = 1.0;
    p.gamma = 1.0;
    p.xis.assign(3, FrequencyMatrix::zero(2));
    for (const auto& a : rhs_second_order(e, p, all_to_all(3)).dvelocities) EXPECT_LE(a.norm(), 1e-15);
}

TEST(RhsSecondOrder, SmallInertiaApproachesFirstOrderFlow) {
    // With gamma = 1 the inertia-free limit of the second-order flow is the first-order flow.
    const Sample s = random_sample(4, 2, 4, 44);
    ModelParams first = s.params;
    first.gamma = 1.0;
    const auto v0 = rhs_first_order(s.e, first, s.topo);
    IntegratorConfig c;
    c.horizon = 1.0;
    c.record_every = 100000;
    c.dt = 1e-4;
    const Trajectory ref = integrate(s.e, first, s.topo, c);
    double previous = std::numeric_limits<double>::infinity();
    for (double m : {1e-2, 1e-3, 1e-4}) {
        ModelParams second = first;
        second.m = m;
        c.dt = std::min(1e-4, 0.5 * m);
        const Trajectory t = integrate(Ensemble{s.e.states, v0}, second, s.topo, c);
        double gap = 0.0;
        for (std::size_t i = 0; i < v0.size(); ++i) {
            gap = std::max(gap, (t.final_ensemble().states[i] - ref.final_ensemble().states[i]).norm());
        }
        EXPECT_LT(gap, previous);
        previous = gap;
    }
    EXPECT_LT(previous, 1e-2);
}

TEST(ReducedVelocity, EqualsProjectedRate) {
    const Sample s = random_sample(5, 3, 5, 50);
    const auto omega = reduced_velocity(s.e, s.params, s.topo);
    const auto rate = rhs_first_order(s.e, s.params, s.topo);
    for (std::size_t i = 0; i < omega.size(); ++i) {
        EXPECT_LE((omega[i] - s.e.states[i].transpose() * rate[i]).norm(), 1e-12);
        EXPECT_LE((omega[i] + omega[i].transpose()).norm(), 1e-15);
    }
}

TEST(Reductions, SphereRhs) {
    Rng rng(60);
    const Index agents = 5;
    const Topology topo(random_weights(agents, rng));
    Ensemble e;
    std::vector<Vector> x;
    for (Index i = 0; i < agents; ++i) {
        e.states.push_back(random_stiefel(3, 1, rng).matrix());
        x.push_back(e.states.back().col(0));
    }
    ModelParams p;
    p.kappa = 1.7;
    p.xis.assign(agents, FrequencyMatrix::zero(1));
    const auto a = rhs_first_order(e, p, topo);
    const auto b = rhs_sphere(x, {}, topo, p.kappa);
    for (Index i = 0; i < agents; ++i) {
        EXPECT_LE((a[i].col(0) - b[i]).norm(), 1e-14);
        EXPECT_LE(std::abs(b[i].dot(x[i])), 1e-14);
    }
    std::vector<Vector> bad = x;
    bad[0] *= 1.1;
    EXPECT_THROW(rhs_sphere(bad, {}, topo, 1.0), ContractError);
}

TEST(Reductions, SphereWithLeftFrequencies) {
    Rng rng(61);
    std::vector<Vector> x;
    std::vector<Matrix> omegas;
    for (int i = 0; i < 3; ++i) {
        x.push_back(random_stiefel(4, 1, rng).matrix().col(0));
        omegas.push_back(random_skew(4, 1.0, rng).matrix());
    }
    const auto r = rhs_sphere(x, omegas, all_to_all(3), 0.0);
    for (int i = 0; i < 3; ++i) EXPECT_LE((r[i] - omegas[i] * x[i]).norm(), 1e-15);
}

TEST(Reductions, KuramotoLiteralAndAngleLift) {
    Vector theta(2), nu = Vector::Zero(2);
    theta << 0.0, std::numbers::pi / 2.0;
    const Vector r = rhs_kuramoto(theta, nu, all_to_all(2), 1.0);
    EXPECT_NEAR(r(0), 0.5, 1e-15);
    EXPECT_NEAR(r(1), -0.5, 1e-15);

    Rng rng(62);
    const Index agents = 6;
    const Topology topo(random_weights(agents, rng));
    Vector th(agents);
    Ensemble e;
    for (Index i = 0; i < agents; ++i) {
        th(i) = 2.0 * std::numbers::pi * rng.uniform();
        Matrix s(2, 1);
        s << std::cos(th(i)), std::sin(th(i));
        e.states.push_back(s);
    }
    ModelParams p;
    p.kappa = 1.3;
    p.xis.assign(agents, FrequencyMatrix::zero(1));
    const auto rates = rhs_first_order(e, p, topo);
    const Vector dth = rhs_kuramoto(th, Vector::Zero(agents), topo, p.kappa);
    for (Index i = 0; i < agents; ++i) {
        EXPECT_NEAR(rates[i](0, 0), -std::sin(th(i)) * dth(i), 1e-12);
        EXPECT_NEAR(rates[i](1, 0), std::cos(th(i)) * dth(i), 1e-12);
    }
}

TEST(Reductions, RotationGroup) {
    // Two planar rotations by 0 and phi: coupling rate on the angle is (kappa/N) sin(phi).
    const double phi = 0.9;
    Matrix r1 = Matrix::Identity(2, 2), r2(2, 2);
    r2 << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
    const auto out = rhs_so_n({r1, r2}, {}, all_to_all(2), 1.0);
    Matrix expected(2, 2);
    expected << 0.0, -1.0, 1.0, 0.0;
    EXPECT_LE((out[0] - 0.5 * std::sin(phi) * expected).norm(), 1e-15);

    Rng rng(63);
    Ensemble e;
    ModelParams p;
    p.kappa = 0.8;
    std::vector<Matrix> omegas;
    for (int i = 0; i < 4; ++i) {
        e.states.push_back(random_stiefel(3, 3, rng).matrix());
        p.xis.push_back(random_skew(3, 0.5, rng));
        omegas.push_back(e.states.back() * p.xis.back().matrix() * e.states.back().transpose());
    }
    const auto a = rhs_first_order(e, p, all_to_all(4));
    const auto b = rhs_so_n(e.states, omegas, all_to_all(4), p.kappa);
    for (int i = 0; i < 4; ++i) {
        EXPECT_LE((a[i] - b[i]).norm(), 1e-14);
        const Matrix w = e.states[i].transpose() * b[i];
        EXPECT_LE((w + w.transpose()).norm(), 1e-14);
    }
    EXPECT_THROW(rhs_so_n({2.0 * r1, r2}, {}, all_to_all(2), 1.0), ContractError);
}

TEST(SplitTransform, GroupLaws) {
    Rng rng(70);
    const Matrix s = random_stiefel(4, 2, rng).matrix();
    const FrequencyMatrix xi = random_skew(2, 1.0, rng);
    EXPECT_LE((split_transform(s, xi, 0.0, 1).matrix() - s).norm(), 1e-15);
    EXPECT_LE((split_transform(s, FrequencyMatrix::zero(2), 3.0, 2, 2.0).matrix() - s).norm(), 1e-15);
    const Matrix once = split_transform(split_transform(s, xi, 0.4, 1).matrix(), xi, 0.7, 1).matrix();
    EXPECT_LE((once - split_transform(s, xi, 1.1, 1).matrix()).norm(), 1e-13);
    EXPECT_LE((split_transform(s, xi, 1.0, 2, 2.0).matrix() - split_transform(s, xi, 0.5, 1).matrix()).norm(),
              1e-14);
    EXPECT_THROW(split_transform(s, xi, 1.0, 3), ParameterError);
}

TEST(MakeTangentVelocity, Constraint) {
    Rng rng(80);
    const Matrix s = random_stiefel(5, 3, rng).matrix();
    EXPECT_LE(make_tangent_velocity(s, s, 1.0).norm(), 1e-15);
    EXPECT_TRUE(make_tangent_velocity(s, rng.gaussian(5, 3), 0.0).isZero(0.0));
    const Matrix v = make_tangent_velocity(s, rng.gaussian(5, 3), 2.0);
    EXPECT_LE((v.transpose() * s + s.transpose() * v).norm(), 1e-12);
}

TEST(ValidateEnsemble, DetectsViolations) {
    Sample s = random_sample(4, 2, 3, 90, true);
    EXPECT_NO_THROW(validate_ensemble(s.e));
    Ensemble bad = s.e;
    bad.states[2] *= 1.01;
    EXPECT_THROW(validate_ensemble(bad), ContractError);
    bad = s.e;
    bad.velocities[1] += bad.states[1];
    EXPECT_THROW(validate_ensemble(bad), ContractError);
    bad = s.e;
    bad.velocities.pop_back();
    EXPECT_THROW(validate_ensemble(bad), DimensionError);
}
