#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pardec/decomposition.hpp"
#include "pardec/dynamics.hpp"
#include "pardec/models.hpp"

using namespace pardec;

namespace {

PhaseSpaceLayout numbered(std::size_t n) { return PhaseSpaceLayout(PhaseSpaceLayout::numbered("x", n)); }

BathParams random_bath(std::mt19937_64& rng, std::size_t n, int sign) {
    std::uniform_real_distribution<double> mass(0.2, 3.0), freq(0.3, 4.0), kap(-0.5, 0.5);
    BathParams b;
    b.coupling_sign = sign;
    for (std::size_t i = 0; i < n; ++i) b.oscillators.push_back({mass(rng), freq(rng), kap(rng)});
    return b;
}

}  // namespace

TEST(CmTransform, EqualMassPair) {
    const auto t = cm_relative_transform(numbered(2), {1.0, 1.0});
    Mat expect(2, 2);
    expect << 0.5, 0.5, 1.0, -1.0;
    EXPECT_NEAR(max_abs(t.position_map() - expect), 0.0, 1e-15);
    EXPECT_EQ(t.target().labels(), (std::vector<std::string>{"CM", "R1"}));
}

TEST(CmTransform, UnequalMassPairIsTheMassWeightedCentre) {
    const auto t = cm_relative_transform(numbered(2), {3.0, 1.0});
    EXPECT_DOUBLE_EQ(t.position_map()(0, 0), 0.75);
    EXPECT_DOUBLE_EQ(t.position_map()(0, 1), 0.25);
    EXPECT_DOUBLE_EQ(t.position_map()(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(t.position_map()(1, 1), -1.0);
}

TEST(CmTransform, EveryParticleSharesTheCentreWithUnitWeight) {
    for (auto fam : {RelativeFamily::Jacobi, RelativeFamily::RelativeToFirst}) {
        const auto t = cm_relative_transform(numbered(3), {1.0, 1.0, 1.0}, fam);
        EXPECT_NEAR(max_abs(t.inverse_position_map().col(0) - Vec::Ones(3)), 0.0, 1e-14);
        const auto u = cm_relative_transform(numbered(5), {0.3, 2.0, 1.0, 7.0, 0.5}, fam);
        EXPECT_NEAR(max_abs(u.inverse_position_map().col(0) - Vec::Ones(5)), 0.0, 1e-13);
    }
}

TEST(CmTransform, JacobiRowsAreSuccessiveSubclusterCentres) {
    const auto t = cm_relative_transform(numbered(3), {1.0, 2.0, 3.0});
    // rho_2 = (1 x1 + 2 x2)/3 - x3
    EXPECT_NEAR(t.position_map()(2, 0), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(t.position_map()(2, 1), 2.0 / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(t.position_map()(2, 2), -1.0);
}

TEST(CmTransform, SymplecticForRandomMasses) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.01, 100.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 8);
        std::vector<double> m(n);
        for (auto& v : m) v = u(rng);
        for (auto fam : {RelativeFamily::Jacobi, RelativeFamily::RelativeToFirst}) {
            const auto t = cm_relative_transform(numbered(n), m, fam);
            const Mat s = t.symplectic();
            const Mat j = symplectic_form(n);
            EXPECT_LT(max_abs(s.transpose() * j * s - j), 1e-10);
        }
    }
}

TEST(CmTransform, RejectsBadInput) {
    EXPECT_THROW(cm_relative_transform(numbered(2), {1.0, -1.0}), ValidationError);
    EXPECT_THROW(cm_relative_transform(numbered(3), {1.0, 1.0}), ValidationError);
    EXPECT_THROW(LinearCoordinateTransform(numbered(2), numbered(2), Mat::Ones(2, 2)), ValidationError);
}

TEST(CmTransform, FamilyNames) {
    EXPECT_EQ(relative_family_from_string("jacobi"), RelativeFamily::Jacobi);
    EXPECT_EQ(relative_family_from_string("relative_to_first"), RelativeFamily::RelativeToFirst);
    EXPECT_THROW(relative_family_from_string("polar"), ValidationError);
}

TEST(TransformHamiltonian, IdentityLeavesHUnchanged) {
    const auto h = build_two_mode({1.0, 2.0, 1.5, 0.3});
    const auto h2 = transform_hamiltonian(h, LinearCoordinateTransform::identity(h.layout()));
    EXPECT_EQ(h2.matrix(), h.matrix());
}

TEST(TransformHamiltonian, TwoModeConstants) {
    const auto h = build_two_mode({1.0, 1.0, 1.0, 0.25});
    const auto t = cm_relative_transform(h.layout(), {1.0, 1.0});
    const auto hp = transform_hamiltonian(h, t);
    // H = P^2/2M + c1 X^2 + p^2/2mu + c2 rho^2 - c3 X rho
    EXPECT_NEAR(0.5 * hp.entry("CM", false, "CM", false), 0.25, 1e-14);
    EXPECT_NEAR(0.5 * hp.entry("R1", false, "R1", false), 0.1875, 1e-14);
    EXPECT_NEAR(-hp.entry("CM", false, "R1", false), 0.5, 1e-14);
    EXPECT_NEAR(1.0 / hp.entry("R1", true, "R1", true), 0.5, 1e-14);
    EXPECT_NEAR(1.0 / hp.entry("CM", true, "CM", true), 2.0, 1e-14);
    EXPECT_NEAR(hp.entry("CM", true, "R1", true), 0.0, 1e-15);
}

TEST(TransformHamiltonian, EnergyInvariantAtRandomPoints) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    const auto b = discretize_ohmic_bath(6, 3.0, 0.2);
    const auto h = build_caldeira_leggett(HarmonicPotential{1.3}, b, 2.0);
    const auto t = cm_relative_transform(h.layout(), caldeira_leggett_masses(b, 2.0));
    const auto hp = transform_hamiltonian(h, t);
    const Mat s = t.symplectic();
    for (int k = 0; k < 100; ++k) {
        Vec z(static_cast<Eigen::Index>(h.layout().dim()));
        for (auto& v : z) v = g(rng);
        EXPECT_NEAR(hp.energy(s * z), h.energy(z), 1e-12 * std::max(1.0, std::abs(h.energy(z))));
    }
}

TEST(TransformHamiltonian, RoundTrip) {
    const auto b = discretize_ohmic_bath(4, 2.0, 0.3);
    const auto h = build_caldeira_leggett(FreeParticle{}, b, 1.0);
    const auto t = cm_relative_transform(h.layout(), caldeira_leggett_masses(b, 1.0), RelativeFamily::RelativeToFirst);
    const auto back = transform_hamiltonian(transform_hamiltonian(h, t), t.inverse());
    EXPECT_LT(max_abs(back.matrix() - h.matrix()), 1e-13);
    EXPECT_EQ(back.layout(), h.layout());
}

TEST(TransformHamiltonian, CompositionMatchesSequentialApplication) {
    const auto h = build_two_mode({1.5, 0.5, 1.0, 0.1});
    const auto t1 = cm_relative_transform(h.layout(), {1.5, 0.5});
    Mat a(2, 2);
    a << 2.0, 0.0, 0.5, 1.0;
    const LinearCoordinateTransform t2(t1.target(), PhaseSpaceLayout({"U", "V"}), a);
    const auto direct = transform_hamiltonian(h, t1.then(t2));
    const auto seq = transform_hamiltonian(transform_hamiltonian(h, t1), t2);
    EXPECT_LT(max_abs(direct.matrix() - seq.matrix()), 1e-14);
}

TEST(TwoModeConstants, AgreeWithClosedForms) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (int k = 0; k < 20; ++k) {
        TwoModeParams p{u(rng), u(rng), u(rng), 0.0};
        p.C = (u(rng) / 5.0 - 0.5) * p.m_E * p.omega * p.omega;
        const double m = p.m_S + p.m_E, mu = p.m_S * p.m_E / m, w2 = p.omega * p.omega;
        const auto hp = transform_hamiltonian(build_two_mode(p), cm_relative_transform(PhaseSpaceLayout({"S", "E"}),
                                                                                        {p.m_S, p.m_E}));
        const auto r = verify_constants(hp, analytic_two_mode_constants(p));
        EXPECT_LT(r.max_residual(), 1e-10);
        // written-out formulas, independent of the library's constants
        EXPECT_NEAR(0.5 * hp.entry("CM", false, "CM", false), p.m_E * w2 / 2 - p.C, 1e-10);
        EXPECT_NEAR(0.5 * hp.entry("R1", false, "R1", false), p.m_S * mu * w2 / (2 * m) + p.C * mu / m, 1e-10);
        EXPECT_NEAR(-hp.entry("CM", false, "R1", false), p.C * (p.m_E - p.m_S) / m + mu * w2, 1e-10);
    }
}

TEST(TwoModeConstants, ZeroCouplingStillCouplesCmAndR) {
    const TwoModeParams p{2.0, 1.0, 1.5, 0.0};
    const auto k = analytic_two_mode_constants(p);
    EXPECT_DOUBLE_EQ(k.c1, p.m_E * p.omega * p.omega / 2);
    EXPECT_NEAR(k.c3, k.mu * p.omega * p.omega, 1e-15);
    EXPECT_GT(k.c3, 0.0);
}

TEST(TwoModeConstants, EqualMassesRemoveTheCouplingPartOfC3) {
    for (double C : {-1.0, 0.0, 0.3}) {
        const auto k = analytic_two_mode_constants({1.3, 1.3, 1.0, C});
        EXPECT_NEAR(k.c3, k.mu, 1e-15);
    }
}

TEST(ManyModeConstants, UncoupledBathConfinesTheCentre) {
    std::mt19937_64 rng(4);
    auto b = random_bath(rng, 4, -1);
    for (auto& o : b.oscillators) o.coupling = 0.0;
    const auto k = analytic_caldeira_leggett_constants(FreeParticle{}, b, 1.0);
    double expect = 0.0;
    for (const auto& o : b.oscillators) expect += o.mass * o.frequency * o.frequency / 2;
    EXPECT_NEAR(k.m_omega_cm2_half, expect, 1e-12);
    EXPECT_TRUE(k.cm_confined());
}

TEST(ManyModeConstants, FreeAndHarmonicMatchTheCongruence) {
    std::mt19937_64 rng(5);
    for (int sign : {-1, 1})
        for (auto fam : {RelativeFamily::Jacobi, RelativeFamily::RelativeToFirst})
            for (bool harmonic : {false, true}) {
                const auto b = random_bath(rng, 3, sign);
                const double m_S = 1.4;
                const SystemPotential sys = harmonic ? SystemPotential{HarmonicPotential{0.9}} : SystemPotential{FreeParticle{}};
                const auto h = build_caldeira_leggett(sys, b, m_S);
                const auto t = cm_relative_transform(h.layout(), caldeira_leggett_masses(b, m_S), fam);
                const auto k = analytic_caldeira_leggett_constants(sys, b, m_S, fam);
                const auto r = verify_constants(transform_hamiltonian(h, t), caldeira_leggett_parts(sys, b, m_S), t, k);
                EXPECT_LT(r.max_residual(), 1e-9) << sign << " " << to_string(fam) << " " << harmonic;
                if (harmonic) {
                    EXPECT_LT(r.max_residual("harmonic_x2"), 1e-9);
                }
                if (fam == RelativeFamily::Jacobi) {
                    EXPECT_LT(max_abs(k.mass_polarization), 1e-15);  // Jacobi kinetic term is diagonal
                }
            }
}

TEST(ManyModeConstants, RelativeToFirstHasMassPolarization) {
    std::mt19937_64 rng(9);
    const auto b = random_bath(rng, 3, -1);
    const auto k = analytic_caldeira_leggett_constants(FreeParticle{}, b, 1.0, RelativeFamily::RelativeToFirst);
    EXPECT_GT(max_abs(k.mass_polarization), 1e-3);
}

TEST(NormalModes, AlreadyNormalBathIsIdentityOnE) {
    BathParams b{{{1.0, 0.5, 0.1}, {1.0, 1.5, 0.2}, {1.0, 2.5, 0.3}}, -1};
    const auto h = build_caldeira_leggett(FreeParticle{}, b, 1.0);
    const auto nm = normal_mode_transform(h, {"E1", "E2", "E3"});
    EXPECT_NEAR(max_abs(nm.transform.position_map() - Mat::Identity(4, 4)), 0.0, 1e-12);
    EXPECT_NEAR(nm.frequencies(0), 0.5, 1e-12);
    EXPECT_NEAR(nm.frequencies(2), 2.5, 1e-12);
}

TEST(NormalModes, CmRelativeEnvironmentDecouples) {
    std::mt19937_64 rng(6);
    const auto b = random_bath(rng, 3, -1);
    const auto h = build_caldeira_leggett(HarmonicPotential{1.0}, b, 1.0);
    const auto t = cm_relative_transform(h.layout(), caldeira_leggett_masses(b, 1.0));
    const auto hcm = transform_hamiltonian(h, t);
    const std::vector<std::string> env{"R1", "R2", "R3"};
    const auto nm = normal_mode_transform(hcm, env);
    const Mat& m = nm.hamiltonian.matrix();
    const Eigen::Index n = 4;
    for (Eigen::Index a = 1; a < n; ++a)
        for (Eigen::Index c = 1; c < n; ++c)
            if (a != c) {
                EXPECT_LT(std::abs(m(a, c)), 1e-10);
                EXPECT_LT(std::abs(m(n + a, n + c)), 1e-10);
            }
    // the environment spectrum is the one of the generalized eigenproblem K v = w^2 T^{-1} v
    Mat kin(3, 3), pot(3, 3);
    for (Eigen::Index a = 0; a < 3; ++a)
        for (Eigen::Index c = 0; c < 3; ++c) {
            pot(a, c) = hcm.matrix()(1 + a, 1 + c);
            kin(a, c) = hcm.matrix()(n + 1 + a, n + 1 + c);
        }
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(pot, kin.inverse());
    for (Eigen::Index l = 0; l < 3; ++l) EXPECT_NEAR(nm.frequencies(l), std::sqrt(ges.eigenvalues()(l)), 1e-10);
    for (Eigen::Index l = 0; l < 3; ++l) {
        EXPECT_NEAR(m(1 + l, 1 + l), nm.frequencies(l) * nm.frequencies(l), 1e-10);
        EXPECT_NEAR(m(n + 1 + l, n + 1 + l), 1.0, 1e-10);
    }
}

TEST(NormalModes, RejectsIndefiniteEnvironment) {
    Mat h = Mat::Zero(4, 4);
    h(1, 1) = -1.0;
    h(2, 2) = h(3, 3) = 1.0;
    const QuadraticHamiltonian q(PhaseSpaceLayout({"S", "E"}), h);
    EXPECT_THROW(normal_mode_transform(q, {"E"}), ValidationError);
}

TEST(TransformState, IdentityAndPurity) {
    const auto s = thermal_state(PhaseSpaceLayout({"S", "E"}), {{1.0, 1.0, 2.0}, {2.0, 0.5, 1.0}}).displaced({"S", 1, 0});
    const auto same = transform_state(s, LinearCoordinateTransform::identity(s.layout()));
    EXPECT_EQ(same.covariance(), s.covariance());
    EXPECT_EQ(same.mean(), s.mean());
    const auto t = cm_relative_transform(s.layout(), {1.0, 2.0});
    EXPECT_NEAR(purity(transform_state(s, t)), purity(s), 1e-12);
}

TEST(TransformState, ProductBecomesEntangledForGenericMasses) {
    const PhaseSpaceLayout l({"S", "E"});
    const auto s = coherent_state(l, {{"S", 1.0, 0.0}}, {{1.0, 1.0}, {1.0, 1.0}});
    const auto cm = transform_state(s, cm_relative_transform(l, {2.0, 1.0}));
    EXPECT_GT(log_negativity(cm, {"CM"}, {"R1"}), 0.01);
    EXPECT_NEAR(log_negativity(s, {"S"}, {"E"}), 0.0, 1e-12);
}

TEST(TransformState, EqualScalesAndMassesStaySeparable) {
    // for identical vacua sigma ~ I/2 the CM/R map is a scaled rotation in each quadrature
    const PhaseSpaceLayout l({"S", "E"});
    const auto s = coherent_state(l, {});
    const auto cm = transform_state(s, cm_relative_transform(l, {1.0, 1.0}));
    EXPECT_NEAR(log_negativity(cm, {"CM"}, {"R1"}), 0.0, 1e-12);
}

TEST(TransformState, DynamicsCommutesWithTheFrameChange) {
    const auto b = discretize_ohmic_bath(5, 4.0, 0.2);
    const auto h = build_caldeira_leggett(HarmonicPotential{2.0}, b, 1.0);
    const auto t = cm_relative_transform(h.layout(), caldeira_leggett_masses(b, 1.0));
    const auto hcm = transform_hamiltonian(h, t);
    std::vector<ThermalMode> tm{{1.0, 2.0, 0.5}};
    for (const auto& o : b.oscillators) tm.push_back({o.mass, o.frequency, 1.0});
    const auto s = thermal_state(h.layout(), tm).displaced({"S", 1.0, 0.5});
    const auto a = transform_state(evolve(s, h, 1.7), t);
    const auto c = evolve(transform_state(s, t), hcm, 1.7);
    EXPECT_LT(max_abs(a.covariance() - c.covariance()), 1e-10);
    EXPECT_LT(max_abs(a.mean() - c.mean()), 1e-10);
}
