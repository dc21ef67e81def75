#pragma once

// Exact Gaussian evolution: M(t) = exp(t J h), applied to means and
// covariances. Branch pairs share one propagator per time.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>
#include <vector>

#include "pardec/phase_space.hpp"

namespace pardec {

struct SymplecticPropagator {
    PhaseSpaceLayout layout;
    Mat m;       // z(t) = m z(0) + shift
    Vec shift;   // from the linear term; zero when H has none
    double t = 0.0;
    double symplectic_error = 0.0;

    Vec apply(const Vec& z) const { return m * z + shift; }
};

/// Largest |eigenvalue| of J h, i.e. the fastest normal-mode rate. This is
/// frame independent, unlike any entrywise norm of h.
inline double dynamical_norm(const QuadraticHamiltonian& h) {
    const Mat jh = symplectic_form(h.layout()) * h.matrix();
    Eigen::EigenSolver<Mat> es(jh, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

inline void check_time_budget(const QuadraticHamiltonian& h, double t) {
    detail::require(std::isfinite(t), "propagator: time must be finite");
    const double budget = std::abs(t) * dynamical_norm(h);
    if (budget > 1e3) {
        std::ostringstream os;
        os << "propagator: t*|h| = " << budget << " exceeds the 1e3 conditioning budget";
        throw ValidationError(os.str());
    }
}

}  // namespace detail

inline constexpr double kPropagatorSymplecticTolerance = 1e-9;

inline SymplecticPropagator propagator(const QuadraticHamiltonian& h, double t) {
    detail::check_time_budget(h, t);
    const auto d = static_cast<Eigen::Index>(h.layout().dim());
    const Mat j = symplectic_form(h.layout());
    // dz/dt = J (h z + l); the augmented generator carries the affine part.
    Mat gen = Mat::Zero(d + 1, d + 1);
    gen.topLeftCorner(d, d) = t * j * h.matrix();
    gen.topRightCorner(d, 1) = t * j * h.linear();
    const Mat e = gen.exp();
    if (!e.allFinite()) {
        std::ostringstream os;
        os << "propagator: matrix exponential did not converge (t*|h| = " << std::abs(t) * dynamical_norm(h) << ")";
        throw NumericalTrustError(os.str());
    }
    SymplecticPropagator p{h.layout(), e.topLeftCorner(d, d), e.topRightCorner(d, 1), t, 0.0};
    p.symplectic_error = symplectic_residual(p.m);
    if (p.symplectic_error > kPropagatorSymplecticTolerance) {
        std::ostringstream os;
        os << "propagator: symplectic residual " << p.symplectic_error << " at t = " << t << " exceeds "
           << kPropagatorSymplecticTolerance;
        throw NumericalTrustError(os.str());
    }
    return p;
}

inline GaussianState evolve(const GaussianState& s, const SymplecticPropagator& p) {
    if (s.layout() != p.layout) throw ValidationError("evolve: layout mismatch");
    Mat cov = p.m * s.covariance() * p.m.transpose();
    cov = 0.5 * (cov + cov.transpose());
    return {s.layout(), p.apply(s.mean()), cov};
}

inline GaussianState evolve(const GaussianState& s, const QuadraticHamiltonian& h, double t) {
    if (s.layout() != h.layout()) throw ValidationError("evolve: layout mismatch");
    return evolve(s, propagator(h, t));
}

/// <H> = 1/2 m^T h m + 1/2 tr(h sigma) + l^T m.
inline double mean_energy(const GaussianState& s, const QuadraticHamiltonian& h) {
    if (s.layout() != h.layout()) throw ValidationError("mean_energy: layout mismatch");
    return h.energy(s.mean()) + 0.5 * (h.matrix() * s.covariance()).trace();
}

struct BranchPair {
    double t = 0.0;
    GaussianState alpha;
    GaussianState beta;
    CoherentAmplitude amp_alpha;
    CoherentAmplitude amp_beta;
    double symplectic_error = 0.0;
};

/// Both branches are `base` displaced by alpha / beta on the open mode, then
/// evolved with the same propagator at every grid time.
inline std::vector<BranchPair> evolve_branches(const CoherentAmplitude& alpha, const CoherentAmplitude& beta,
                                               const GaussianState& base, const QuadraticHamiltonian& h,
                                               const std::vector<double>& t_grid) {
    if (base.layout() != h.layout()) throw ValidationError("evolve_branches: layout mismatch");
    if (!h.layout().find(alpha.mode) || !h.layout().find(beta.mode))
        throw ValidationError("evolve_branches: open mode '" + alpha.mode + "' not in layout");
    detail::require(alpha.mode == beta.mode, "evolve_branches: alpha and beta must act on the same mode");
    const auto a0 = base.displaced(alpha);
    const auto b0 = base.displaced(beta);
    std::vector<BranchPair> out;
    out.reserve(t_grid.size());
    for (double t : t_grid) {
        const auto p = propagator(h, t);
        out.push_back({t, evolve(a0, p), evolve(b0, p), alpha, beta, p.symplectic_error});
    }
    return out;
}

/// Product form: vacuum of the open mode at `open_scale` tensored with `env`.
inline std::vector<BranchPair> evolve_branches(const CoherentAmplitude& alpha, const CoherentAmplitude& beta,
                                               const GaussianState& env, const ModeScale& open_scale,
                                               const QuadraticHamiltonian& h, const std::vector<double>& t_grid) {
    if (!h.layout().find(alpha.mode))
        throw ValidationError("evolve_branches: open mode '" + alpha.mode + "' not in layout");
    if (env.layout().find(alpha.mode))
        throw ValidationError("evolve_branches: environment state must not contain the open mode");
    const auto open = coherent_state(PhaseSpaceLayout({alpha.mode}), {}, {open_scale});
    const auto base = reorder(product_state(open, env), h.layout());
    return evolve_branches(alpha, beta, base, h, t_grid);
}

}  // namespace pardec
