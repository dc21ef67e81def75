#pragma once

// d rho/dt = -i [H, rho] - Lambda [x, [x, rho]] for one mode in a truncated
// Fock basis, interaction-picture RK4, plus position-representation and
// coherent-patch diagnostics.

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "pardec/fock_oracle.hpp"

namespace pardec {

enum class MasterHamiltonian {
    None,      // pure dephasing
    Free,      // p^2 / 2m
    Harmonic,  // p^2 / 2m + m w^2 x^2 / 2
};

inline std::string to_string(MasterHamiltonian v) {
    switch (v) {
        case MasterHamiltonian::None: return "none";
        case MasterHamiltonian::Free: return "free";
        case MasterHamiltonian::Harmonic: return "harmonic";
    }
    return "?";
}

inline MasterHamiltonian master_hamiltonian_from_string(const std::string& s) {
    if (s == "none") return MasterHamiltonian::None;
    if (s == "free") return MasterHamiltonian::Free;
    if (s == "harmonic") return MasterHamiltonian::Harmonic;
    throw ValidationError("unknown master-equation Hamiltonian '" + s + "' (expected none | free | harmonic)");
}

struct MasterEqScenario {
    MasterHamiltonian variant = MasterHamiltonian::Harmonic;
    ModeScale scale;  // mass, frequency: basis scale and harmonic frequency
    double lambda = 0.0;
    std::size_t cutoff = 40;
    std::vector<double> t_grid;
    double step = 0.01;

    void validate() const {
        detail::require(lambda >= 0.0 && std::isfinite(lambda), "master equation: Lambda must be >= 0");
        detail::require(cutoff >= 2, "master equation: cutoff must be >= 2");
        detail::require(step > 0.0, "master equation: step must be positive");
        detail::require(scale.mass > 0.0 && scale.frequency > 0.0, "master equation: scale must be positive");
        detail::require(!t_grid.empty(), "master equation: empty time grid");
        for (std::size_t k = 1; k < t_grid.size(); ++k)
            detail::require(t_grid[k] >= t_grid[k - 1], "master equation: time grid must be non-decreasing");
        detail::require(t_grid.front() >= 0.0, "master equation: time grid must start at t >= 0");
    }
};

inline CMat master_hamiltonian_operator(const MasterEqScenario& s) {
    const auto d = static_cast<Eigen::Index>(s.cutoff);
    if (s.variant == MasterHamiltonian::None) return CMat::Zero(d, d);
    Mat hm = Mat::Zero(2, 2);
    hm(1, 1) = 1.0 / s.scale.mass;
    if (s.variant == MasterHamiltonian::Harmonic) hm(0, 0) = s.scale.mass * s.scale.frequency * s.scale.frequency;
    return projected_quadratic_operator(FockSpace({{"S", s.cutoff, s.scale}}), hm, Vec::Zero(2));
}

struct MasterEqResult {
    std::vector<double> t;
    std::vector<DensityMatrix> samples;
    double step_used = 0.0;
    int halvings = 0;
    double max_trace_drift = 0.0;
    double max_hermiticity_error = 0.0;
    double min_eigenvalue = 0.0;
    bool positivity_flag = false;  // some sample had an eigenvalue below -1e-6
};

namespace detail {

// Dephasing term -Lambda [x, [x, rho]] with x and x^2 given in the working basis.
struct Dephasing {
    CMat x, x2;
    double lambda;
    CMat operator()(const CMat& r) const {
        if (lambda == 0.0) return CMat::Zero(r.rows(), r.cols());
        return -lambda * (x2 * r - 2.0 * x * r * x + r * x2);
    }
};

// rho -> e^{-iHs} rho e^{iHs} in the eigenbasis of H is an entrywise phase.
inline CMat phases(const Vec& e, double s) {
    CMat p(e.size(), e.size());
    for (Eigen::Index i = 0; i < e.size(); ++i)
        for (Eigen::Index j = 0; j < e.size(); ++j) p(i, j) = std::polar(1.0, -(e(i) - e(j)) * s);
    return p;
}

}  // namespace detail

/// Lawson (interaction-picture) RK4: the unitary part is exact, RK4 only sees
/// the dephasing term. Its superoperator eigenvalues are -Lambda (x_i - x_j)^2,
/// so the step is halved until it sits inside the RK4 real-axis stability
/// interval; a later trace drift or blow-up halves it again.
inline MasterEqResult evolve_master(const DensityMatrix& rho0, const MasterEqScenario& s) {
    s.validate();
    detail::require(rho0.dim() == static_cast<Eigen::Index>(s.cutoff), "evolve_master: state dimension != cutoff");
    const auto ops = local_operators(s.cutoff, s.scale);
    Eigen::SelfAdjointEigenSolver<CMat> eh(master_hamiltonian_operator(s));
    const CMat& v = eh.eigenvectors();
    const Vec& energies = eh.eigenvalues();
    const CMat xe = v.adjoint() * ops.x * v;
    const detail::Dephasing f{xe, xe * xe, s.lambda};
    Eigen::SelfAdjointEigenSolver<CMat> ex(detail::hermitian_part(ops.x), Eigen::EigenvaluesOnly);
    const double width = ex.eigenvalues().maxCoeff() - ex.eigenvalues().minCoeff();
    const double stiffness = s.lambda * width * width;
    const CMat rho0e = v.adjoint() * rho0.matrix() * v;
    const double scale0 = rho0e.cwiseAbs().maxCoeff();
    constexpr double kRk4RealLimit = 2.78;

    double h = s.step;
    for (int halvings = 0; halvings <= 6; ++halvings, h /= 2.0) {
        if (h * stiffness >= kRk4RealLimit) continue;
        MasterEqResult res;
        res.step_used = h;
        res.halvings = halvings;
        res.min_eigenvalue = rho0.min_eigenvalue();
        CMat r = rho0e;
        const double tr0 = r.trace().real();
        double t_now = s.t_grid.front();
        bool unstable = false;
        for (double target : s.t_grid) {
            const double span = target - t_now;
            const auto n = static_cast<long>(std::ceil(span / h - 1e-9));
            const double dt = n > 0 ? span / static_cast<double>(n) : 0.0;
            const CMat half = detail::phases(energies, 0.5 * dt), full = detail::phases(energies, dt);
            for (long k = 0; k < n && !unstable; ++k) {
                const CMat k1 = f(r);
                const CMat k2 = f(half.cwiseProduct(r + 0.5 * dt * k1));
                const CMat k3 = f(half.cwiseProduct(r) + 0.5 * dt * k2);
                const CMat k4 = f(full.cwiseProduct(r) + dt * half.cwiseProduct(k3));
                r = full.cwiseProduct(r) +
                    dt / 6.0 * (full.cwiseProduct(k1) + 2.0 * half.cwiseProduct(k2 + k3) + k4);
                const double drift = std::abs(r.trace().real() - tr0);
                res.max_trace_drift = std::max(res.max_trace_drift, drift);
                // a blow-up keeps the trace (every term is a commutator) but not the entry size
                if (drift > 1e-6 || !r.allFinite() || r.cwiseAbs().maxCoeff() > 10.0 * std::max(1.0, scale0)) unstable = true;
            }
            if (unstable) break;
            t_now = target;
            r = detail::hermitian_part(r);
            DensityMatrix d(v * r * v.adjoint());
            res.max_hermiticity_error = std::max(res.max_hermiticity_error, d.hermiticity_error());
            const double ev = d.min_eigenvalue();
            res.min_eigenvalue = std::min(res.min_eigenvalue, ev);
            if (ev < -1e-6) res.positivity_flag = true;
            res.t.push_back(target);
            res.samples.push_back(std::move(d));
        }
        if (!unstable) return res;
    }
    std::ostringstream os;
    os << "evolve_master: integration unstable after 6 step halvings (last step " << h * 2.0 << ")";
    throw NumericalTrustError(os.str());
}

/// Hermite functions psi_n(x_j), n < d, for x = (a + a^dag)/sqrt(2 m w).
inline Mat hermite_functions(std::size_t d, const ModeScale& scale, const std::vector<double>& xs) {
    const double s = std::sqrt(scale.mass * scale.frequency);
    const double pi = std::acos(-1.0);
    Mat phi(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const double u = s * xs[j];
        double prev = 0.0;
        double cur = std::sqrt(s) * std::pow(pi, -0.25) * std::exp(-0.5 * u * u);
        for (std::size_t n = 0; n < d; ++n) {
            phi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(n)) = cur;
            const double next = std::sqrt(2.0 / static_cast<double>(n + 1)) * u * cur -
                                std::sqrt(static_cast<double>(n) / static_cast<double>(n + 1)) * prev;
            prev = cur;
            cur = next;
        }
    }
    return phi;
}

/// rho(x_i, x_j) on the grid.
inline CMat position_representation(const DensityMatrix& rho, const ModeScale& scale, const std::vector<double>& xs) {
    const Mat phi = hermite_functions(static_cast<std::size_t>(rho.dim()), scale, xs);
    const CMat pc = phi.cast<cplx>();
    return pc * rho.matrix() * pc.transpose();
}

struct DephasingCheck {
    double max_relative_deviation = 0.0;
    std::size_t points = 0;
};

/// Compares rho(x,x',t) with rho(x,x',0) exp(-Lambda (x-x')^2 t) on grid
/// points where |rho(x,x',0)| exceeds mask_fraction of its maximum.
inline DephasingCheck dephasing_law_check(const DensityMatrix& rho0, const DensityMatrix& rho_t, double lambda, double t,
                                          const ModeScale& scale, const std::vector<double>& xs,
                                          double mask_fraction = 0.05) {
    const CMat a = position_representation(rho0, scale, xs);
    const CMat b = position_representation(rho_t, scale, xs);
    const double peak = a.cwiseAbs().maxCoeff();
    DephasingCheck c;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (std::abs(a(i, j)) <= mask_fraction * peak) continue;
            const double dx = xs[static_cast<std::size_t>(i)] - xs[static_cast<std::size_t>(j)];
            const cplx expected = a(i, j) * std::exp(-lambda * dx * dx * t);
            c.max_relative_deviation = std::max(c.max_relative_deviation, std::abs(b(i, j) - expected) / std::abs(expected));
            ++c.points;
        }
    return c;
}

/// Fock amplitudes of the coherent state centred at (x0, p0) for the basis scale.
inline CVec coherent_vector(std::size_t d, const ModeScale& scale, double x0, double p0) {
    const double mw = scale.mass * scale.frequency;
    const cplx z = (std::sqrt(mw) * x0 + cplx(0.0, 1.0) * p0 / std::sqrt(mw)) / std::sqrt(2.0);
    CVec v(static_cast<Eigen::Index>(d));
    cplx c = std::exp(-0.5 * std::norm(z));
    for (std::size_t n = 0; n < d; ++n) {
        v(static_cast<Eigen::Index>(n)) = c;
        c *= z / std::sqrt(static_cast<double>(n + 1));
    }
    return v;
}

/// Normalized (|a> + |b>) superposition as a density matrix.
inline DensityMatrix cat_state(std::size_t d, const ModeScale& scale, double xa, double pa, double xb, double pb) {
    CVec v = coherent_vector(d, scale, xa, pa) + coherent_vector(d, scale, xb, pb);
    v.normalize();
    return DensityMatrix(v * v.adjoint());
}

struct PhasePatch {
    double x0 = 0.0;
    double p0 = 0.0;
};

/// V(t) = |<a|rho|b>| / sqrt(<a|rho|a><b|rho|b>) with coherent-state patches;
/// with corotate_frequency > 0 the patch centres follow the free harmonic flow.
inline std::vector<double> coherence_profile(const std::vector<DensityMatrix>& samples, const std::vector<double>& t,
                                             const PhasePatch& a, const PhasePatch& b, const ModeScale& scale,
                                             double corotate_frequency = 0.0) {
    detail::require(samples.size() == t.size(), "coherence_profile: size mismatch");
    std::vector<double> out;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto d = static_cast<std::size_t>(samples[k].dim());
        auto centre = [&](const PhasePatch& p) {
            if (corotate_frequency <= 0.0) return p;
            const double w = corotate_frequency, c = std::cos(w * t[k]), s = std::sin(w * t[k]);
            return PhasePatch{p.x0 * c + p.p0 / (scale.mass * w) * s, p.p0 * c - scale.mass * w * p.x0 * s};
        };
        const auto pa = centre(a), pb = centre(b);
        const CVec va = coherent_vector(d, scale, pa.x0, pa.p0);
        const CVec vb = coherent_vector(d, scale, pb.x0, pb.p0);
        const auto& r = samples[k].matrix();
        const double aa = va.dot(r * va).real();
        const double bb = vb.dot(r * vb).real();
        if (!(aa > 1e-300 && bb > 1e-300)) throw ValidationError("coherence_profile: vanishing diagonal patch weight");
        out.push_back(std::abs(va.dot(r * vb)) / std::sqrt(aa * bb));
    }
    return out;
}

/// Least-squares slope of -ln V(t) against t for samples with t <= t_max.
inline double fit_decay_rate(const std::vector<double>& t, const std::vector<double>& v, double t_max) {
    double st = 0, sy = 0, stt = 0, sty = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] > t_max) continue;
        const double y = -std::log(v[k]);
        st += t[k];
        sy += y;
        stt += t[k] * t[k];
        sty += t[k] * y;
        ++n;
    }
    detail::require(n >= 2, "fit_decay_rate: need at least two samples");
    const double dn = static_cast<double>(n);
    return (dn * sty - st * sy) / (dn * stt - st * st);
}

}  // namespace pardec
