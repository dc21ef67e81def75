#pragma once

// Brute-force truncated Fock-space oracle for up to three modes: dense
// operators, exact unitary evolution by eigendecomposition, moments, partial
// traces, overlaps and partial-transpose negativity.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pardec/decoherence.hpp"
#include "pardec/decomposition.hpp"
#include "pardec/dynamics.hpp"
#include "pardec/models.hpp"
#include "pardec/phase_space.hpp"

namespace pardec {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

inline constexpr std::size_t kFockDimensionCap = 20000;
inline constexpr double kLeakageThreshold = 1e-6;

struct FockMode {
    std::string label;
    std::size_t cutoff = 2;
    ModeScale scale;  // sets x = (a + a^dag)/sqrt(2 m w)
};

class FockSpace {
public:
    explicit FockSpace(std::vector<FockMode> modes) : modes_(std::move(modes)) {
        detail::require(!modes_.empty() && modes_.size() <= 3, "fock space: between 1 and 3 modes");
        std::size_t d = 1;
        std::vector<std::string> labels;
        for (const auto& m : modes_) {
            detail::require(m.cutoff >= 2, "fock space: cutoff below 2 for mode '" + m.label + "'");
            detail::require(m.scale.mass > 0.0 && m.scale.frequency > 0.0, "fock space: scales must be positive");
            d *= m.cutoff;
            labels.push_back(m.label);
        }
        if (d > kFockDimensionCap) {
            std::ostringstream os;
            os << "fock space: dimension " << d << " exceeds the cap " << kFockDimensionCap;
            throw ValidationError(os.str());
        }
        dim_ = d;
        layout_ = PhaseSpaceLayout(labels);
    }

    std::size_t dim() const { return dim_; }
    std::size_t n_modes() const { return modes_.size(); }
    const std::vector<FockMode>& modes() const { return modes_; }
    const PhaseSpaceLayout& layout() const { return layout_; }
    std::size_t cutoff(std::size_t k) const { return modes_.at(k).cutoff; }

private:
    std::vector<FockMode> modes_;
    std::size_t dim_ = 1;
    PhaseSpaceLayout layout_{std::vector<std::string>{"_"}};
};

namespace detail {

inline CMat annihilation(std::size_t d) {
    CMat a = CMat::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t n = 1; n < d; ++n)
        a(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(n)) = std::sqrt(static_cast<double>(n));
    return a;
}

/// Kronecker product of single-mode operators (first mode most significant).
inline CMat kron_all(const std::vector<CMat>& ops) {
    CMat out = ops.front();
    for (std::size_t k = 1; k < ops.size(); ++k) {
        const CMat& b = ops[k];
        CMat next(out.rows() * b.rows(), out.cols() * b.cols());
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            for (Eigen::Index j = 0; j < out.cols(); ++j) next.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = out(i, j) * b;
        out = std::move(next);
    }
    return out;
}

inline CMat embed(const FockSpace& space, std::size_t mode, const CMat& local) {
    std::vector<CMat> ops;
    for (std::size_t k = 0; k < space.n_modes(); ++k) {
        const auto d = static_cast<Eigen::Index>(space.cutoff(k));
        ops.push_back(k == mode ? local : CMat::Identity(d, d));
    }
    return kron_all(ops);
}

inline CMat hermitian_part(const CMat& m) { return 0.5 * (m + m.adjoint()); }

/// exp(-i s A) for Hermitian A.
inline CMat unitary_exp(const CMat& a, double s) {
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(a));
    const CVec phase = (es.eigenvalues().cast<cplx>() * cplx(0.0, -s)).array().exp();
    return es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

/// Single-mode (x, p, n) on a d-level truncation at the given scale.
struct LocalOperators {
    CMat x, p, n;
};

inline LocalOperators local_operators(std::size_t d, const ModeScale& s) {
    detail::require(d >= 2, "fock operators: cutoff below 2");
    const CMat a = detail::annihilation(d);
    const CMat ad = a.adjoint();
    const double mw = s.mass * s.frequency;
    return {(a + ad) / std::sqrt(2.0 * mw), cplx(0.0, std::sqrt(mw / 2.0)) * (ad - a), ad * a};
}

/// Full-space quadratures z = (x_1..x_n, p_1..p_n) of the basis modes.
inline std::vector<CMat> build_operators(const FockSpace& space) {
    const auto n = space.n_modes();
    std::vector<CMat> z(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto loc = local_operators(space.cutoff(k), space.modes()[k].scale);
        z[k] = detail::embed(space, k, loc.x);
        z[k + n] = detail::embed(space, k, loc.p);
    }
    return z;
}

inline std::vector<CMat> number_operators(const FockSpace& space) {
    std::vector<CMat> out;
    for (std::size_t k = 0; k < space.n_modes(); ++k)
        out.push_back(detail::embed(space, k, local_operators(space.cutoff(k), space.modes()[k].scale).n));
    return out;
}

/// Quadratures of the source coordinates of `t` written in the Fock basis of
/// its target modes: x_old = A^{-1} x_new, p_old = A^T p_new.
inline std::vector<CMat> source_quadratures(const std::vector<CMat>& z_new, const LinearCoordinateTransform& t) {
    const auto n = static_cast<Eigen::Index>(t.source().n_modes());
    detail::require(static_cast<Eigen::Index>(z_new.size()) == 2 * n, "source_quadratures: size mismatch");
    const Mat& ai = t.inverse_position_map();
    const Mat at = t.position_map().transpose();
    const auto dim = z_new.front().rows();
    std::vector<CMat> out(static_cast<std::size_t>(2 * n), CMat::Zero(dim, dim));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (ai(i, j) != 0.0) out[static_cast<std::size_t>(i)] += ai(i, j) * z_new[static_cast<std::size_t>(j)];
            if (at(i, j) != 0.0)
                out[static_cast<std::size_t>(n + i)] += at(i, j) * z_new[static_cast<std::size_t>(n + j)];
        }
    return out;
}

/// 1/2 sum_ij h_ij Z_i Z_j + sum_i l_i Z_i, Hermitized.
inline CMat quadratic_operator(const Mat& h, const Vec& l, const std::vector<CMat>& z) {
    const auto d = static_cast<Eigen::Index>(z.size());
    detail::require(h.rows() == d && h.cols() == d, "quadratic_operator: size mismatch");
    const auto dim = z.front().rows();
    CMat out = CMat::Zero(dim, dim);
    for (Eigen::Index i = 0; i < d; ++i) {
        CMat row = CMat::Zero(dim, dim);
        bool any = false;
        for (Eigen::Index j = 0; j < d; ++j)
            if (h(i, j) != 0.0) {
                row += h(i, j) * z[static_cast<std::size_t>(j)];
                any = true;
            }
        if (any) out += 0.5 * z[static_cast<std::size_t>(i)] * row;
        if (l.size() == d && l(i) != 0.0) out += l(i) * z[static_cast<std::size_t>(i)];
    }
    return detail::hermitian_part(out);
}

inline CMat hamiltonian_operator(const QuadraticHamiltonian& h, const std::vector<CMat>& z) {
    return quadratic_operator(h.matrix(), h.linear(), z);
}

namespace detail {

// Positions of the states of `space` inside the same space with every cutoff + 1.
inline std::vector<Eigen::Index> inner_indices(const FockSpace& space) {
    std::vector<Eigen::Index> idx{0};
    for (std::size_t k = 0; k < space.n_modes(); ++k) {
        const auto d = static_cast<Eigen::Index>(space.cutoff(k));
        std::vector<Eigen::Index> next;
        for (auto i : idx)
            for (Eigen::Index n = 0; n < d; ++n) next.push_back(i * (d + 1) + n);
        idx = std::move(next);
    }
    return idx;
}

}  // namespace detail

/// P H P for H = 1/2 Z^T h Z + l^T Z, with Z the basis quadratures or, given
/// `source`, the source quadratures of that transform. Products are formed one
/// level above every cutoff, so x^2 and p^2 keep their exact top-level
/// elements and an oscillator in its own basis stays w (n + 1/2).
inline CMat projected_quadratic_operator(const FockSpace& space, const Mat& h, const Vec& l,
                                         const LinearCoordinateTransform* source = nullptr) {
    std::vector<FockMode> modes = space.modes();
    for (auto& m : modes) ++m.cutoff;
    auto z = build_operators(FockSpace(modes));
    if (source) z = source_quadratures(z, *source);
    const CMat full = quadratic_operator(h, l, z);
    const auto idx = detail::inner_indices(space);
    const auto n = static_cast<Eigen::Index>(idx.size());
    CMat out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = full(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    return out;
}

// ---------------------------------------------------------------------------

class DensityMatrix {
public:
    explicit DensityMatrix(CMat rho) : rho_(std::move(rho)) {
        detail::require(rho_.rows() == rho_.cols() && rho_.rows() > 0, "density matrix: not square");
    }
    const CMat& matrix() const { return rho_; }
    Eigen::Index dim() const { return rho_.rows(); }
    double trace() const { return rho_.trace().real(); }
    double hermiticity_error() const { return rho_.rows() ? (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() : 0.0; }
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<CMat> es(detail::hermitian_part(rho_), Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }
    double purity() const { return (rho_ * rho_).trace().real(); }
    cplx expectation(const CMat& op) const { return (rho_ * op).trace(); }

    /// Hermitian within 1e-10, trace within 1e-10 of 1, eigenvalues >= -1e-8.
    void validate() const {
        if (hermiticity_error() > 1e-10) throw NumericalTrustError("density matrix: not Hermitian");
        if (std::abs(trace() - 1.0) > 1e-10) throw NumericalTrustError("density matrix: trace differs from 1");
        if (min_eigenvalue() < -1e-8) throw NumericalTrustError("density matrix: negative eigenvalue");
    }

private:
    CMat rho_;
};

/// Gibbs state of a single oscillator of the given (mass, frequency) written in
/// a basis with possibly different scale. The oscillator Hamiltonian is
/// diagonalized in the truncated basis and the weights renormalized.
struct ThermalTruncation {
    CMat rho;
    double missing_weight = 0.0;  // exact Boltzmann weight of levels >= d, e^{-d w / T}
};

inline ThermalTruncation local_gibbs(std::size_t d, const ModeScale& basis, const ThermalMode& state) {
    detail::require(state.temperature >= 0.0, "gibbs state: temperature must be non-negative");
    Mat hm = Mat::Zero(2, 2);
    hm(0, 0) = state.mass * state.frequency * state.frequency;
    hm(1, 1) = 1.0 / state.mass;
    Eigen::SelfAdjointEigenSolver<CMat> es(projected_quadratic_operator(FockSpace({{"m", d, basis}}), hm, Vec::Zero(2)));
    const Vec e = es.eigenvalues();
    Vec w = Vec::Zero(e.size());
    if (state.temperature == 0.0) {
        w(0) = 1.0;
    } else {
        for (Eigen::Index k = 0; k < e.size(); ++k) w(k) = std::exp(-(e(k) - e(0)) / state.temperature);
    }
    w /= w.sum();
    const double missing =
        state.temperature == 0.0 ? 0.0 : std::exp(-static_cast<double>(d) * state.frequency / state.temperature);
    return {es.eigenvectors() * w.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint(), missing};
}

/// exp(i (p0 X - x0 P)) shifts <X> by x0 and <P> by p0.
inline CMat displacement_operator(const CMat& x, const CMat& p, double x0, double p0) {
    return detail::unitary_exp(-(p0 * x - x0 * p), 1.0);
}

inline DensityMatrix apply_unitary(const DensityMatrix& rho, const CMat& u) {
    return DensityMatrix(u * rho.matrix() * u.adjoint());
}

/// Product of per-mode Gibbs states (T = 0 gives the ground state) of local
/// oscillators given by `states`, in the basis of `space`.
inline DensityMatrix product_thermal_state(const FockSpace& space, const std::vector<ThermalMode>& states,
                                           double* missing_weight = nullptr) {
    detail::require(states.size() == space.n_modes(), "product_thermal_state: one state per mode required");
    std::vector<CMat> parts;
    double missing = 0.0;
    for (std::size_t k = 0; k < space.n_modes(); ++k) {
        auto g = local_gibbs(space.cutoff(k), space.modes()[k].scale, states[k]);
        missing = std::max(missing, g.missing_weight);
        parts.push_back(std::move(g.rho));
    }
    if (missing_weight) *missing_weight = missing;
    return DensityMatrix(detail::kron_all(parts));
}

/// Ground state of a Hermitian operator as a pure density matrix.
inline DensityMatrix ground_state(const CMat& h) {
    Eigen::SelfAdjointEigenSolver<CMat> es(detail::hermitian_part(h));
    const CVec v = es.eigenvectors().col(0);
    return DensityMatrix(v * v.adjoint());
}

/// exp(-iHt) for many t from a single eigendecomposition.
class UnitaryEvolver {
public:
    explicit UnitaryEvolver(const CMat& h) : es_(detail::hermitian_part(h)) {}
    CMat unitary(double t) const {
        const CVec phase = (es_.eigenvalues().cast<cplx>() * cplx(0.0, -t)).array().exp();
        return es_.eigenvectors() * phase.asDiagonal() * es_.eigenvectors().adjoint();
    }
    DensityMatrix evolve(const DensityMatrix& rho, double t) const { return apply_unitary(rho, unitary(t)); }

private:
    Eigen::SelfAdjointEigenSolver<CMat> es_;
};

inline DensityMatrix evolve_exact(const DensityMatrix& rho0, const CMat& h, double t) {
    return UnitaryEvolver(h).evolve(rho0, t);
}

/// Reduced state on the listed mode indices (kept in ascending order).
inline DensityMatrix partial_trace(const DensityMatrix& rho, const FockSpace& space, std::vector<std::size_t> keep) {
    std::sort(keep.begin(), keep.end());
    const auto n = space.n_modes();
    std::vector<std::size_t> dims;
    for (std::size_t k = 0; k < n; ++k) dims.push_back(space.cutoff(k));
    std::vector<bool> kept(n, false);
    for (auto k : keep) kept.at(k) = true;
    std::size_t dk = 1;
    for (auto k : keep) dk *= dims[k];
    CMat out = CMat::Zero(static_cast<Eigen::Index>(dk), static_cast<Eigen::Index>(dk));
    const auto& r = rho.matrix();
    const auto total = static_cast<std::size_t>(r.rows());
    std::vector<std::size_t> di(n), dj(n);
    auto digits = [&](std::size_t idx, std::vector<std::size_t>& dig) {
        for (std::size_t k = n; k-- > 0;) {
            dig[k] = idx % dims[k];
            idx /= dims[k];
        }
    };
    auto kept_index = [&](const std::vector<std::size_t>& dig) {
        std::size_t idx = 0;
        for (auto k : keep) idx = idx * dims[k] + dig[k];
        return idx;
    };
    for (std::size_t i = 0; i < total; ++i) {
        digits(i, di);
        for (std::size_t j = 0; j < total; ++j) {
            digits(j, dj);
            bool same = true;
            for (std::size_t k = 0; k < n && same; ++k)
                if (!kept[k] && di[k] != dj[k]) same = false;
            if (!same) continue;
            out(static_cast<Eigen::Index>(kept_index(di)), static_cast<Eigen::Index>(kept_index(dj))) +=
                r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    return DensityMatrix(out);
}

inline FockSpace subspace(const FockSpace& space, std::vector<std::size_t> keep) {
    std::sort(keep.begin(), keep.end());
    std::vector<FockMode> m;
    for (auto k : keep) m.push_back(space.modes().at(k));
    return FockSpace(m);
}

/// Max over modes of the population in that mode's top two Fock levels.
inline double leakage(const DensityMatrix& rho, const FockSpace& space) {
    double worst = 0.0;
    for (std::size_t k = 0; k < space.n_modes(); ++k) {
        const auto red = partial_trace(rho, space, {k});
        const auto d = red.dim();
        double top = red.matrix()(d - 1, d - 1).real();
        if (d >= 2) top += red.matrix()(d - 2, d - 2).real();
        worst = std::max(worst, top);
    }
    return worst;
}

/// <z> and sigma_ij = 1/2 <{dz_i, dz_j}> for the given quadrature operators.
inline GaussianState oracle_moments(const DensityMatrix& rho, const std::vector<CMat>& z, const PhaseSpaceLayout& layout) {
    const auto d = static_cast<Eigen::Index>(z.size());
    Vec mean(d);
    for (Eigen::Index i = 0; i < d; ++i) mean(i) = rho.expectation(z[static_cast<std::size_t>(i)]).real();
    Mat cov(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const CMat rz = rho.matrix() * z[static_cast<std::size_t>(i)];
        for (Eigen::Index j = i; j < d; ++j) {
            const double zz = (rz * z[static_cast<std::size_t>(j)]).trace().real();  // Re <z_j z_i>
            cov(i, j) = cov(j, i) = zz - mean(i) * mean(j);
        }
    }
    return {layout, mean, cov};
}

/// tr(ra rb) / sqrt(tr ra^2 tr rb^2).
inline double normalized_overlap(const DensityMatrix& a, const DensityMatrix& b) {
    detail::require(a.dim() == b.dim(), "normalized_overlap: dimension mismatch");
    const double ab = (a.matrix() * b.matrix()).trace().real();
    return ab / std::sqrt(a.purity() * b.purity());
}

/// ln || rho^{T_B} ||_1 with B the listed mode indices.
inline double log_negativity_pt(const DensityMatrix& rho, const FockSpace& space, const std::vector<std::size_t>& part_b) {
    const auto n = space.n_modes();
    std::vector<std::size_t> dims;
    for (std::size_t k = 0; k < n; ++k) dims.push_back(space.cutoff(k));
    std::vector<bool> in_b(n, false);
    for (auto k : part_b) in_b.at(k) = true;
    const auto& r = rho.matrix();
    const auto total = static_cast<std::size_t>(r.rows());
    CMat pt(r.rows(), r.cols());
    std::vector<std::size_t> di(n), dj(n);
    auto digits = [&](std::size_t idx, std::vector<std::size_t>& dig) {
        for (std::size_t k = n; k-- > 0;) {
            dig[k] = idx % dims[k];
            idx /= dims[k];
        }
    };
    auto compose = [&](const std::vector<std::size_t>& dig) {
        std::size_t idx = 0;
        for (std::size_t k = 0; k < n; ++k) idx = idx * dims[k] + dig[k];
        return idx;
    };
    for (std::size_t i = 0; i < total; ++i) {
        digits(i, di);
        for (std::size_t j = 0; j < total; ++j) {
            digits(j, dj);
            auto a = di, b = dj;
            for (std::size_t k = 0; k < n; ++k)
                if (in_b[k]) std::swap(a[k], b[k]);
            pt(static_cast<Eigen::Index>(compose(a)), static_cast<Eigen::Index>(compose(b))) =
                r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    Eigen::SelfAdjointEigenSolver<CMat> es(detail::hermitian_part(pt), Eigen::EigenvaluesOnly);
    return std::log(es.eigenvalues().cwiseAbs().sum());
}


// ---------------------------------------------------------------------------
// Weighted ensembles of state vectors: rho = sum_k w_k |psi_k><psi_k|. Used
// by the cross-check so that evolution and marginals cost O(D^2) per vector
// instead of dense D x D products.

struct StateEnsemble {
    std::vector<double> weights;
    CMat vectors;  // D x K, one column per member

    DensityMatrix density() const {
        return DensityMatrix(vectors * Vec::Map(weights.data(), static_cast<Eigen::Index>(weights.size()))
                                           .cast<cplx>()
                                           .asDiagonal() *
                             vectors.adjoint());
    }
    double expectation(const CMat& op) const {
        double s = 0.0;
        for (Eigen::Index k = 0; k < vectors.cols(); ++k)
            s += weights[static_cast<std::size_t>(k)] * vectors.col(k).dot(op * vectors.col(k)).real();
        return s;
    }
};

/// Product of per-mode Gibbs states as an ensemble; members with weight below
/// `cut` (relative to the largest) are dropped and the rest renormalized.
inline StateEnsemble product_thermal_ensemble(const FockSpace& space, const std::vector<ThermalMode>& states,
                                              double cut = 1e-14, double* missing_weight = nullptr) {
    detail::require(states.size() == space.n_modes(), "product_thermal_ensemble: one state per mode required");
    std::vector<std::vector<std::pair<double, CVec>>> local;
    double missing = 0.0;
    for (std::size_t k = 0; k < space.n_modes(); ++k) {
        const auto g = local_gibbs(space.cutoff(k), space.modes()[k].scale, states[k]);
        missing = std::max(missing, g.missing_weight);
        Eigen::SelfAdjointEigenSolver<CMat> es(detail::hermitian_part(g.rho));
        std::vector<std::pair<double, CVec>> members;
        const double top = es.eigenvalues().maxCoeff();
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
            if (es.eigenvalues()(i) > cut * top) members.emplace_back(es.eigenvalues()(i), es.eigenvectors().col(i));
        local.push_back(std::move(members));
    }
    if (missing_weight) *missing_weight = missing;
    std::vector<std::pair<double, CVec>> acc{{1.0, CVec::Ones(1)}};
    for (const auto& members : local) {
        std::vector<std::pair<double, CVec>> next;
        for (const auto& [wa, va] : acc)
            for (const auto& [wb, vb] : members) {
                CVec v(va.size() * vb.size());
                for (Eigen::Index i = 0; i < va.size(); ++i) v.segment(i * vb.size(), vb.size()) = va(i) * vb;
                next.emplace_back(wa * wb, std::move(v));
            }
        acc = std::move(next);
    }
    double total = 0.0;
    for (const auto& m : acc) total += m.first;
    StateEnsemble e;
    e.vectors.resize(static_cast<Eigen::Index>(space.dim()), static_cast<Eigen::Index>(acc.size()));
    for (std::size_t k = 0; k < acc.size(); ++k) {
        e.weights.push_back(acc[k].first / total);
        e.vectors.col(static_cast<Eigen::Index>(k)) = acc[k].second;
    }
    return e;
}

/// exp(i sum_k (g_k x_k + g_{n+k} p_k)) over basis modes, built mode by mode.
inline CMat linear_displacement(const FockSpace& space, const Vec& g) {
    const auto n = space.n_modes();
    detail::require(static_cast<std::size_t>(g.size()) == 2 * n, "linear_displacement: size mismatch");
    std::vector<CMat> ops;
    for (std::size_t k = 0; k < n; ++k) {
        const auto loc = local_operators(space.cutoff(k), space.modes()[k].scale);
        ops.push_back(detail::unitary_exp(g(static_cast<Eigen::Index>(k)) * loc.x +
                                              g(static_cast<Eigen::Index>(n + k)) * loc.p,
                                          -1.0));
    }
    return detail::kron_all(ops);
}

/// Generator coefficients for shifting a source coordinate of `t` (mode index
/// `mode`) by (x0, p0), in terms of the target-basis quadratures.
inline Vec source_displacement_generator(const LinearCoordinateTransform& t, std::size_t mode, double x0, double p0) {
    const auto n = static_cast<Eigen::Index>(t.source().n_modes());
    const auto i = static_cast<Eigen::Index>(mode);
    Vec g(2 * n);
    // p0 x_old_i - x0 p_old_i with x_old = A^{-1} x_new, p_old = A^T p_new
    g.head(n) = p0 * t.inverse_position_map().row(i).transpose();
    g.tail(n) = -x0 * t.position_map().col(i);
    return g;
}

inline StateEnsemble apply_unitary(const StateEnsemble& e, const CMat& u) { return {e.weights, u * e.vectors}; }

class EnsembleEvolver {
public:
    explicit EnsembleEvolver(const CMat& h) : es_(detail::hermitian_part(h)) {}
    /// Precompute the eigenbasis coefficients of an initial ensemble.
    CMat coefficients(const StateEnsemble& e) const { return es_.eigenvectors().adjoint() * e.vectors; }
    StateEnsemble evolve(const StateEnsemble& e0, const CMat& coeff, double t) const {
        const CVec phase = (es_.eigenvalues().cast<cplx>() * cplx(0.0, -t)).array().exp();
        return {e0.weights, es_.eigenvectors() * (phase.asDiagonal() * coeff)};
    }

private:
    Eigen::SelfAdjointEigenSolver<CMat> es_;
};

/// Reduced state of a two-mode ensemble on mode 0 or mode 1.
inline DensityMatrix reduce_two_mode(const StateEnsemble& e, const FockSpace& space, std::size_t keep) {
    detail::require(space.n_modes() == 2 && keep < 2, "reduce_two_mode: two-mode space required");
    const auto d0 = static_cast<Eigen::Index>(space.cutoff(0));
    const auto d1 = static_cast<Eigen::Index>(space.cutoff(1));
    const auto dk = keep == 0 ? d0 : d1;
    CMat out = CMat::Zero(dk, dk);
    for (Eigen::Index k = 0; k < e.vectors.cols(); ++k) {
        // psi index = i0 * d1 + i1; a column-major map with d1 rows gives m(i1, i0)
        const CVec col = e.vectors.col(k);
        Eigen::Map<const CMat> m(col.data(), d1, d0);
        const double w = e.weights[static_cast<std::size_t>(k)];
        if (keep == 1) out += w * m * m.adjoint();
        else out += w * (m.transpose() * m.conjugate());
    }
    return DensityMatrix(out);
}

inline double ensemble_leakage(const StateEnsemble& e, const FockSpace& space) {
    double worst = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
        const auto r = reduce_two_mode(e, space, k);
        const auto d = r.dim();
        worst = std::max(worst, r.matrix()(d - 1, d - 1).real() + r.matrix()(d - 2, d - 2).real());
    }
    return worst;
}

/// For a single pure member, ln ||rho^{T_B}||_1 = 2 ln sum_i s_i over the
/// Schmidt coefficients. Mixed ensembles fall back to the dense partial transpose.
inline double ensemble_log_negativity(const StateEnsemble& e, const FockSpace& space) {
    if (e.vectors.cols() == 1) {
        const auto d0 = static_cast<Eigen::Index>(space.cutoff(0));
        const auto d1 = static_cast<Eigen::Index>(space.cutoff(1));
        const CVec col = e.vectors.col(0);
        Eigen::Map<const CMat> m(col.data(), d1, d0);
        const double s = Eigen::JacobiSVD<CMat>(m).singularValues().sum();
        return 2.0 * std::log(s);
    }
    return log_negativity_pt(e.density(), space, {1});
}

inline GaussianState ensemble_moments(const StateEnsemble& e, const std::vector<CMat>& z, const PhaseSpaceLayout& layout) {
    const auto d = static_cast<Eigen::Index>(z.size());
    Vec mean = Vec::Zero(d);
    Mat cov = Mat::Zero(d, d);
    for (Eigen::Index k = 0; k < e.vectors.cols(); ++k) {
        const double w = e.weights[static_cast<std::size_t>(k)];
        std::vector<CVec> zv;
        for (Eigen::Index i = 0; i < d; ++i) zv.push_back(z[static_cast<std::size_t>(i)] * e.vectors.col(k));
        for (Eigen::Index i = 0; i < d; ++i) {
            mean(i) += w * e.vectors.col(k).dot(zv[static_cast<std::size_t>(i)]).real();
            for (Eigen::Index j = i; j < d; ++j)
                cov(i, j) += w * zv[static_cast<std::size_t>(i)].dot(zv[static_cast<std::size_t>(j)]).real();
        }
    }
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i; j < d; ++j) cov(j, i) = cov(i, j) = cov(i, j) - mean(i) * mean(j);
    return {layout, mean, cov};
}

// ---------------------------------------------------------------------------
// Two-mode Gaussian cross-check.

struct CrosscheckInput {
    TwoModeParams params;
    double temperature = 0.0;  // environment temperature
    ModeScale open_scale;      // S vacuum scale
    std::size_t cutoff_S = 24;
    std::size_t cutoff_E = 24;
    CoherentAmplitude alpha{"S", 1.0, 0.0};
    CoherentAmplitude beta{"S", -1.0, 0.0};
    std::vector<double> t_grid;
    bool check_cm_entanglement = true;
    std::size_t cutoff_CM = 24;
    std::size_t cutoff_R = 24;
};

struct CrosscheckRow {
    double t = 0.0;
    double mean_dev = 0.0;
    double cov_dev = 0.0;
    double purity_dev = 0.0;   // reduced S purity
    double overlap_dev = 0.0;  // environment marginal overlap of the branches
    double overlap_gauss = 1.0;
    double overlap_oracle = 1.0;
    double leakage = 0.0;
    double ln_cm_gauss = 0.0;
    double ln_cm_oracle = 0.0;
    double cm_leakage = 0.0;
};

struct CrosscheckReport {
    std::vector<CrosscheckRow> rows;
    double max_mean_dev = 0.0;
    double max_cov_dev = 0.0;
    double max_purity_dev = 0.0;
    double max_overlap_dev = 0.0;
    double max_leakage = 0.0;
    double thermal_missing_weight = 0.0;
    bool trusted = true;
    bool ln_sign_agrees = true;  // wherever the Gaussian CM|R value exceeds 1e-3, the oracle's is positive too
    bool ln_positive_detected = false;
};

/// The oracle evolves both branches in the S,E product basis: branch alpha
/// gives the moments, and the pair gives the environment overlap. The CM|R
/// entanglement of branch alpha is evaluated in a separate CM,R Fock basis in
/// which the original quadratures are written through the inverse transform.
/// Its initial state is the ground state of the local S and E oscillators,
/// so that path needs T = 0.
inline CrosscheckReport gaussian_crosscheck(const CrosscheckInput& in) {
    const auto h = build_two_mode(in.params);
    detail::require(in.alpha.mode == "S" && in.beta.mode == "S", "crosscheck: amplitudes must act on mode 'S'");
    detail::require(!in.t_grid.empty(), "crosscheck: empty time grid");
    const ModeScale e_scale{in.params.m_E, in.params.omega};
    const FockSpace space({{"S", in.cutoff_S, in.open_scale}, {"E", in.cutoff_E, e_scale}});
    const auto z = build_operators(space);
    const EnsembleEvolver u(projected_quadratic_operator(space, h.matrix(), h.linear()));
    const auto ident = LinearCoordinateTransform::identity(h.layout());

    CrosscheckReport rep;
    const auto e0 = product_thermal_ensemble(
        space, {{in.open_scale.mass, in.open_scale.frequency, 0.0}, {e_scale.mass, e_scale.frequency, in.temperature}},
        1e-14, &rep.thermal_missing_weight);
    const auto ea0 = apply_unitary(e0, linear_displacement(space, source_displacement_generator(ident, 0, in.alpha.x0, in.alpha.p0)));
    const auto eb0 = apply_unitary(e0, linear_displacement(space, source_displacement_generator(ident, 0, in.beta.x0, in.beta.p0)));
    const CMat ca = u.coefficients(ea0), cb = u.coefficients(eb0);

    const auto g0 = product_state(coherent_state(PhaseSpaceLayout({"S"}), {}, {in.open_scale}),
                                  thermal_state(PhaseSpaceLayout({"E"}), {{e_scale.mass, e_scale.frequency, in.temperature}}));
    const auto ga0 = g0.displaced(in.alpha);
    const auto gb0 = g0.displaced(in.beta);

    std::optional<FockSpace> cm_space;
    std::optional<EnsembleEvolver> cm_u;
    std::optional<StateEnsemble> cm_e0;
    CMat cm_c;
    const auto cm_t = cm_relative_transform(h.layout(), {in.params.m_S, in.params.m_E});
    if (in.check_cm_entanglement) {
        detail::require(in.temperature == 0.0, "crosscheck: the CM|R oracle path needs a pure initial state (T = 0)");
        const double mt = in.params.m_S + in.params.m_E;
        const double mu = in.params.m_S * in.params.m_E / mt;
        cm_space.emplace(std::vector<FockMode>{{"CM", in.cutoff_CM, {mt, in.open_scale.frequency}},
                                               {"R1", in.cutoff_R, {mu, in.params.omega}}});
        Mat h_loc = Mat::Zero(4, 4);
        h_loc(0, 0) = in.open_scale.mass * in.open_scale.frequency * in.open_scale.frequency;
        h_loc(1, 1) = e_scale.mass * e_scale.frequency * e_scale.frequency;
        h_loc(2, 2) = 1.0 / in.open_scale.mass;
        h_loc(3, 3) = 1.0 / e_scale.mass;
        Eigen::SelfAdjointEigenSolver<CMat> es(projected_quadratic_operator(*cm_space, h_loc, Vec::Zero(4), &cm_t));
        StateEnsemble ground{{1.0}, es.eigenvectors().col(0)};
        cm_e0 = apply_unitary(ground, linear_displacement(*cm_space, source_displacement_generator(cm_t, 0, in.alpha.x0, in.alpha.p0)));
        cm_u.emplace(projected_quadratic_operator(*cm_space, h.matrix(), h.linear(), &cm_t));
        cm_c = cm_u->coefficients(*cm_e0);
    }

    for (double t : in.t_grid) {
        CrosscheckRow row;
        row.t = t;
        const auto p = propagator(h, t);
        const auto ga = evolve(ga0, p);
        const auto gb = evolve(gb0, p);
        const auto ra = u.evolve(ea0, ca, t);
        const auto rb = u.evolve(eb0, cb, t);
        const auto om = ensemble_moments(ra, z, h.layout());
        row.mean_dev = (om.mean() - ga.mean()).cwiseAbs().maxCoeff();
        row.cov_dev = max_abs(om.covariance() - ga.covariance());
        row.purity_dev = std::abs(reduce_two_mode(ra, space, 0).purity() - purity(reduce(ga, {"S"})));
        row.overlap_gauss = gaussian_overlap(reduce(ga, {"E"}), reduce(gb, {"E"}));
        row.overlap_oracle = normalized_overlap(reduce_two_mode(ra, space, 1), reduce_two_mode(rb, space, 1));
        row.overlap_dev = std::abs(row.overlap_gauss - row.overlap_oracle);
        row.leakage = std::max(ensemble_leakage(ra, space), ensemble_leakage(rb, space));
        if (cm_space) {
            row.ln_cm_gauss = log_negativity(transform_state(ga, cm_t), {"CM"}, {"R1"});
            const auto rc = cm_u->evolve(*cm_e0, cm_c, t);
            row.ln_cm_oracle = ensemble_log_negativity(rc, *cm_space);
            row.cm_leakage = ensemble_leakage(rc, *cm_space);
            if (row.ln_cm_gauss > 1e-3) {
                if (row.ln_cm_oracle > 0.0) rep.ln_positive_detected = true;
                else rep.ln_sign_agrees = false;
            }
        }
        rep.max_mean_dev = std::max(rep.max_mean_dev, row.mean_dev);
        rep.max_cov_dev = std::max(rep.max_cov_dev, row.cov_dev);
        rep.max_purity_dev = std::max(rep.max_purity_dev, row.purity_dev);
        rep.max_overlap_dev = std::max(rep.max_overlap_dev, row.overlap_dev);
        rep.max_leakage = std::max({rep.max_leakage, row.leakage, row.cm_leakage});
        rep.rows.push_back(row);
    }
    rep.trusted = rep.max_leakage <= kLeakageThreshold;
    return rep;
}

}  // namespace pardec
