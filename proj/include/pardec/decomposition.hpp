#pragma once

// Linear canonical point transformations between global decompositions of
// the same closed system (S+E <-> CM+R), their action on Hamiltonians and
// Gaussian states, normal-mode linearization of an environment block, and
// the closed-form transformed constants used to cross-check the congruence.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pardec/models.hpp"
#include "pardec/phase_space.hpp"

namespace pardec {

/// x_new = A x_old, p_new = A^{-T} p_old, i.e. S = blockdiag(A, A^{-T}).
class LinearCoordinateTransform {
public:
    static constexpr double kSymplecticTolerance = 1e-10;
    static constexpr double kMaxCondition = 1e12;

    LinearCoordinateTransform(PhaseSpaceLayout source, PhaseSpaceLayout target, Mat a)
        : source_(std::move(source)), target_(std::move(target)), a_(std::move(a)) {
        const auto n = static_cast<Eigen::Index>(source_.n_modes());
        detail::require(target_.n_modes() == source_.n_modes(), "transform: source and target mode counts differ");
        detail::require(a_.rows() == n && a_.cols() == n, "transform: matrix size does not match layouts");
        detail::require(a_.allFinite(), "transform: non-finite entries");
        Eigen::JacobiSVD<Mat> svd(a_);
        const auto& sv = svd.singularValues();
        cond_ = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
        if (!(cond_ <= kMaxCondition)) {
            std::ostringstream os;
            os << "transform: position map is singular or ill-conditioned (condition number " << cond_ << ")";
            throw ValidationError(os.str());
        }
        a_inv_ = a_.partialPivLu().inverse();
        residual_ = symplectic_residual(symplectic());
        if (residual_ > kSymplecticTolerance) {
            std::ostringstream os;
            os << "transform: symplectic residual " << residual_ << " exceeds " << kSymplecticTolerance;
            throw NumericalTrustError(os.str());
        }
    }

    static LinearCoordinateTransform identity(const PhaseSpaceLayout& layout) {
        const auto n = static_cast<Eigen::Index>(layout.n_modes());
        return {layout, layout, Mat::Identity(n, n)};
    }

    const PhaseSpaceLayout& source() const { return source_; }
    const PhaseSpaceLayout& target() const { return target_; }
    const Mat& position_map() const { return a_; }
    const Mat& inverse_position_map() const { return a_inv_; }
    double condition_number() const { return cond_; }
    double symplectic_error() const { return residual_; }

    Mat symplectic() const {
        const auto n = a_.rows();
        Mat s = Mat::Zero(2 * n, 2 * n);
        s.topLeftCorner(n, n) = a_;
        s.bottomRightCorner(n, n) = a_inv_.transpose();
        return s;
    }

    Mat inverse_symplectic() const {
        const auto n = a_.rows();
        Mat s = Mat::Zero(2 * n, 2 * n);
        s.topLeftCorner(n, n) = a_inv_;
        s.bottomRightCorner(n, n) = a_.transpose();
        return s;
    }

    LinearCoordinateTransform inverse() const { return {target_, source_, a_inv_}; }

    /// `next` applied after this one.
    LinearCoordinateTransform then(const LinearCoordinateTransform& next) const {
        detail::require(next.source_ == target_, "transform composition: layouts do not chain");
        return {source_, next.target_, next.a_ * a_};
    }

private:
    PhaseSpaceLayout source_;
    PhaseSpaceLayout target_;
    Mat a_;
    Mat a_inv_;
    double cond_ = 1.0;
    double residual_ = 0.0;
};

/// How the n-1 relative coordinates are chosen.
enum class RelativeFamily {
    Jacobi,           // rho_a = (CM of modes 1..a) - x_{a+1}
    RelativeToFirst,  // rho_a = x_1 - x_{a+1}
};

inline std::string to_string(RelativeFamily f) {
    return f == RelativeFamily::Jacobi ? "jacobi" : "relative_to_first";
}

inline RelativeFamily relative_family_from_string(const std::string& s) {
    if (s == "jacobi") return RelativeFamily::Jacobi;
    if (s == "relative_to_first") return RelativeFamily::RelativeToFirst;
    throw ValidationError("unknown relative-coordinate family '" + s + "' (expected jacobi | relative_to_first)");
}

inline PhaseSpaceLayout cm_relative_layout(std::size_t n_modes) {
    std::vector<std::string> labels{"CM"};
    auto r = PhaseSpaceLayout::numbered("R", n_modes - 1);
    labels.insert(labels.end(), r.begin(), r.end());
    return PhaseSpaceLayout(labels);
}

/// Row 0 is the centre of mass sum m_k x_k / M; rows 1..n-1 are relative
/// coordinates of the chosen family. Every column of A^{-1}'s first column is 1.
inline LinearCoordinateTransform cm_relative_transform(const PhaseSpaceLayout& source,
                                                       const std::vector<double>& masses,
                                                       RelativeFamily family = RelativeFamily::Jacobi) {
    detail::require(masses.size() >= 2, "cm_relative_transform: at least two modes are required");
    detail::require(masses.size() == source.n_modes(), "cm_relative_transform: one mass per mode required");
    for (double m : masses) detail::require(m > 0.0, "cm_relative_transform: masses must be positive");
    const auto n = static_cast<Eigen::Index>(masses.size());
    double total = 0.0;
    for (double m : masses) total += m;
    Mat a = Mat::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) a(0, k) = masses[static_cast<std::size_t>(k)] / total;
    double partial = 0.0;
    for (Eigen::Index r = 1; r < n; ++r) {
        partial += masses[static_cast<std::size_t>(r - 1)];
        if (family == RelativeFamily::Jacobi) {
            for (Eigen::Index k = 0; k < r; ++k) a(r, k) = masses[static_cast<std::size_t>(k)] / partial;
        } else {
            a(r, 0) = 1.0;
        }
        a(r, r) = -1.0;
    }
    return {source, cm_relative_layout(masses.size()), a};
}

inline QuadraticHamiltonian transform_hamiltonian(const QuadraticHamiltonian& h, const LinearCoordinateTransform& t) {
    if (h.layout() != t.source()) throw ValidationError("transform_hamiltonian: layout mismatch");
    const Mat s_inv = t.inverse_symplectic();
    // energy invariance: 1/2 z'^T h' z' = 1/2 z^T h z with z' = S z
    Mat hp = s_inv.transpose() * h.matrix() * s_inv;
    hp = 0.5 * (hp + hp.transpose());
    Vec lp = s_inv.transpose() * h.linear();
    return {t.target(), hp, lp, h.tag()};
}

inline GaussianState transform_state(const GaussianState& s, const LinearCoordinateTransform& t) {
    if (s.layout() != t.source()) throw ValidationError("transform_state: layout mismatch");
    const Mat sym = t.symplectic();
    Mat cov = sym * s.covariance() * sym.transpose();
    cov = 0.5 * (cov + cov.transpose());
    return {t.target(), sym * s.mean(), cov};
}

/// Congruence of a position-space quadratic form: K' = A^{-T} K A^{-1}.
inline Mat transform_position_form(const Mat& k, const LinearCoordinateTransform& t) {
    const Mat& ai = t.inverse_position_map();
    return ai.transpose() * k * ai;
}

// ---------------------------------------------------------------------------
// Closed-form transformed constants.

/// CM+R constants of the two-mode model: H = P^2/2M + c1 X^2 + p^2/2mu + c2 rho^2 - c3 X rho.
struct TwoModeConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;
    double mu = 0.0;
    double total_mass = 0.0;
};

inline TwoModeConstants analytic_two_mode_constants(const TwoModeParams& p) {
    p.validate();
    const double m = p.m_S + p.m_E;
    const double mu = p.m_S * p.m_E / m;
    const double w2 = p.omega * p.omega;
    return {p.m_E * w2 / 2.0 - p.C, p.m_S * mu * w2 / (2.0 * m) + p.C * mu / m, p.C * (p.m_E - p.m_S) / m + mu * w2,
            mu, m};
}

/// CM+R constants of the Caldeira-Leggett model for the relative family in
/// use. Index a runs over relative coordinates, i over bath oscillators, and
/// w[a][i] = weights of x_i = X + sum_a w[a][i] rho_a (w_S[a] for the system).
/// With sign s of the coupling:
///   H = P^2/2M + (M Omega^2/2) X^2 + sum_a (mu_nu2_half[a]) rho_a^2
///       + kinetic(R) + V_R + s X sum_a sigma[a] rho_a  (+ harmonic additions)
struct ManyModeConstants {
    RelativeFamily family = RelativeFamily::Jacobi;
    int coupling_sign = -1;
    bool harmonic = false;

    double total_mass = 0.0;
    double m_omega_cm2_half = 0.0;  // M Omega_CM^2 / 2 without the harmonic addition
    std::vector<double> mu;         // diagonal of the R velocity-space mass matrix
    Mat mass_polarization;          // C[a][b], a != b; R velocity mass matrix = diag(mu) - C
    std::vector<double> mu_nu2_half;
    std::vector<double> sigma;
    std::vector<double> omega_a;  // Omega_a = sum_i kappa_i w[a][i]
    Mat omega_ab;                 // Omega_ab = sum_i m_i w_i^2 w[a][i] w[b][i] / 2
    Mat v_r_position;             // coefficient of rho_a rho_b (ordered pair, a != b)
    std::vector<double> weights_S;

    // Additions from V(x_S) = m_S w_S^2 x_S^2 / 2 (zero unless harmonic).
    double harmonic_x2 = 0.0;
    std::vector<double> harmonic_rho2;
    Mat harmonic_rho_pair;  // ordered-pair coefficient
    std::vector<double> harmonic_x_rho;

    bool cm_confined() const { return m_omega_cm2_half + harmonic_x2 > 0.0; }
    bool relative_confined(std::size_t a) const { return mu_nu2_half.at(a) + harmonic_rho2.at(a) > 0.0; }
    bool all_positive() const {
        if (!cm_confined()) return false;
        for (std::size_t a = 0; a < mu_nu2_half.size(); ++a)
            if (!relative_confined(a)) return false;
        return true;
    }
    std::vector<std::string> positivity_violations() const {
        std::vector<std::string> out;
        if (!cm_confined()) out.push_back("M Omega_CM^2/2 <= 0");
        for (std::size_t a = 0; a < mu_nu2_half.size(); ++a)
            if (!relative_confined(a)) out.push_back("mu_" + std::to_string(a + 1) + " nu^2/2 <= 0");
        return out;
    }
};

inline ManyModeConstants analytic_caldeira_leggett_constants(const SystemPotential& sys, const BathParams& bath,
                                                             double m_S,
                                                             RelativeFamily family = RelativeFamily::Jacobi) {
    bath.validate();
    const auto masses = caldeira_leggett_masses(bath, m_S);
    const auto t = cm_relative_transform(caldeira_leggett_layout(bath.size()), masses, family);
    const Mat& inv = t.inverse_position_map();  // x_k = X + sum_a inv(k, a) rho_a
    const std::size_t nb = bath.size();
    const std::size_t nr = nb;  // relative coordinates
    const double s = bath.coupling_sign;

    ManyModeConstants k;
    k.family = family;
    k.coupling_sign = bath.coupling_sign;
    k.harmonic = is_harmonic(sys);
    for (double m : masses) k.total_mass += m;

    auto w = [&](std::size_t a, std::size_t i) {  // weight of rho_a in bath oscillator i
        return inv(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(a + 1));
    };
    k.weights_S.resize(nr);
    for (std::size_t a = 0; a < nr; ++a) k.weights_S[a] = inv(0, static_cast<Eigen::Index>(a + 1));

    double kappa_sum = 0.0;
    for (const auto& o : bath.oscillators) {
        k.m_omega_cm2_half += s * o.coupling + o.mass * o.frequency * o.frequency / 2.0;
        kappa_sum += o.coupling;
    }

    k.omega_a.assign(nr, 0.0);
    k.omega_ab = Mat::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nr));
    for (std::size_t a = 0; a < nr; ++a) {
        for (std::size_t i = 0; i < nb; ++i) {
            const auto& o = bath.oscillators[i];
            k.omega_a[a] += o.coupling * w(a, i);
            for (std::size_t b = 0; b < nr; ++b)
                k.omega_ab(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +=
                    o.mass * o.frequency * o.frequency * w(a, i) * w(b, i) / 2.0;
        }
    }

    k.mu_nu2_half.assign(nr, 0.0);
    k.sigma.assign(nr, 0.0);
    for (std::size_t a = 0; a < nr; ++a) {
        double pot = 0.0;
        double pot_lin = 0.0;
        for (std::size_t i = 0; i < nb; ++i) {
            const auto& o = bath.oscillators[i];
            pot += o.mass * o.frequency * o.frequency * w(a, i) * w(a, i) / 2.0;
            pot_lin += o.mass * o.frequency * o.frequency * w(a, i);
        }
        k.mu_nu2_half[a] = s * k.weights_S[a] * k.omega_a[a] + pot;
        // With s = +1 this is sum_i (kappa_i w_ai + kappa_i w_aS + m_i w_i^2 w_ai).
        k.sigma[a] = k.omega_a[a] + k.weights_S[a] * kappa_sum + s * pot_lin;
    }

    k.v_r_position = Mat::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nr));
    for (std::size_t a = 0; a < nr; ++a)
        for (std::size_t b = 0; b < nr; ++b)
            if (a != b)
                k.v_r_position(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                    k.omega_ab(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) +
                    s * k.weights_S[a] * k.omega_a[b];

    // Velocity-space kinetic constants of the chosen family.
    k.mu.assign(nr, 0.0);
    k.mass_polarization = Mat::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nr));
    if (family == RelativeFamily::Jacobi) {
        double partial = 0.0;
        for (std::size_t a = 0; a < nr; ++a) {
            partial += masses[a];
            k.mu[a] = partial * masses[a + 1] / (partial + masses[a + 1]);
        }
    } else {
        for (std::size_t a = 0; a < nr; ++a) {
            k.mu[a] = masses[a + 1] * (k.total_mass - masses[a + 1]) / k.total_mass;
            for (std::size_t b = 0; b < nr; ++b)
                if (a != b)
                    k.mass_polarization(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        masses[a + 1] * masses[b + 1] / k.total_mass;
        }
    }

    k.harmonic_rho2.assign(nr, 0.0);
    k.harmonic_x_rho.assign(nr, 0.0);
    k.harmonic_rho_pair = Mat::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nr));
    if (k.harmonic) {
        const double ws = system_frequency(sys);
        const double kk = m_S * ws * ws;
        k.harmonic_x2 = kk / 2.0;
        for (std::size_t a = 0; a < nr; ++a) {
            k.harmonic_rho2[a] = kk * k.weights_S[a] * k.weights_S[a] / 2.0;
            k.harmonic_x_rho[a] = kk * k.weights_S[a];
            for (std::size_t b = 0; b < nr; ++b)
                if (a != b)
                    k.harmonic_rho_pair(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        kk * k.weights_S[a] * k.weights_S[b] / 2.0;
        }
    }
    return k;
}

struct ConstantResidual {
    std::string name;
    double analytic = 0.0;
    double numeric = 0.0;
    double residual = 0.0;  // |analytic - numeric| / max(1, |analytic|)
};

struct ConstantsReport {
    std::vector<ConstantResidual> entries;

    void add(std::string name, double analytic, double numeric) {
        const double r = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
        entries.push_back({std::move(name), analytic, numeric, r});
    }
    double max_residual() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.residual);
        return m;
    }
    /// Max residual over entries whose name starts with `prefix`.
    double max_residual(const std::string& prefix) const {
        double m = 0.0;
        bool any = false;
        for (const auto& e : entries)
            if (e.name.rfind(prefix, 0) == 0) {
                m = std::max(m, e.residual);
                any = true;
            }
        if (!any) throw ValidationError("constants report: no entry named '" + prefix + "*'");
        return m;
    }
};

/// Reads c1, c2, c3, mu, M off a transformed two-mode Hamiltonian on (CM, R1).
inline ConstantsReport verify_constants(const QuadraticHamiltonian& transformed, const TwoModeConstants& k) {
    const auto& L = transformed.layout();
    if (L.n_modes() != 2 || !L.find("CM") || !L.find("R1"))
        throw ValidationError("verify_constants: expected a two-mode (CM, R1) Hamiltonian");
    ConstantsReport r;
    r.add("c1", k.c1, 0.5 * transformed.entry("CM", false, "CM", false));
    r.add("c2", k.c2, 0.5 * transformed.entry("R1", false, "R1", false));
    r.add("c3", k.c3, -transformed.entry("CM", false, "R1", false));
    r.add("mu", k.mu, 1.0 / transformed.entry("R1", true, "R1", true));
    r.add("M", k.total_mass, 1.0 / transformed.entry("CM", true, "CM", true));
    r.add("kinetic_cross", 0.0, transformed.entry("CM", true, "R1", true));
    return r;
}

/// Matches every closed-form constant against the congruence result. The total
/// Hamiltonian supplies the combined coefficients; the separately transformed
/// additive parts supply Omega_a, Omega_ab and the harmonic additions.
inline ConstantsReport verify_constants(const QuadraticHamiltonian& transformed, const CaldeiraLeggettParts& parts,
                                        const LinearCoordinateTransform& t, const ManyModeConstants& k) {
    const auto n = static_cast<Eigen::Index>(transformed.layout().n_modes());
    const auto nr = static_cast<std::size_t>(n - 1);
    if (transformed.layout() != t.target() || k.mu.size() != nr || parts.bath_potential.rows() != n)
        throw ValidationError("verify_constants: constants, parts and Hamiltonian do not describe the same model");
    const Mat& h = transformed.matrix();
    const double s = k.coupling_sign;
    auto idx = [](std::size_t a) { return static_cast<Eigen::Index>(a + 1); };
    auto tag = [](const char* base, std::size_t a) { return std::string(base) + "[" + std::to_string(a + 1) + "]"; };
    auto tag2 = [](const char* base, std::size_t a, std::size_t b) {
        return std::string(base) + "[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]";
    };

    ConstantsReport r;
    r.add("M", k.total_mass, 1.0 / h(n, n));
    r.add("M_Omega_CM2", 2.0 * (k.m_omega_cm2_half + k.harmonic_x2), h(0, 0));

    const Mat kin = h.bottomRightCorner(n - 1, n - 1);
    const Mat velocity_mass = kin.inverse();
    for (std::size_t a = 0; a < nr; ++a) {
        const auto ia = idx(a);
        r.add(tag("kinetic_cross_CM_R", a), 0.0, h(n, n + ia));
        r.add(tag("sigma", a), s * k.sigma[a] + k.harmonic_x_rho[a], h(0, ia));
        r.add(tag("mu_nu2", a), 2.0 * (k.mu_nu2_half[a] + k.harmonic_rho2[a]), h(ia, ia));
        r.add(tag("mu", a), k.mu[a], velocity_mass(ia - 1, ia - 1));
        for (std::size_t b = a + 1; b < nr; ++b) {
            const auto ib = idx(b);
            const double expected = k.v_r_position(ia - 1, ib - 1) + k.v_r_position(ib - 1, ia - 1) +
                                    2.0 * k.harmonic_rho_pair(ia - 1, ib - 1);
            r.add(tag2("V_R", a, b), expected, h(ia, ib));
            r.add(tag2("C", a, b), k.mass_polarization(ia - 1, ib - 1), -velocity_mass(ia - 1, ib - 1));
        }
    }
    r.add("x_p_cross", 0.0, max_abs(h.topRightCorner(n, n)));

    const Vec collective = t.inverse_position_map().transpose() * parts.coupling_vector;
    const Mat bath = transform_position_form(parts.bath_potential, t);
    const Mat sys = transform_position_form(parts.system_potential, t);
    for (std::size_t a = 0; a < nr; ++a) {
        const auto ia = idx(a);
        r.add(tag("Omega", a), k.omega_a[a], collective(ia));
        for (std::size_t b = 0; b < nr; ++b)
            if (a != b) r.add(tag2("Omega_pair", a, b), k.omega_ab(ia - 1, idx(b) - 1), 0.5 * bath(ia, idx(b)));
        if (k.harmonic) {
            r.add(tag("harmonic_rho2", a), k.harmonic_rho2[a], 0.5 * sys(ia, ia));
            r.add(tag("harmonic_x_rho", a), k.harmonic_x_rho[a], sys(0, ia));
            for (std::size_t b = a + 1; b < nr; ++b)
                r.add(tag2("harmonic_rho_pair", a, b), k.harmonic_rho_pair(ia - 1, idx(b) - 1),
                      0.5 * sys(ia, idx(b)));
        }
    }
    if (k.harmonic) r.add("harmonic_x2", k.harmonic_x2, 0.5 * sys(0, 0));
    return r;
}

// ---------------------------------------------------------------------------
// Normal modes of an environment block.

struct NormalModeResult {
    LinearCoordinateTransform transform;  // acts on the environment modes only
    QuadraticHamiltonian hamiltonian;     // environment block = sum_l (P_l^2 + w_l^2 Q_l^2)/2
    Vec frequencies;                      // ascending
};

/// Generalized eigenproblem for H_env = 1/2 p^T T p + 1/2 x^T K x: with
/// T^{1/2} K T^{1/2} = O diag(w^2) O^T the map Q = O^T T^{-1/2} x makes both
/// blocks diagonal. Environment modes are relabelled Q1..QN.
inline NormalModeResult normal_mode_transform(const QuadraticHamiltonian& h, const std::vector<std::string>& env) {
    const auto& layout = h.layout();
    const auto env_idx = detail::mode_indices(layout, env);
    const auto n = static_cast<Eigen::Index>(layout.n_modes());
    const auto ne = static_cast<Eigen::Index>(env_idx.size());
    std::vector<bool> is_env(layout.n_modes(), false);
    for (auto i : env_idx) is_env[i] = true;

    const Mat& m = h.matrix();
    const double scale = std::max(1.0, max_abs(m));
    for (auto e : env_idx) {
        const auto ie = static_cast<Eigen::Index>(e);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (std::abs(m(ie, n + j)) > 1e-12 * scale || std::abs(m(n + ie, j)) > 1e-12 * scale)
                throw ValidationError("normal_mode_transform: position-momentum cross terms involve environment mode '" +
                                      layout.label(e) + "' (out of scope)");
            if (!is_env[static_cast<std::size_t>(j)] && std::abs(m(n + ie, n + j)) > 1e-12 * scale)
                throw ValidationError("normal_mode_transform: environment mode '" + layout.label(e) +
                                      "' is coupled to an open mode through momenta (out of scope)");
        }
    }

    Mat kin(ne, ne), pot(ne, ne);
    for (Eigen::Index a = 0; a < ne; ++a)
        for (Eigen::Index b = 0; b < ne; ++b) {
            const auto ia = static_cast<Eigen::Index>(env_idx[static_cast<std::size_t>(a)]);
            const auto ib = static_cast<Eigen::Index>(env_idx[static_cast<std::size_t>(b)]);
            kin(a, b) = m(n + ia, n + ib);
            pot(a, b) = m(ia, ib);
        }
    Eigen::SelfAdjointEigenSolver<Mat> kin_es(kin);
    const Mat kin_root = kin_es.operatorSqrt();
    const Mat kin_inv_root = kin_es.operatorInverseSqrt();
    Mat dyn = kin_root * pot * kin_root;
    dyn = 0.5 * (dyn + dyn.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(dyn);
    const Vec w2 = es.eigenvalues();  // ascending
    for (Eigen::Index l = 0; l < ne; ++l)
        if (!(w2(l) > 0.0)) {
            std::ostringstream os;
            os << "normal_mode_transform: indefinite environment potential block (eigenvalue " << w2(l) << ")";
            throw ValidationError(os.str());
        }
    Mat o = es.eigenvectors();
    for (Eigen::Index l = 0; l < ne; ++l) {
        for (Eigen::Index r = 0; r < ne; ++r) {
            if (std::abs(o(r, l)) > 1e-12) {
                if (o(r, l) < 0.0) o.col(l) = -o.col(l);
                break;
            }
        }
    }
    const Mat b = o.transpose() * kin_inv_root;  // Q = B x_env

    Mat a = Mat::Identity(n, n);
    for (Eigen::Index l = 0; l < ne; ++l)
        for (Eigen::Index c = 0; c < ne; ++c) {
            const auto il = static_cast<Eigen::Index>(env_idx[static_cast<std::size_t>(l)]);
            const auto ic = static_cast<Eigen::Index>(env_idx[static_cast<std::size_t>(c)]);
            a(il, ic) = b(l, c);
        }
    std::vector<std::string> labels = layout.labels();
    for (std::size_t l = 0; l < env_idx.size(); ++l) labels[env_idx[l]] = "Q" + std::to_string(l + 1);
    LinearCoordinateTransform t(layout, PhaseSpaceLayout(labels), a);
    auto hp = transform_hamiltonian(h, t);
    return {t, hp, w2.cwiseSqrt()};
}

struct SpectrumLine {
    double frequency = 0.0;
    double coupling = 0.0;  // lambda_l in X sum_l lambda_l Q_l
};

/// Normal-mode frequencies of everything except `open_mode` and the linear
/// coupling of open_mode's position to each normal coordinate.
inline std::vector<SpectrumLine> coupling_spectrum(const QuadraticHamiltonian& h, const std::string& open_mode) {
    const auto& layout = h.layout();
    const auto io = static_cast<Eigen::Index>(layout.index_of(open_mode));
    const auto n = static_cast<Eigen::Index>(layout.n_modes());
    const Mat& m = h.matrix();
    const double scale = std::max(1.0, max_abs(m));
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == io) continue;
        if (std::abs(m(n + io, n + j)) > 1e-12 * scale || std::abs(m(io, n + j)) > 1e-12 * scale ||
            std::abs(m(n + io, j)) > 1e-12 * scale)
            throw ValidationError("coupling_spectrum: open mode '" + open_mode +
                                  "' is coupled through momenta (out of scope)");
    }
    std::vector<std::string> env;
    for (const auto& l : layout.labels())
        if (l != open_mode) env.push_back(l);
    const auto nm = normal_mode_transform(h, env);
    std::vector<SpectrumLine> out;
    for (std::size_t l = 0; l < env.size(); ++l)
        out.push_back({nm.frequencies(static_cast<Eigen::Index>(l)),
                       nm.hamiltonian.entry(open_mode, false, "Q" + std::to_string(l + 1), false)});
    return out;
}

}  // namespace pardec
