#pragma once

// Builders for the closed-system Hamiltonians: the two-mode model
// (free S coupled to one oscillator E) and the Caldeira-Leggett model
// (S coupled through position to a harmonic bath).

#include <cmath>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pardec/phase_space.hpp"

namespace pardec {

struct TwoModeParams {
    double m_S = 1.0;
    double m_E = 1.0;
    double omega = 1.0;
    double C = 0.0;

    /// Throws ValidationError naming the violated condition.
    void validate() const {
        detail::require(m_S > 0.0 && m_E > 0.0, "two-mode model: masses must be positive");
        detail::require(omega > 0.0, "two-mode model: omega must be positive");
        if (!(C < m_E * omega * omega / 2.0)) {
            std::ostringstream os;
            os << "two-mode model: C = " << C << " violates the constraint C < m_E ω²/2 (= "
               << m_E * omega * omega / 2.0 << ")";
            throw ValidationError(os.str());
        }
    }
};

struct BathOscillator {
    double mass = 1.0;
    double frequency = 1.0;
    double coupling = 0.0;
};

struct BathParams {
    std::vector<BathOscillator> oscillators;
    int coupling_sign = -1;  // H_SE = coupling_sign * x_S * sum_i kappa_i x_i

    void validate() const {
        detail::require(!oscillators.empty(), "bath: at least one oscillator is required");
        detail::require(coupling_sign == 1 || coupling_sign == -1, "bath: coupling_sign must be +1 or -1");
        for (const auto& o : oscillators) {
            detail::require(o.mass > 0.0, "bath: oscillator masses must be positive");
            detail::require(o.frequency > 0.0, "bath: oscillator frequencies must be positive");
            detail::require(std::isfinite(o.coupling), "bath: couplings must be finite");
        }
    }
    std::size_t size() const { return oscillators.size(); }
};

struct FreeParticle {};
struct HarmonicPotential {
    double omega_S = 1.0;
};
using SystemPotential = std::variant<FreeParticle, HarmonicPotential>;

inline bool is_harmonic(const SystemPotential& v) { return std::holds_alternative<HarmonicPotential>(v); }
inline double system_frequency(const SystemPotential& v) {
    return is_harmonic(v) ? std::get<HarmonicPotential>(v).omega_S : 0.0;
}

/// p_S^2/2m_S + p_E^2/2m_E + m_E w^2 x_E^2/2 - C x_S x_E on layout (S, E).
inline QuadraticHamiltonian build_two_mode(const TwoModeParams& p) {
    p.validate();
    Mat h = Mat::Zero(4, 4);
    h(1, 1) = p.m_E * p.omega * p.omega;
    h(0, 1) = h(1, 0) = -p.C;
    h(2, 2) = 1.0 / p.m_S;
    h(3, 3) = 1.0 / p.m_E;
    return {PhaseSpaceLayout({"S", "E"}), h, {}, "two_mode"};
}

inline PhaseSpaceLayout caldeira_leggett_layout(std::size_t bath_size) {
    std::vector<std::string> labels{"S"};
    auto env = PhaseSpaceLayout::numbered("E", bath_size);
    labels.insert(labels.end(), env.begin(), env.end());
    return PhaseSpaceLayout(labels);
}

/// Masses in layout order (S first).
inline std::vector<double> caldeira_leggett_masses(const BathParams& bath, double m_S) {
    std::vector<double> m{m_S};
    for (const auto& o : bath.oscillators) m.push_back(o.mass);
    return m;
}

/// Position-space quadratic forms of the three additive parts H_S, H_E, H_SE
/// (V = 1/2 x^T K x) and the inverse-mass matrix, all on the full layout.
struct CaldeiraLeggettParts {
    Mat system_potential;
    Mat bath_potential;
    Mat coupling;
    Mat inverse_mass;
    Vec coupling_vector;  // (0, kappa_1..kappa_N): x_S couples to coupling_vector^T x
};

inline CaldeiraLeggettParts caldeira_leggett_parts(const SystemPotential& sys, const BathParams& bath, double m_S) {
    bath.validate();
    detail::require(m_S > 0.0, "caldeira-leggett: m_S must be positive");
    const auto n = static_cast<Eigen::Index>(bath.size() + 1);
    CaldeiraLeggettParts parts{Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n), Vec::Zero(n)};
    parts.inverse_mass(0, 0) = 1.0 / m_S;
    if (is_harmonic(sys)) {
        const double w = system_frequency(sys);
        detail::require(w > 0.0, "caldeira-leggett: omega_S must be positive");
        parts.system_potential(0, 0) = m_S * w * w;
    }
    for (Eigen::Index i = 1; i < n; ++i) {
        const auto& o = bath.oscillators[static_cast<std::size_t>(i - 1)];
        parts.bath_potential(i, i) = o.mass * o.frequency * o.frequency;
        parts.inverse_mass(i, i) = 1.0 / o.mass;
        parts.coupling(0, i) = parts.coupling(i, 0) = bath.coupling_sign * o.coupling;
        parts.coupling_vector(i) = o.coupling;
    }
    return parts;
}

/// p_S^2/2m_S + V(x_S) + sum_i (p_i^2/2m_i + m_i w_i^2 x_i^2/2) + sign x_S sum_i kappa_i x_i
/// on layout (S, E1..EN).
inline QuadraticHamiltonian build_caldeira_leggett(const SystemPotential& sys, const BathParams& bath, double m_S) {
    bath.validate();
    detail::require(m_S > 0.0, "caldeira-leggett: m_S must be positive");
    if (is_harmonic(sys))
        detail::require(system_frequency(sys) > 0.0, "caldeira-leggett: omega_S must be positive");
    const auto n = static_cast<Eigen::Index>(bath.size() + 1);
    Mat h = Mat::Zero(2 * n, 2 * n);
    h(n, n) = 1.0 / m_S;
    if (const auto* hp = std::get_if<HarmonicPotential>(&sys)) h(0, 0) = m_S * hp->omega_S * hp->omega_S;
    for (Eigen::Index i = 1; i < n; ++i) {
        const auto& o = bath.oscillators[static_cast<std::size_t>(i - 1)];
        h(i, i) = o.mass * o.frequency * o.frequency;
        h(n + i, n + i) = 1.0 / o.mass;
        h(0, i) = h(i, 0) = bath.coupling_sign * o.coupling;
    }
    return {caldeira_leggett_layout(bath.size()), h, {}, is_harmonic(sys) ? "caldeira_leggett_harmonic"
                                                                          : "caldeira_leggett_free"};
}

/// Uniform bins on (0, w_c], unit masses, kappa_i = sqrt(2 m_i w_i * eta w_i * dw),
/// so that sum_i kappa_i^2/(2 m_i w_i) delta(w - w_i) approximates J(w) = eta w.
inline BathParams discretize_ohmic_bath(std::size_t count, double omega_cutoff, double eta, int coupling_sign = -1) {
    detail::require(count >= 1, "ohmic bath: N must be at least 1");
    detail::require(omega_cutoff > 0.0, "ohmic bath: cutoff must be positive");
    detail::require(eta >= 0.0, "ohmic bath: eta must be non-negative");
    const double dw = omega_cutoff / static_cast<double>(count);
    BathParams b;
    b.coupling_sign = coupling_sign;
    for (std::size_t i = 1; i <= count; ++i) {
        const double w = dw * static_cast<double>(i);
        const double m = 1.0;
        b.oscillators.push_back({m, w, std::sqrt(2.0 * m * w * eta * w * dw)});
    }
    return b;
}

}  // namespace pardec
