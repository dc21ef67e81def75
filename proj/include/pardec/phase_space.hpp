#pragma once

// Canonical phase-space representation of n coupled one-dimensional modes.
//
// Coordinates are stacked as z = (x_1..x_n, p_1..p_n). Units are natural
// (hbar = k_B = 1). Covariances follow sigma_ij = 1/2 <{dz_i, dz_j}>, so the
// vacuum of a unit-mass unit-frequency oscillator has sigma = I/2.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pardec/error.hpp"

namespace pardec {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class PhaseSpaceLayout {
public:
    PhaseSpaceLayout() = default;

    explicit PhaseSpaceLayout(std::vector<std::string> labels) : labels_(std::move(labels)) {
        detail::require(!labels_.empty(), "layout: at least one mode is required");
        std::unordered_set<std::string> seen;
        for (const auto& l : labels_) {
            detail::require(!l.empty(), "layout: empty mode label");
            detail::require(seen.insert(l).second, "layout: duplicate mode label '" + l + "'");
        }
    }

    /// Labels `prefix1..prefixN`, e.g. numbered("E", 3) -> E1,E2,E3.
    static std::vector<std::string> numbered(const std::string& prefix, std::size_t count) {
        std::vector<std::string> out;
        out.reserve(count);
        for (std::size_t i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
        return out;
    }

    std::size_t n_modes() const { return labels_.size(); }
    std::size_t dim() const { return 2 * labels_.size(); }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::string& label(std::size_t i) const { return labels_.at(i); }

    std::optional<std::size_t> find(const std::string& label) const {
        auto it = std::find(labels_.begin(), labels_.end(), label);
        if (it == labels_.end()) return std::nullopt;
        return static_cast<std::size_t>(it - labels_.begin());
    }

    std::size_t index_of(const std::string& label) const {
        auto idx = find(label);
        if (!idx) throw ValidationError("unknown mode label '" + label + "'");
        return *idx;
    }

    bool operator==(const PhaseSpaceLayout& other) const { return labels_ == other.labels_; }
    bool operator!=(const PhaseSpaceLayout& other) const { return !(*this == other); }

private:
    std::vector<std::string> labels_;
};

/// Mass and frequency that set the vacuum covariance diag(1/(2 m w), m w / 2).
struct ModeScale {
    double mass = 1.0;
    double frequency = 1.0;
};

struct CoherentAmplitude {
    std::string mode;
    double x0 = 0.0;
    double p0 = 0.0;
};

struct ThermalMode {
    double mass = 1.0;
    double frequency = 1.0;
    double temperature = 0.0;
};

/// J = [[0, I], [-I, 0]].
inline Mat symplectic_form(std::size_t n_modes) {
    detail::require(n_modes >= 1, "symplectic_form: n >= 1 required");
    const auto n = static_cast<Eigen::Index>(n_modes);
    Mat j = Mat::Zero(2 * n, 2 * n);
    j.topRightCorner(n, n) = Mat::Identity(n, n);
    j.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
    return j;
}

inline Mat symplectic_form(const PhaseSpaceLayout& layout) { return symplectic_form(layout.n_modes()); }

/// max |S^T J S - J|.
inline double symplectic_residual(const Mat& s) {
    const auto n = static_cast<std::size_t>(s.rows() / 2);
    const Mat j = symplectic_form(n);
    return (s.transpose() * j * s - j).cwiseAbs().maxCoeff();
}

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

namespace detail {

inline bool is_symmetric(const Mat& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, max_abs(m));
    return max_abs(m - m.transpose()) <= rel_tol * scale;
}

/// Index list of x and p rows for the given mode indices, in (x-block, p-block) order.
inline std::vector<Eigen::Index> phase_indices(const std::vector<std::size_t>& modes, std::size_t n_modes) {
    std::vector<Eigen::Index> idx;
    idx.reserve(2 * modes.size());
    for (auto m : modes) idx.push_back(static_cast<Eigen::Index>(m));
    for (auto m : modes) idx.push_back(static_cast<Eigen::Index>(m + n_modes));
    return idx;
}

inline Mat select(const Mat& m, const std::vector<Eigen::Index>& rows, const std::vector<Eigen::Index>& cols) {
    Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
    return out;
}

inline Vec select(const Vec& v, const std::vector<Eigen::Index>& rows) {
    Vec out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
    return out;
}

inline std::vector<std::size_t> mode_indices(const PhaseSpaceLayout& layout, const std::vector<std::string>& labels) {
    require(!labels.empty(), "mode subset must be non-empty");
    std::vector<std::size_t> out;
    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
        require(seen.insert(l).second, "mode '" + l + "' listed twice");
        out.push_back(layout.index_of(l));
    }
    return out;
}

}  // namespace detail

/// H = 1/2 z^T h z + linear^T z.
class QuadraticHamiltonian {
public:
    QuadraticHamiltonian(PhaseSpaceLayout layout, Mat h, Vec linear = {}, std::string tag = {})
        : layout_(std::move(layout)), h_(std::move(h)), linear_(std::move(linear)), tag_(std::move(tag)) {
        const auto d = static_cast<Eigen::Index>(layout_.dim());
        if (linear_.size() == 0) linear_ = Vec::Zero(d);
        detail::require(h_.rows() == d && h_.cols() == d, "hamiltonian: matrix size does not match layout");
        detail::require(linear_.size() == d, "hamiltonian: linear term size does not match layout");
        detail::require(h_.allFinite() && linear_.allFinite(), "hamiltonian: non-finite entries");
        detail::require(detail::is_symmetric(h_, 1e-12), "hamiltonian: h_matrix is not symmetric");
        h_ = 0.5 * (h_ + h_.transpose());
        const auto n = static_cast<Eigen::Index>(layout_.n_modes());
        Eigen::LLT<Mat> llt(h_.bottomRightCorner(n, n));
        detail::require(llt.info() == Eigen::Success,
                        "hamiltonian: momentum block is not positive definite (masses must be positive)");
    }

    const PhaseSpaceLayout& layout() const { return layout_; }
    const Mat& matrix() const { return h_; }
    const Vec& linear() const { return linear_; }
    const std::string& tag() const { return tag_; }

    Mat position_block() const {
        const auto n = static_cast<Eigen::Index>(layout_.n_modes());
        return h_.topLeftCorner(n, n);
    }
    Mat momentum_block() const {
        const auto n = static_cast<Eigen::Index>(layout_.n_modes());
        return h_.bottomRightCorner(n, n);
    }

    double energy(const Vec& z) const { return 0.5 * z.dot(h_ * z) + linear_.dot(z); }

    /// Entry of h for the (x or p of mode a, x or p of mode b) pair.
    double entry(const std::string& a, bool a_momentum, const std::string& b, bool b_momentum) const {
        const auto n = layout_.n_modes();
        const auto i = layout_.index_of(a) + (a_momentum ? n : 0);
        const auto j = layout_.index_of(b) + (b_momentum ? n : 0);
        return h_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }

private:
    PhaseSpaceLayout layout_;
    Mat h_;
    Vec linear_;
    std::string tag_;
};

/// Smallest eigenvalue of the Hermitian matrix sigma + (i/2) J.
inline double uncertainty_margin(const Mat& cov) {
    const auto n = static_cast<std::size_t>(cov.rows() / 2);
    const Mat j = symplectic_form(n);
    Eigen::MatrixXcd m = cov.cast<std::complex<double>>();
    m += std::complex<double>(0.0, 0.5) * j.cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

class GaussianState {
public:
    GaussianState(PhaseSpaceLayout layout, Vec mean, Mat cov)
        : layout_(std::move(layout)), mean_(std::move(mean)), cov_(std::move(cov)) {
        const auto d = static_cast<Eigen::Index>(layout_.dim());
        detail::require(mean_.size() == d, "gaussian state: mean size does not match layout");
        detail::require(cov_.rows() == d && cov_.cols() == d, "gaussian state: covariance size does not match layout");
        detail::require(mean_.allFinite() && cov_.allFinite(), "gaussian state: non-finite entries");
        detail::require(detail::is_symmetric(cov_, 1e-10), "gaussian state: covariance is not symmetric");
        cov_ = 0.5 * (cov_ + cov_.transpose());
    }

    const PhaseSpaceLayout& layout() const { return layout_; }
    const Vec& mean() const { return mean_; }
    const Mat& covariance() const { return cov_; }
    std::size_t n_modes() const { return layout_.n_modes(); }

    /// Throws unless sigma + iJ/2 >= 0 (to -1e-10) and det sigma > 0.
    void validate() const {
        const double margin = uncertainty_margin(cov_);
        if (margin < -1e-10)
            throw ValidationError("gaussian state violates the uncertainty relation (min eigenvalue " +
                                  std::to_string(margin) + ")");
        Eigen::LLT<Mat> llt(cov_);
        if (llt.info() != Eigen::Success) throw ValidationError("gaussian state: degenerate covariance");
    }

    GaussianState displaced(const CoherentAmplitude& amp) const {
        const auto n = layout_.n_modes();
        const auto k = layout_.index_of(amp.mode);
        Vec m = mean_;
        m(static_cast<Eigen::Index>(k)) += amp.x0;
        m(static_cast<Eigen::Index>(k + n)) += amp.p0;
        return {layout_, std::move(m), cov_};
    }

private:
    PhaseSpaceLayout layout_;
    Vec mean_;
    Mat cov_;
};

inline Mat vacuum_covariance(const ModeScale& s) {
    detail::require(s.mass > 0.0 && s.frequency > 0.0, "vacuum covariance: mass and frequency must be positive");
    Mat c = Mat::Zero(2, 2);
    c(0, 0) = 1.0 / (2.0 * s.mass * s.frequency);
    c(1, 1) = s.mass * s.frequency / 2.0;
    return c;
}

namespace detail {

inline GaussianState assemble(const PhaseSpaceLayout& layout, const std::vector<Vec>& means,
                              const std::vector<Mat>& covs) {
    const auto n = static_cast<Eigen::Index>(layout.n_modes());
    Vec mean = Vec::Zero(2 * n);
    Mat cov = Mat::Zero(2 * n, 2 * n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& c = covs[static_cast<std::size_t>(k)];
        const auto& m = means[static_cast<std::size_t>(k)];
        mean(k) = m(0);
        mean(k + n) = m(1);
        cov(k, k) = c(0, 0);
        cov(k, k + n) = c(0, 1);
        cov(k + n, k) = c(1, 0);
        cov(k + n, k + n) = c(1, 1);
    }
    return {layout, mean, cov};
}

}  // namespace detail

/// Displaced vacuum: per-mode vacuum covariance from `scales` (default unit
/// mass and frequency), mean shifted by each amplitude.
inline GaussianState coherent_state(const PhaseSpaceLayout& layout, const std::vector<CoherentAmplitude>& amplitudes,
                                    const std::vector<ModeScale>& scales = {}) {
    detail::require(scales.empty() || scales.size() == layout.n_modes(),
                    "coherent_state: need one scale per mode");
    std::vector<Vec> means(layout.n_modes(), Vec::Zero(2));
    std::vector<Mat> covs;
    for (std::size_t k = 0; k < layout.n_modes(); ++k)
        covs.push_back(vacuum_covariance(scales.empty() ? ModeScale{} : scales[k]));
    for (const auto& a : amplitudes) {
        detail::require(std::isfinite(a.x0) && std::isfinite(a.p0), "coherent_state: non-finite amplitude");
        auto& m = means[layout.index_of(a.mode)];
        m(0) += a.x0;
        m(1) += a.p0;
    }
    return detail::assemble(layout, means, covs);
}

/// Mean thermal occupation 1/(e^{w/T} - 1); zero at T = 0.
inline double thermal_occupation(double frequency, double temperature) {
    if (temperature <= 0.0) return 0.0;
    return 1.0 / std::expm1(frequency / temperature);
}

inline GaussianState thermal_state(const PhaseSpaceLayout& layout, const std::vector<ThermalMode>& modes) {
    detail::require(modes.size() == layout.n_modes(), "thermal_state: need one (m, w, T) triple per mode");
    std::vector<Vec> means(layout.n_modes(), Vec::Zero(2));
    std::vector<Mat> covs;
    for (const auto& m : modes) {
        detail::require(m.mass > 0.0, "thermal_state: mass must be positive");
        detail::require(m.frequency > 0.0, "thermal_state: frequency must be positive");
        detail::require(m.temperature >= 0.0, "thermal_state: temperature must be non-negative");
        const double f = thermal_occupation(m.frequency, m.temperature) + 0.5;
        Mat c = Mat::Zero(2, 2);
        c(0, 0) = f / (m.mass * m.frequency);
        c(1, 1) = f * m.mass * m.frequency;
        covs.push_back(c);
    }
    return detail::assemble(layout, means, covs);
}

/// Squeezed vacuum: x variance scaled by e^{-2r}, p variance by e^{2r}.
inline Mat squeezed_covariance(const ModeScale& s, double r) {
    Mat c = vacuum_covariance(s);
    c(0, 0) *= std::exp(-2.0 * r);
    c(1, 1) *= std::exp(2.0 * r);
    return c;
}

/// Direct sum of states on disjoint layouts (a's modes first).
inline GaussianState product_state(const GaussianState& a, const GaussianState& b) {
    std::vector<std::string> labels = a.layout().labels();
    labels.insert(labels.end(), b.layout().labels().begin(), b.layout().labels().end());
    PhaseSpaceLayout layout(labels);
    const auto na = static_cast<Eigen::Index>(a.n_modes());
    const auto nb = static_cast<Eigen::Index>(b.n_modes());
    const auto n = na + nb;
    Vec mean = Vec::Zero(2 * n);
    Mat cov = Mat::Zero(2 * n, 2 * n);
    auto place = [&](const GaussianState& s, Eigen::Index off, Eigen::Index ns) {
        for (int bi = 0; bi < 2; ++bi) {
            mean.segment(bi * n + off, ns) = s.mean().segment(bi * ns, ns);
            for (int bj = 0; bj < 2; ++bj)
                cov.block(bi * n + off, bj * n + off, ns, ns) = s.covariance().block(bi * ns, bj * ns, ns, ns);
        }
    };
    place(a, 0, na);
    place(b, na, nb);
    return {layout, mean, cov};
}

/// Re-order (or select) modes of a state; used to put a product into a target layout.
inline GaussianState reorder(const GaussianState& s, const PhaseSpaceLayout& target) {
    const auto modes = detail::mode_indices(s.layout(), target.labels());
    const auto idx = detail::phase_indices(modes, s.n_modes());
    return {target, detail::select(s.mean(), idx), detail::select(s.covariance(), idx, idx)};
}

/// tr rho^2 = 1 / (2^n sqrt(det sigma)).
inline double purity(const GaussianState& s) {
    s.validate();
    const double logdet = 2.0 * Eigen::LLT<Mat>(s.covariance()).matrixL().toDenseMatrix().diagonal().array().log().sum();
    return std::exp(-static_cast<double>(s.n_modes()) * std::log(2.0) - 0.5 * logdet);
}

/// Marginal on the listed modes, in the listed order.
inline GaussianState reduce(const GaussianState& s, const std::vector<std::string>& modes) {
    detail::mode_indices(s.layout(), modes);
    return reorder(s, PhaseSpaceLayout(modes));
}

/// Symplectic eigenvalues (ascending) of a positive-definite covariance.
inline Vec symplectic_eigenvalues(const Mat& cov) {
    const auto n = static_cast<std::size_t>(cov.rows() / 2);
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    if (es.eigenvalues().minCoeff() <= 0.0) throw ValidationError("symplectic eigenvalues: covariance not positive");
    const Mat root = es.operatorSqrt();
    Eigen::MatrixXcd m = std::complex<double>(0.0, 1.0) * (root * symplectic_form(n) * root).cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hs(m, Eigen::EigenvaluesOnly);
    // Eigenvalues come in +-nu pairs; the upper half is the spectrum.
    Vec ev = hs.eigenvalues();
    return ev.tail(static_cast<Eigen::Index>(n));
}

/// Gaussian logarithmic negativity (natural log) across (A, rest), from the
/// symplectic spectrum of the partially transposed covariance.
inline double log_negativity(const GaussianState& s, const std::vector<std::string>& part_a,
                             const std::vector<std::string>& part_b) {
    const auto ia = detail::mode_indices(s.layout(), part_a);
    const auto ib = detail::mode_indices(s.layout(), part_b);
    std::vector<bool> covered(s.n_modes(), false);
    for (auto i : ia) covered[i] = true;
    for (auto i : ib) {
        detail::require(!covered[i], "log_negativity: bipartition overlaps on '" + s.layout().label(i) + "'");
        covered[i] = true;
    }
    detail::require(std::all_of(covered.begin(), covered.end(), [](bool c) { return c; }),
                    "log_negativity: bipartition does not cover every mode");
    s.validate();
    const auto n = static_cast<Eigen::Index>(s.n_modes());
    Vec flip = Vec::Ones(2 * n);
    for (auto i : ib) flip(static_cast<Eigen::Index>(i) + n) = -1.0;
    const Mat pt = flip.asDiagonal() * s.covariance() * flip.asDiagonal();
    const Vec nu = symplectic_eigenvalues(pt);
    double en = 0.0;
    for (Eigen::Index k = 0; k < nu.size(); ++k) en += std::max(0.0, -std::log(2.0 * nu(k)));
    return en;
}

/// log tr(rho_a rho_b) / sqrt(tr rho_a^2 tr rho_b^2), computed in log space
/// so that astronomically small overlaps stay finite.
inline double log_gaussian_overlap(const GaussianState& a, const GaussianState& b) {
    if (a.layout() != b.layout()) throw ValidationError("gaussian_overlap: layout mismatch");
    const Mat sum = a.covariance() + b.covariance();
    Eigen::LLT<Mat> llt(sum);
    if (llt.info() != Eigen::Success) throw ValidationError("gaussian_overlap: degenerate covariance sum");
    const Vec delta = a.mean() - b.mean();
    const double quad = delta.dot(llt.solve(delta));
    auto logdet = [](const Mat& m) {
        Eigen::LLT<Mat> l(m);
        if (l.info() != Eigen::Success) throw ValidationError("gaussian_overlap: degenerate covariance");
        return 2.0 * l.matrixL().toDenseMatrix().diagonal().array().log().sum();
    };
    const auto n = static_cast<double>(a.n_modes());
    // tr(rho_a rho_b) = exp(-1/2 d^T (sa+sb)^-1 d) / sqrt(det(sa+sb)); tr rho^2 = 1/sqrt(det 2 sigma).
    const double log_tr_ab = -0.5 * quad - 0.5 * logdet(sum);
    const double log_pa = -0.5 * (2.0 * n * std::log(2.0) + logdet(a.covariance()));
    const double log_pb = -0.5 * (2.0 * n * std::log(2.0) + logdet(b.covariance()));
    return log_tr_ab - 0.5 * (log_pa + log_pb);
}

inline double gaussian_overlap(const GaussianState& a, const GaussianState& b) {
    return std::exp(log_gaussian_overlap(a, b));
}

}  // namespace pardec
