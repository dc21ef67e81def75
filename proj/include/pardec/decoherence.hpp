#pragma once

// Decoherence function Gamma(t) = ln(normalized overlap of the environment
// marginals of two branches), the fitted Lambda(t), decoherence times, and
// the side-by-side S+E vs CM+R comparison on one global unitary.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pardec/decomposition.hpp"
#include "pardec/dynamics.hpp"
#include "pardec/phase_space.hpp"

namespace pardec {

inline constexpr double kOverlapFloor = 1e-300;
inline constexpr double kDecoherenceThreshold = -1.0;  // Gamma at overlap 1/e

struct GammaSamples {
    std::vector<double> t;
    std::vector<double> gamma;
    std::vector<bool> saturated;  // overlap fell below kOverlapFloor, gamma clamped
};

inline GammaSamples decoherence_function(const std::vector<BranchPair>& branches,
                                         const std::vector<std::string>& env_modes) {
    detail::require(!env_modes.empty(), "decoherence_function: empty environment");
    const double floor = std::log(kOverlapFloor);
    GammaSamples g;
    for (const auto& b : branches) {
        if (max_abs(b.alpha.covariance() - b.beta.covariance()) > 1e-12 * std::max(1.0, max_abs(b.alpha.covariance())))
            throw ValidationError("decoherence_function: branch covariances differ");
        const double v = log_gaussian_overlap(reduce(b.alpha, env_modes), reduce(b.beta, env_modes));
        g.t.push_back(b.t);
        g.saturated.push_back(v < floor);
        g.gamma.push_back(std::min(0.0, std::max(v, floor)));
    }
    return g;
}

/// |alpha - beta|^2 in vacuum-scaled units x sqrt(m w), p / sqrt(m w).
inline double amplitude_distance2(const CoherentAmplitude& a, const CoherentAmplitude& b, const ModeScale& s) {
    detail::require(s.mass > 0.0 && s.frequency > 0.0, "amplitude distance: scale must be positive");
    const double mw = s.mass * s.frequency;
    const double dx = a.x0 - b.x0;
    const double dp = a.p0 - b.p0;
    return dx * dx * mw + dp * dp / mw;
}

inline std::vector<double> fit_lambda(const std::vector<double>& gamma, const CoherentAmplitude& a,
                                      const CoherentAmplitude& b, const ModeScale& s) {
    const double d2 = amplitude_distance2(a, b, s);
    if (!(d2 > 0.0)) throw ValidationError("fit_lambda: alpha = beta, Lambda is undefined");
    std::vector<double> out;
    out.reserve(gamma.size());
    for (double g : gamma) out.push_back(-2.0 * g / d2 + 0.0);  // no "-0" in output
    return out;
}

/// First crossing of Gamma <= -1, linearly interpolated; nullopt if never reached.
inline std::optional<double> decoherence_time(const std::vector<double>& t, const std::vector<double>& gamma,
                                              double threshold = kDecoherenceThreshold) {
    detail::require(t.size() == gamma.size(), "decoherence_time: size mismatch");
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (gamma[k] <= threshold) {
            if (k == 0) return t[0];
            const double g0 = gamma[k - 1];
            const double g1 = gamma[k];
            return t[k - 1] + (threshold - g0) / (g1 - g0) * (t[k] - t[k - 1]);
        }
    }
    return std::nullopt;
}

struct DecoherenceReport {
    std::string decomposition;  // "S+E" or "CM+R"
    std::string open_mode;
    std::vector<std::string> env_modes;
    ModeScale open_scale;
    CoherentAmplitude alpha;
    CoherentAmplitude beta;
    std::vector<double> t;
    std::vector<double> gamma;
    std::vector<double> lambda;  // empty when alpha = beta
    std::vector<bool> saturated;
    std::optional<double> tau;
    double threshold = kDecoherenceThreshold;
    std::string fingerprint;
};

inline DecoherenceReport decoherence_report(std::string decomposition, const std::vector<BranchPair>& branches,
                                            const std::vector<std::string>& env_modes, const ModeScale& open_scale) {
    detail::require(!branches.empty(), "decoherence_report: empty time grid");
    DecoherenceReport r;
    r.decomposition = std::move(decomposition);
    r.alpha = branches.front().amp_alpha;
    r.beta = branches.front().amp_beta;
    r.open_mode = r.alpha.mode;
    r.env_modes = env_modes;
    r.open_scale = open_scale;
    auto g = decoherence_function(branches, env_modes);
    r.t = std::move(g.t);
    r.gamma = std::move(g.gamma);
    r.saturated = std::move(g.saturated);
    if (amplitude_distance2(r.alpha, r.beta, open_scale) > 0.0) r.lambda = fit_lambda(r.gamma, r.alpha, r.beta, open_scale);
    r.tau = decoherence_time(r.t, r.gamma);
    return r;
}

/// Samples with 0 < t <= 10 t1 (t1 the first positive grid time), plus t = 0 if present.
inline bool strictly_decreasing_initial_decade(const DecoherenceReport& r) {
    double t1 = 0.0;
    for (double t : r.t)
        if (t > 0.0) {
            t1 = t;
            break;
        }
    if (t1 <= 0.0) return false;
    std::size_t used = 0;
    for (std::size_t k = 1; k < r.t.size() && r.t[k] <= 10.0 * t1 * (1.0 + 1e-12); ++k) {
        if (!(r.gamma[k] < r.gamma[k - 1])) return false;
        ++used;
    }
    return used >= 1;
}

// ---------------------------------------------------------------------------

struct ParallelCompareInput {
    ParallelCompareInput(QuadraticHamiltonian h, GaussianState s) : hamiltonian(std::move(h)), base_state(std::move(s)) {}

    QuadraticHamiltonian hamiltonian;  // S+E form
    GaussianState base_state;          // global state on the S+E layout, before branch displacement
    std::string open_mode = "S";
    ModeScale open_scale;                        // scale of the S open mode for |alpha-beta|^2
    std::vector<double> masses;                  // layout order, for the CM transform
    RelativeFamily family = RelativeFamily::Jacobi;
    CoherentAmplitude alpha_S, beta_S;           // on open_mode
    CoherentAmplitude alpha_CM, beta_CM;         // on "CM"
    std::vector<double> t_grid;
    bool allow_rescale = true;
    bool allow_positivity_violation = false;
};

struct ParallelCompareResult {
    DecoherenceReport s_report;
    DecoherenceReport cm_report;
    std::optional<double> tau_ratio;  // tau_S / tau_CM, before any rescale
    std::optional<double> tau_ratio_final;
    bool within_decade = false;
    std::string flag;        // "within" | "outside" | "not reached"
    double rescale_factor = 1.0;  // applied to the CM amplitude pair
    double frame_residual = 0.0;  // max over grid of |S M_SE S^-1 - M_CM| / max(1, |M_CM|)
    double max_symplectic_error = 0.0;
    LinearCoordinateTransform transform;  // S+E -> CM + normal-mode R
    QuadraticHamiltonian cm_hamiltonian;
    std::vector<double> normal_frequencies;
};

inline std::vector<std::string> other_modes(const PhaseSpaceLayout& layout, const std::string& open) {
    std::vector<std::string> out;
    for (const auto& l : layout.labels())
        if (l != open) out.push_back(l);
    return out;
}

namespace detail {

inline void fill_ratio(ParallelCompareResult& r, bool initial) {
    std::optional<double> ratio;
    if (r.s_report.tau && r.cm_report.tau && *r.cm_report.tau > 0.0) ratio = *r.s_report.tau / *r.cm_report.tau;
    if (initial) r.tau_ratio = ratio;
    r.tau_ratio_final = ratio;
    r.within_decade = ratio && *ratio >= 0.1 && *ratio <= 10.0;
    r.flag = !ratio ? "not reached" : (r.within_decade ? "within" : "outside");
}

}  // namespace detail

/// Runs both pipelines on the same closed dynamics. The S+E side evolves
/// under the original H; the CM+R side under the CM-transformed H with its
/// relative block reduced to normal modes. Each side computes its own
/// propagators; the frame residual compares them through the transform.
inline ParallelCompareResult parallel_compare(const ParallelCompareInput& in) {
    const auto& h = in.hamiltonian;
    if (in.base_state.layout() != h.layout()) throw ValidationError("parallel_compare: state/model layout mismatch");
    detail::require(in.alpha_S.mode == in.open_mode && in.beta_S.mode == in.open_mode,
                    "parallel_compare: S amplitudes must act on the open mode");
    detail::require(in.alpha_CM.mode == "CM" && in.beta_CM.mode == "CM",
                    "parallel_compare: CM amplitudes must act on mode 'CM'");
    detail::require(!in.t_grid.empty(), "parallel_compare: empty time grid");
    detail::require(h.layout().index_of(in.open_mode) == 0, "parallel_compare: the open mode must be first in the layout");

    const auto cm = cm_relative_transform(h.layout(), in.masses, in.family);
    const auto h_cm = transform_hamiltonian(h, cm);
    const double m_total = 1.0 / h_cm.entry("CM", true, "CM", true);
    const double k_cm = h_cm.entry("CM", false, "CM", false);
    const auto r_modes = other_modes(h_cm.layout(), "CM");
    ModeScale cm_scale{m_total, 1.0};
    if (k_cm > 0.0) {
        cm_scale.frequency = std::sqrt(k_cm / m_total);
    } else if (!in.allow_positivity_violation) {
        throw ValidationError("parallel_compare [CM+R]: positivity violated, M Omega_CM^2/2 <= 0 (set "
                              "decomposition.allow_positivity_violation to proceed)");
    }
    std::optional<NormalModeResult> nm;
    try {
        nm = normal_mode_transform(h_cm, r_modes);
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("parallel_compare [CM+R]: ") + e.what());
    }
    const auto total = cm.then(nm->transform);
    const auto& h2 = nm->hamiltonian;
    const auto base_cm = transform_state(in.base_state, total);

    const auto env_s = other_modes(h.layout(), in.open_mode);
    const auto env_cm = other_modes(h2.layout(), "CM");
    const Mat s_fwd = total.symplectic();
    const Mat s_inv = total.inverse_symplectic();

    std::vector<BranchPair> bs, bc;
    ParallelCompareResult r{{}, {}, {}, {}, false, {}, 1.0, 0.0, 0.0, total, h2,
                            std::vector<double>(nm->frequencies.data(), nm->frequencies.data() + nm->frequencies.size())};
    const auto s_a = in.base_state.displaced(in.alpha_S), s_b = in.base_state.displaced(in.beta_S);
    const auto c_a = base_cm.displaced(in.alpha_CM), c_b = base_cm.displaced(in.beta_CM);
    std::vector<SymplecticPropagator> pcm;
    for (double t : in.t_grid) {
        const auto p1 = propagator(h, t);
        const auto p2 = propagator(h2, t);
        const Mat d = s_fwd * p1.m * s_inv - p2.m;
        r.frame_residual = std::max(r.frame_residual, max_abs(d) / std::max(1.0, max_abs(p2.m)));
        r.max_symplectic_error = std::max({r.max_symplectic_error, p1.symplectic_error, p2.symplectic_error});
        bs.push_back({t, evolve(s_a, p1), evolve(s_b, p1), in.alpha_S, in.beta_S, p1.symplectic_error});
        bc.push_back({t, evolve(c_a, p2), evolve(c_b, p2), in.alpha_CM, in.beta_CM, p2.symplectic_error});
        pcm.push_back(p2);
    }
    r.s_report = decoherence_report("S+E", bs, env_s, in.open_scale);
    r.cm_report = decoherence_report("CM+R", bc, env_cm, cm_scale);
    detail::fill_ratio(r, true);

    // Outside a decade: rescale the CM pair so that its Gamma reaches -1 at tau_S.
    if (!r.within_decade && in.allow_rescale && r.s_report.tau) {
        const double g_at = [&] {
            const auto& t = r.cm_report.t;
            const auto& g = r.cm_report.gamma;
            const double ts = *r.s_report.tau;
            for (std::size_t k = 1; k < t.size(); ++k)
                if (t[k] >= ts) return g[k - 1] + (ts - t[k - 1]) / (t[k] - t[k - 1]) * (g[k] - g[k - 1]);
            return g.back();
        }();
        if (g_at < 0.0) {
            const double s = std::sqrt(1.0 / -g_at);
            const double cx = 0.5 * (in.alpha_CM.x0 + in.beta_CM.x0), cp = 0.5 * (in.alpha_CM.p0 + in.beta_CM.p0);
            CoherentAmplitude a{"CM", cx + s * (in.alpha_CM.x0 - cx), cp + s * (in.alpha_CM.p0 - cp)};
            CoherentAmplitude b{"CM", cx + s * (in.beta_CM.x0 - cx), cp + s * (in.beta_CM.p0 - cp)};
            const auto ra = base_cm.displaced(a), rb = base_cm.displaced(b);
            std::vector<BranchPair> bc2;
            for (const auto& p : pcm) bc2.push_back({p.t, evolve(ra, p), evolve(rb, p), a, b, p.symplectic_error});
            r.cm_report = decoherence_report("CM+R", bc2, env_cm, cm_scale);
            r.rescale_factor = s;
            detail::fill_ratio(r, false);
        }
    }
    return r;
}

struct PointerCandidateResult {
    std::size_t index = 0;
    double purity = 0.0;
};

/// Purity of the open mode after evolving candidate (x) env for time t;
/// sorted by purity, highest first.
inline std::vector<PointerCandidateResult> pointer_robustness(const QuadraticHamiltonian& h,
                                                              const std::vector<GaussianState>& candidates,
                                                              const GaussianState& env, double t) {
    const auto p = propagator(h, t);
    std::vector<PointerCandidateResult> out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        detail::require(c.n_modes() == 1, "pointer_robustness: candidates must live on the open mode only");
        const auto g = reorder(product_state(c, env), h.layout());
        out.push_back({i, purity(reduce(evolve(g, p), c.layout().labels()))});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.purity > b.purity; });
    return out;
}

}  // namespace pardec
