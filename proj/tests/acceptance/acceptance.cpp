// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed here.
// Criteria run in dependency order and print in numeric order. Exit status
// is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "pardec/pardec.hpp"

using namespace pardec;

namespace {

std::string shipped(const std::string& name) {
    const auto p = std::filesystem::path(PARDEC_SOURCE_DIR) / "scenarios" / name;
    std::ifstream f(p);
    if (!f) throw ValidationError("cannot read " + p.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<double> grid(double stop, double step) {
    std::vector<double> g;
    for (int k = 0; k * step <= stop + 1e-12; ++k) g.push_back(k * step);
    return g;
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// Worst S^T J S - J residual over every transform and propagator built below.
struct SymplecticTally {
    double worst = 0.0;
    std::string where = "none";
    long count = 0;
    void note(double r, const std::string& what) {
        ++count;
        if (r > worst) {
            worst = r;
            where = what;
        }
    }
    void note(const LinearCoordinateTransform& t, const std::string& what) { note(t.symplectic_error(), what); }
};
SymplecticTally tally;

struct Outcome {
    bool pass = false;
    std::string detail;
};

Outcome c1_two_mode_constants() {
    std::mt19937_64 rng(1001);
    std::uniform_real_distribution<double> mass(0.1, 10.0), freq(0.1, 5.0), frac(-2.0, 0.99);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        TwoModeParams p{mass(rng), mass(rng), freq(rng), 0.0};
        p.C = frac(rng) * p.m_E * p.omega * p.omega / 2.0;
        const auto h = build_two_mode(p);
        const auto t = cm_relative_transform(h.layout(), {p.m_S, p.m_E});
        tally.note(t, "two-mode CM transform");
        const auto r = verify_constants(transform_hamiltonian(h, t), analytic_two_mode_constants(p));
        for (const char* name : {"c1", "c2", "c3"}) worst = std::max(worst, r.max_residual(name));
    }
    return {worst < 1e-10, "max residual c1,c2,c3 over 100 sets = " + sci(worst) + " (tol 1e-10)"};
}

Outcome c2_many_mode_constants() {
    std::mt19937_64 rng(2002);
    std::uniform_real_distribution<double> pos(0.1, 5.0), kap(-1.0, 1.0);
    double worst = 0.0;
    std::string worst_name;
    long checked = 0;
    for (std::size_t n : {2, 3, 5})
        for (int k = 0; k < 20; ++k)
            for (bool harmonic : {false, true})
                for (auto fam : {RelativeFamily::Jacobi, RelativeFamily::RelativeToFirst}) {
                    BathParams b;
                    b.coupling_sign = (k % 2) ? 1 : -1;
                    for (std::size_t i = 0; i < n; ++i) b.oscillators.push_back({pos(rng), pos(rng), kap(rng)});
                    const double m_S = pos(rng);
                    const SystemPotential sys =
                        harmonic ? SystemPotential{HarmonicPotential{pos(rng)}} : SystemPotential{FreeParticle{}};
                    const auto h = build_caldeira_leggett(sys, b, m_S);
                    const auto t = cm_relative_transform(h.layout(), caldeira_leggett_masses(b, m_S), fam);
                    tally.note(t, "CL CM transform");
                    const auto r = verify_constants(transform_hamiltonian(h, t), caldeira_leggett_parts(sys, b, m_S), t,
                                                    analytic_caldeira_leggett_constants(sys, b, m_S, fam));
                    for (const auto& e : r.entries) {
                        ++checked;
                        if (e.residual > worst) {
                            worst = e.residual;
                            worst_name = e.name;
                        }
                    }
                }
    return {worst < 1e-9, "max residual over " + std::to_string(checked) + " constants (N in {2,3,5}, free and harmonic S) = " +
                              sci(worst) + " at " + worst_name + " (tol 1e-9)"};
}

Outcome c3_symplectic_sweep() {
    // extra transforms and propagators on top of everything the other criteria build
    std::mt19937_64 rng(3003);
    std::uniform_real_distribution<double> pos(0.05, 20.0), tt(-5.0, 5.0);
    for (int k = 0; k < 200; ++k) {
        const std::size_t n = 2 + static_cast<std::size_t>(k % 9);
        std::vector<double> m(n);
        for (auto& v : m) v = pos(rng);
        const PhaseSpaceLayout l(PhaseSpaceLayout::numbered("x", n));
        tally.note(cm_relative_transform(l, m, k % 2 ? RelativeFamily::Jacobi : RelativeFamily::RelativeToFirst),
                   "random-mass CM transform");
    }
    for (std::size_t n : {1, 4, 8, 16, 32}) {
        const auto b = discretize_ohmic_bath(n, 5.0, 0.1);
        const auto h = build_caldeira_leggett(HarmonicPotential{2.0}, b, 1.0);
        const double tmax = 900.0 / dynamical_norm(h);
        for (int k = 0; k < 10; ++k) {
            const double t = std::clamp(tt(rng) * 20.0, -tmax, tmax);
            tally.note(propagator(h, t).symplectic_error, "CL propagator");
        }
    }
    return {tally.worst < 1e-9, "max |S^T J S - J| over " + std::to_string(tally.count) + " transforms/propagators = " +
                                    sci(tally.worst) + " (" + tally.where + ", tol 1e-9)"};
}

Outcome c4_normal_modes() {
    std::mt19937_64 rng(4004);
    std::uniform_real_distribution<double> wc(1.0, 10.0), eta(0.02, 0.3), ws(0.5, 3.0);
    double worst_cross = 0.0, worst_linear = 0.0;
    int instances = 0, rejected = 0;
    // Draws cycle over harmonic/free S and both coupling signs. Those with an
    // indefinite R potential block (free S with sign +1 nearly always, for
    // larger N) are outside the operation's domain: they must raise the
    // documented error and are redrawn.
    for (std::size_t n = 1; n <= 8; ++n)
        for (int k = 0, tries = 0; k < 4 && tries < 400; ++tries) {
            const int cls = tries % 4;
            const auto b = discretize_ohmic_bath(n, wc(rng), eta(rng), cls % 2 ? 1 : -1);
            const SystemPotential sys =
                cls < 2 ? SystemPotential{HarmonicPotential{ws(rng)}} : SystemPotential{FreeParticle{}};
            const auto h = build_caldeira_leggett(sys, b, 1.0);
            const auto t = cm_relative_transform(h.layout(), caldeira_leggett_masses(b, 1.0));
            tally.note(t, "CL CM transform");
            const auto hcm = transform_hamiltonian(h, t);
            std::vector<std::string> env;
            for (std::size_t a = 1; a <= n; ++a) env.push_back("R" + std::to_string(a));
            std::optional<NormalModeResult> found;
            try {
                found = normal_mode_transform(hcm, env);
            } catch (const ValidationError& e) {
                if (std::string(e.what()).find("indefinite") == std::string::npos) throw;
                ++rejected;
                continue;
            }
            const auto& nm = *found;
            tally.note(nm.transform, "normal-mode transform");
            ++instances;
            ++k;
            const Mat& m = nm.hamiltonian.matrix();
            const auto N = static_cast<Eigen::Index>(n + 1);
            for (Eigen::Index a = 1; a < N; ++a)
                for (Eigen::Index c = 1; c < N; ++c)
                    if (a != c) worst_cross = std::max({worst_cross, std::abs(m(a, c)), std::abs(m(N + a, N + c))});
            // X sum_l lambda_l Q_l: no momentum or mixed terms touch the open mode
            worst_linear = std::max(worst_linear, max_abs(m.topRightCorner(N, N)));
            for (Eigen::Index a = 1; a < N; ++a) worst_linear = std::max(worst_linear, std::abs(m(N, N + a)));
            const auto lines = coupling_spectrum(hcm, "CM");
            for (Eigen::Index l = 1; l < N; ++l)
                worst_linear = std::max(worst_linear, std::abs(std::abs(m(0, l)) -
                                                               std::abs(lines[static_cast<std::size_t>(l - 1)].coupling)));
        }
    return {instances == 32 && worst_cross < 1e-10 && worst_linear < 1e-10,
            std::to_string(instances) + " instances (N=1..8, " + std::to_string(rejected) +
                " indefinite draws rejected with the documented error): max env-env cross coupling " + sci(worst_cross) +
                ", max non-linear-coupling residual " + sci(worst_linear) + " (tol 1e-10)"};
}

Outcome c5_oracle() {
    CrosscheckInput in;
    in.params = {1.0, 1.0, 1.0, 0.25};
    in.temperature = 0.0;
    in.open_scale = {1.0, 1.0};
    in.cutoff_S = in.cutoff_E = in.cutoff_CM = in.cutoff_R = 24;
    in.t_grid = grid(5.0, 0.25);
    const auto r = gaussian_crosscheck(in);
    const bool ok = r.max_mean_dev < 1e-6 && r.max_cov_dev < 1e-5 && r.max_overlap_dev < 1e-6 && r.ln_sign_agrees &&
                    r.ln_positive_detected;
    // first time at which any tolerance breaks, for the record
    double first_bad = -1.0;
    for (const auto& row : r.rows)
        if (row.mean_dev >= 1e-6 || row.cov_dev >= 1e-5 || row.overlap_dev >= 1e-6) {
            first_bad = row.t;
            break;
        }
    std::string d = "t in [0,5], d=24: mean dev " + sci(r.max_mean_dev) + " (tol 1e-6), cov dev " + sci(r.max_cov_dev) +
                    " (tol 1e-5), overlap dev " + sci(r.max_overlap_dev) + " (tol 1e-6), LN sign " +
                    (r.ln_sign_agrees && r.ln_positive_detected ? "agrees" : "disagrees") + ", max leakage " +
                    sci(r.max_leakage);
    if (first_bad >= 0) d += "; tolerances first exceeded at t = " + sci(first_bad);
    return {ok, d};
}

struct Reference {
    ModelContext ctx;
    ParallelCompareResult base;
};

Outcome c6_amplitude_scaling(const Reference& ref) {
    double worst_gamma = 0.0, worst_lambda = 0.0;
    int saturated = 0;
    auto scaled = [&](double s) {
        auto in = compare_input(ref.ctx);
        in.alpha_S.x0 *= s, in.alpha_S.p0 *= s, in.beta_S.x0 *= s, in.beta_S.p0 *= s;
        in.alpha_CM.x0 *= s, in.alpha_CM.p0 *= s, in.beta_CM.x0 *= s, in.beta_CM.p0 *= s;
        in.allow_rescale = false;
        auto r = parallel_compare(in);
        tally.note(r.max_symplectic_error, "reference propagators");
        tally.note(r.transform, "reference CM + normal-mode transform");
        return r;
    };
    const auto one = ref.base.rescale_factor == 1.0 ? ref.base : scaled(1.0);
    for (double s : {2.0, 4.0}) {
        const auto r = scaled(s);
        for (const auto* pair : {&one.s_report, &one.cm_report}) {
            const auto& other = pair == &one.s_report ? r.s_report : r.cm_report;
            for (std::size_t k = 0; k < pair->t.size(); ++k) {
                if (pair->gamma[k] == 0.0) continue;
                if (other.saturated[k]) {
                    ++saturated;
                    continue;
                }
                worst_gamma = std::max(worst_gamma, std::abs(other.gamma[k] / (s * s) - pair->gamma[k]) / std::abs(pair->gamma[k]));
                worst_lambda = std::max(worst_lambda, std::abs(other.lambda[k] - pair->lambda[k]) / std::abs(pair->lambda[k]));
            }
        }
    }
    std::string d = "s in {1,2,4}, both decompositions: max rel dev of -Gamma/|a-b|^2 " + sci(worst_gamma) +
                    ", of Lambda(t) " + sci(worst_lambda) + " (tol 1e-8)";
    if (saturated) d += "; " + std::to_string(saturated) + " saturated samples skipped";
    return {worst_gamma < 1e-8 && worst_lambda < 1e-8, d};
}

Outcome c7_parallel(const Reference& ref) {
    const auto& r = ref.base;
    const bool dec_s = strictly_decreasing_initial_decade(r.s_report);
    const bool dec_cm = strictly_decreasing_initial_decade(r.cm_report);
    const bool ok = dec_s && dec_cm && r.s_report.tau && r.cm_report.tau && r.flag == "within" && r.frame_residual < 1e-9;
    std::string d = std::string("Gamma strictly decreasing over initial decade: S+E ") + (dec_s ? "yes" : "no") +
                    ", CM+R " + (dec_cm ? "yes" : "no") + "; tau_S = " +
                    (r.s_report.tau ? sci(*r.s_report.tau) : "not reached") + ", tau_CM = " +
                    (r.cm_report.tau ? sci(*r.cm_report.tau) : "not reached") + ", flag " + r.flag +
                    (r.rescale_factor != 1.0 ? " (after rescale " + sci(r.rescale_factor) + ")" : "") +
                    "; frame residual " + sci(r.frame_residual) + " (tol 1e-9)";
    return {ok, d};
}

Outcome c8_entanglement_relativity() {
    const TwoModeParams p{2.0, 1.0, 1.0, 0.25};
    const PhaseSpaceLayout l({"S", "E"});
    // S vacuum at unit scale, E in its own ground state (m_E, w)
    const auto s = product_state(coherent_state(PhaseSpaceLayout({"S"}), {}, {{1.0, 1.0}}),
                                 thermal_state(PhaseSpaceLayout({"E"}), {{p.m_E, p.omega, 0.0}}));
    const auto t = cm_relative_transform(l, {p.m_S, p.m_E});
    tally.note(t, "two-mode CM transform");
    const double ln_se = log_negativity(s, {"S"}, {"E"});
    const double ln_gauss = log_negativity(transform_state(s, t), {"CM"}, {"R1"});

    // oracle: the same product state is the ground state of x_S^2/2 + p_S^2/2 + H_E; build it in the CM|R basis
    const auto k = analytic_two_mode_constants(p);
    const FockSpace sp({{"CM", 28, {k.total_mass, 1.0}}, {"R1", 28, {k.mu, 1.0}}});
    const auto z = source_quadratures(build_operators(sp), t);
    Mat h = Mat::Zero(4, 4);
    h(0, 0) = 1.0;
    h(1, 1) = p.m_E * p.omega * p.omega;
    h(2, 2) = 1.0;
    h(3, 3) = 1.0 / p.m_E;
    const auto gs = ground_state(quadratic_operator(h, Vec::Zero(4), z));
    const double ln_oracle = log_negativity_pt(gs, sp, {1});
    const double leak = leakage(gs, sp);
    const bool ok = std::abs(ln_se) < 1e-12 && ln_gauss > 0.01 && ln_oracle > 0.01 && leak < kLeakageThreshold;
    return {ok, "m_S=2, m_E=1: LN(S|E) = " + sci(ln_se) + ", LN(CM|R) Gaussian = " + sci(ln_gauss) +
                    ", partial-transpose oracle = " + sci(ln_oracle) + " (need > 0.01), oracle leakage " + sci(leak)};
}

Outcome c9_dephasing(double& trace_drift) {
    const auto cfg = parse_config(shipped("master_eq.cfg"));
    const ModeScale sc{cfg.master_mass, cfg.master_omega};
    const auto d = static_cast<std::size_t>(cfg.master_cutoff);
    const double lambda = cfg.master_lambda, x0 = cfg.master_x0;
    const auto rho0 = cat_state(d, sc, x0, 0.0, -x0, 0.0);

    MasterEqScenario none;
    none.variant = MasterHamiltonian::None;
    none.scale = sc;
    none.lambda = lambda;
    none.cutoff = d;
    none.step = cfg.master_step;
    const double sep2 = 4 * x0 * x0;
    const double t2 = 2.0 / (lambda * sep2);  // two decay constants of the widest coherence
    none.t_grid = {0.0, t2};
    const auto rn = evolve_master(rho0, none);
    std::vector<double> xs;
    for (int i = 0; i <= 120; ++i) xs.push_back(-6.0 + 0.1 * i);
    const auto chk = dephasing_law_check(rho0, rn.samples.back(), lambda, t2, sc, xs);

    MasterEqScenario harm = none;
    harm.variant = MasterHamiltonian::Harmonic;
    harm.t_grid = cfg.grid();
    const auto rh = evolve_master(rho0, harm);
    const auto v = coherence_profile(rh.samples, rh.t, {x0, 0}, {-x0, 0}, sc, cfg.master_corotate ? sc.frequency : 0.0);
    const double rate = fit_decay_rate(rh.t, v, 0.2);
    const double predicted = 4 * lambda * x0 * x0;
    const double rel = std::abs(rate / predicted - 1.0);
    trace_drift = std::max(rn.max_trace_drift, rh.max_trace_drift);
    return {chk.max_relative_deviation < 0.02 && rel < 0.10,
            "H=0: max rel dev from exp(-Lambda (x-x')^2 t) at two decay constants " + sci(chk.max_relative_deviation) +
                " over " + std::to_string(chk.points) + " grid points (tol 0.02); harmonic d=" + std::to_string(d) +
                ": fitted rate " + sci(rate) + " vs 4 Lambda x0^2 = " + sci(predicted) + ", rel dev " + sci(rel) +
                " (tol 0.10)"};
}

// Worst relative change of global purity and mean energy along a grid.
void conservation(const GaussianState& s0, const QuadraticHamiltonian& h, const std::vector<double>& t, double& dp,
                  double& de, const std::string& what) {
    const double p0 = purity(s0), e0 = mean_energy(s0, h);
    for (double x : t) {
        const auto p = propagator(h, x);
        tally.note(p.symplectic_error, what);
        const auto s = evolve(s0, p);
        dp = std::max(dp, std::abs(purity(s) - p0) / p0);
        de = std::max(de, std::abs(mean_energy(s, h) - e0) / std::max(1.0, std::abs(e0)));
    }
}

Outcome c10_conservation(const Reference& ref, double master_drift) {
    double dp = 0.0, de = 0.0;
    int scenarios = 0;
    for (const char* name : {"two_mode.cfg", "two_mode_long.cfg"}) {
        const auto ctx = build_context(parse_config(shipped(name)));
        const auto in = compare_input(ctx);
        conservation(ctx.base_state.displaced(in.alpha_S), ctx.hamiltonian, ctx.grid, dp, de, name);
        ++scenarios;
    }
    const auto in = compare_input(ref.ctx);
    conservation(ref.ctx.base_state.displaced(in.alpha_S), ref.ctx.hamiltonian, ref.ctx.grid, dp, de, "reference S+E");
    const auto cm0 = transform_state(ref.ctx.base_state, ref.base.transform).displaced(in.alpha_CM);
    conservation(cm0, ref.base.cm_hamiltonian, ref.ctx.grid, dp, de, "reference CM+R");
    scenarios += 2;
    const bool ok = dp < 1e-8 && de < 1e-8 && master_drift < 1e-8;
    return {ok, std::to_string(scenarios) + " unitary runs: max rel purity drift " + sci(dp) + ", max rel energy drift " +
                    sci(de) + "; master-equation trace drift " + sci(master_drift) + " (tol 1e-8)"};
}

}  // namespace

int main() {
    struct Line {
        std::string title;
        Outcome outcome;
        double seconds = 0.0;
    };
    std::map<int, Line> lines;
    auto report = [&](int n, const std::string& title, const std::function<Outcome()>& f) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        lines[n] = {title, o, secs};
    };

    report(1, "two-mode transform constants", c1_two_mode_constants);
    report(2, "many-mode transform constants", c2_many_mode_constants);

    std::optional<Reference> ref;
    std::string ref_error;
    try {
        const auto ctx = build_context(parse_config(shipped("reference_cl.cfg")));
        auto base = parallel_compare(compare_input(ctx));
        tally.note(base.max_symplectic_error, "reference propagators");
        tally.note(base.transform, "reference CM + normal-mode transform");
        ref = Reference{ctx, std::move(base)};
    } catch (const std::exception& e) {
        ref_error = e.what();
    }
    auto need_ref = [&](auto fn) {
        return [&, fn]() -> Outcome {
            if (!ref) return {false, "reference scenario failed: " + ref_error};
            return fn(*ref);
        };
    };

    report(4, "normal-mode linearization", c4_normal_modes);
    report(5, "Fock-oracle equivalence", c5_oracle);
    report(6, "decoherence-function structure", need_ref(c6_amplitude_scaling));
    report(7, "parallel decoherence", need_ref(c7_parallel));
    report(8, "entanglement relativity", c8_entanglement_relativity);
    double drift = 1.0;
    report(9, "dephasing law", [&] { return c9_dephasing(drift); });
    report(10, "conservation", need_ref([&](const Reference& r) { return c10_conservation(r, drift); }));
    // symplectic validity last, so it covers everything generated above
    report(3, "symplectic validity", c3_symplectic_sweep);

    int failed = 0;
    for (const auto& [n, l] : lines) {
        if (!l.outcome.pass) ++failed;
        std::printf("criterion %2d: %s  %s | %s [%.1fs]\n", n, l.outcome.pass ? "PASS" : "FAIL", l.title.c_str(),
                    l.outcome.detail.c_str(), l.seconds);
    }
    std::printf("%d of %zu criteria failed\n", failed, lines.size());
    return failed;
}
