#pragma once

// Scenario orchestration: resolves a config into a model and initial state,
// runs pipeline stages and writes CSV artifacts plus a manifest. Every CSV
// starts with "# manifest <hash>" followed by a header row.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pardec/config.hpp"
#include "pardec/decoherence.hpp"
#include "pardec/decomposition.hpp"
#include "pardec/dynamics.hpp"
#include "pardec/fock_oracle.hpp"
#include "pardec/master_equation.hpp"
#include "pardec/models.hpp"

namespace pardec {

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string manifest_hash(const ScenarioConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(emit_config(cfg)));
    return buf;
}

namespace detail {

inline std::mutex& path_mutex(const std::string& path) {
    static std::mutex registry_lock;
    static std::map<std::string, std::mutex> locks;
    std::lock_guard<std::mutex> g(registry_lock);
    return locks[path];
}

}  // namespace detail

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& hash, const std::vector<std::string>& columns)
        : path_(path.string()) {
        for (std::size_t k = 0; k < columns.size(); ++k) header_ += (k ? "," : "") + columns[k];
        body_ = "# manifest " + hash + "\n" + header_ + "\n";
        ncols_ = columns.size();
    }
    void row(const std::vector<std::string>& cells) {
        detail::require(cells.size() == ncols_, "csv: row width does not match header of " + path_);
        for (std::size_t k = 0; k < cells.size(); ++k) body_ += (k ? "," : "") + cells[k];
        body_ += "\n";
    }
    static std::string num(double v) { return detail::format_double(v); }
    /// Writes the whole file at once; writes to the same path are serialized.
    const std::string& close() {
        std::lock_guard<std::mutex> g(detail::path_mutex(path_));
        std::ofstream f(path_, std::ios::binary | std::ios::trunc);
        if (!f) throw ValidationError("cannot write " + path_);
        f << body_;
        return path_;
    }

private:
    std::string path_;
    std::string header_;
    std::string body_;
    std::size_t ncols_ = 0;
};

struct ModelContext {
    ScenarioConfig cfg;
    QuadraticHamiltonian hamiltonian;
    std::vector<double> masses;
    GaussianState base_state;  // S vacuum at the open scale (x) thermal environment
    std::vector<double> grid;
    ModeScale open_scale;
    std::optional<BathParams> bath;
    std::string hash;
};

inline ModelContext build_context(const ScenarioConfig& cfg) {
    if (cfg.model_type == "master_equation")
        throw ValidationError("this stage needs model.type two_mode or caldeira_leggett");
    const auto scale = cfg.open_scale();
    const auto open = coherent_state(PhaseSpaceLayout({"S"}), {}, {scale});
    if (cfg.model_type == "two_mode") {
        const auto p = cfg.two_mode();
        auto h = build_two_mode(p);
        auto env = thermal_state(PhaseSpaceLayout({"E"}), {{p.m_E, p.omega, cfg.temperature}});
        return {cfg, h, {p.m_S, p.m_E}, product_state(open, env), cfg.grid(), scale, std::nullopt, manifest_hash(cfg)};
    }
    const auto bath = cfg.bath();
    auto h = build_caldeira_leggett(cfg.system_potential(), bath, cfg.m_S);
    std::vector<ThermalMode> tm;
    for (const auto& o : bath.oscillators) tm.push_back({o.mass, o.frequency, cfg.temperature});
    auto env = thermal_state(PhaseSpaceLayout(PhaseSpaceLayout::numbered("E", bath.size())), tm);
    return {cfg, h, caldeira_leggett_masses(bath, cfg.m_S), product_state(open, env), cfg.grid(), scale, bath,
            manifest_hash(cfg)};
}

struct RunOptions {
    bool oracle = false;
};

struct RunResult {
    int exit_code = 0;
    std::vector<std::string> files;
    std::vector<std::string> messages;
};

namespace detail {

inline std::vector<std::string> phase_labels(const PhaseSpaceLayout& l) {
    std::vector<std::string> out;
    for (const auto& m : l.labels()) out.push_back("x_" + m);
    for (const auto& m : l.labels()) out.push_back("p_" + m);
    return out;
}

inline std::string write_matrix(const std::filesystem::path& path, const std::string& hash, const Mat& m,
                                const std::vector<std::string>& rows, const std::vector<std::string>& cols) {
    std::vector<std::string> header{"row"};
    header.insert(header.end(), cols.begin(), cols.end());
    CsvWriter w(path, hash, header);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<std::string> cells{rows[static_cast<std::size_t>(i)]};
        for (Eigen::Index j = 0; j < m.cols(); ++j) cells.push_back(CsvWriter::num(m(i, j)));
        w.row(cells);
    }
    return w.close();
}

inline std::string amp_text(const CoherentAmplitude& a) {
    return CsvWriter::num(a.x0) + ":" + CsvWriter::num(a.p0);
}

inline void write_report(const std::filesystem::path& path, const std::string& hash, const DecoherenceReport& r,
                         std::vector<std::string>& files) {
    CsvWriter w(path, hash, {"t", "gamma", "lambda", "decomposition", "alpha", "beta", "saturated"});
    for (std::size_t k = 0; k < r.t.size(); ++k)
        w.row({CsvWriter::num(r.t[k]), CsvWriter::num(r.gamma[k]), r.lambda.empty() ? "nan" : CsvWriter::num(r.lambda[k]),
               r.decomposition, amp_text(r.alpha), amp_text(r.beta), r.saturated[k] ? "1" : "0"});
    files.push_back(w.close());
}

inline CoherentAmplitude amp(const std::string& mode, const std::vector<double>& v) { return {mode, v.at(0), v.at(1)}; }

}  // namespace detail

inline void stage_build(const ModelContext& ctx, const std::filesystem::path& dir, RunResult& res) {
    const auto labels = detail::phase_labels(ctx.hamiltonian.layout());
    res.files.push_back(detail::write_matrix(dir / "hamiltonian.csv", ctx.hash, ctx.hamiltonian.matrix(), labels, labels));
    if (ctx.bath) {
        CsvWriter w(dir / "bath.csv", ctx.hash, {"i", "mass", "frequency", "kappa", "coupling_sign"});
        for (std::size_t i = 0; i < ctx.bath->size(); ++i) {
            const auto& o = ctx.bath->oscillators[i];
            w.row({std::to_string(i + 1), CsvWriter::num(o.mass), CsvWriter::num(o.frequency), CsvWriter::num(o.coupling),
                   std::to_string(ctx.bath->coupling_sign)});
        }
        res.files.push_back(w.close());
    }
}

/// CM transform, transformed H, analytic constants and their residuals,
/// positivity flags, normal-mode spectrum and seeded invariance checks.
inline void stage_transform(const ModelContext& ctx, const std::filesystem::path& dir, RunResult& res) {
    const auto& h = ctx.hamiltonian;
    const auto family = relative_family_from_string(ctx.cfg.family);
    const auto t = cm_relative_transform(h.layout(), ctx.masses, family);
    const auto hc = transform_hamiltonian(h, t);
    res.files.push_back(detail::write_matrix(dir / "transform_A.csv", ctx.hash, t.position_map(), t.target().labels(),
                                             t.source().labels()));
    const auto lc = detail::phase_labels(hc.layout());
    res.files.push_back(detail::write_matrix(dir / "hamiltonian_cm.csv", ctx.hash, hc.matrix(), lc, lc));

    ConstantsReport report;
    std::vector<std::pair<std::string, double>> positivity;
    if (ctx.cfg.model_type == "two_mode") {
        const auto k = analytic_two_mode_constants(ctx.cfg.two_mode());
        report = verify_constants(hc, k);
        positivity = {{"c1", k.c1}, {"c2", k.c2}};
    } else {
        const auto k = analytic_caldeira_leggett_constants(ctx.cfg.system_potential(), *ctx.bath, ctx.cfg.m_S, family);
        report = verify_constants(hc, caldeira_leggett_parts(ctx.cfg.system_potential(), *ctx.bath, ctx.cfg.m_S), t, k);
        positivity.push_back({"M_Omega_CM2_half", k.m_omega_cm2_half + k.harmonic_x2});
        for (std::size_t a = 0; a < k.mu_nu2_half.size(); ++a)
            positivity.push_back({"mu_nu2_half[" + std::to_string(a + 1) + "]", k.mu_nu2_half[a] + k.harmonic_rho2[a]});
    }
    {
        CsvWriter w(dir / "constants.csv", ctx.hash, {"name", "analytic", "numeric", "residual"});
        for (const auto& e : report.entries)
            w.row({e.name, CsvWriter::num(e.analytic), CsvWriter::num(e.numeric), CsvWriter::num(e.residual)});
        res.files.push_back(w.close());
    }
    std::vector<std::string> violated;
    {
        CsvWriter w(dir / "positivity.csv", ctx.hash, {"quantity", "value", "positive"});
        for (const auto& [name, v] : positivity) {
            w.row({name, CsvWriter::num(v), v > 0.0 ? "1" : "0"});
            if (!(v > 0.0)) violated.push_back(name);
        }
        res.files.push_back(w.close());
    }
    if (!violated.empty()) {
        std::string msg = "positivity violated for";
        for (const auto& v : violated) msg += " " + v;
        if (!ctx.cfg.allow_positivity_violation)
            throw ValidationError(msg + " (set decomposition.allow_positivity_violation = true to proceed)");
        res.messages.push_back(msg + " (override in effect)");
    }

    std::vector<std::string> env;
    for (const auto& l : hc.layout().labels())
        if (l != "CM") env.push_back(l);
    const auto spectrum = coupling_spectrum(hc, "CM");
    {
        CsvWriter w(dir / "normal_modes.csv", ctx.hash, {"l", "frequency", "coupling"});
        for (std::size_t l = 0; l < spectrum.size(); ++l)
            w.row({std::to_string(l + 1), CsvWriter::num(spectrum[l].frequency), CsvWriter::num(spectrum[l].coupling)});
        res.files.push_back(w.close());
    }

    std::mt19937_64 rng(static_cast<std::uint64_t>(ctx.cfg.seed));
    std::normal_distribution<double> nd;
    double energy = 0.0;
    const Mat s = t.symplectic();
    for (int k = 0; k < 100; ++k) {
        Vec z(static_cast<Eigen::Index>(h.layout().dim()));
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = nd(rng);
        const double e0 = h.energy(z);
        energy = std::max(energy, std::abs(hc.energy(s * z) - e0) / std::max(1.0, std::abs(e0)));
    }
    const auto back = transform_hamiltonian(hc, t.inverse());
    CsvWriter w(dir / "transform_checks.csv", ctx.hash, {"check", "value"});
    w.row({"symplectic_residual", CsvWriter::num(t.symplectic_error())});
    w.row({"condition_number", CsvWriter::num(t.condition_number())});
    w.row({"energy_invariance_100_points", CsvWriter::num(energy)});
    w.row({"roundtrip_residual", CsvWriter::num(max_abs(back.matrix() - h.matrix()))});
    w.row({"max_constant_residual", CsvWriter::num(report.max_residual())});
    res.files.push_back(w.close());
}

/// Global and open-mode diagnostics of the undisplaced-then-alpha state along the grid.
inline void stage_evolve(const ModelContext& ctx, const std::filesystem::path& dir, RunResult& res) {
    const auto s0 = ctx.base_state.displaced(detail::amp("S", ctx.cfg.alpha_S));
    CsvWriter w(dir / "evolve.csv", ctx.hash,
                {"t", "purity_global", "purity_S", "energy", "symplectic_error", "mean_x_S", "var_x_S"});
    for (double t : ctx.grid) {
        const auto p = propagator(ctx.hamiltonian, t);
        const auto s = evolve(s0, p);
        const auto r = reduce(s, {"S"});
        w.row({CsvWriter::num(t), CsvWriter::num(purity(s)), CsvWriter::num(purity(r)),
               CsvWriter::num(mean_energy(s, ctx.hamiltonian)), CsvWriter::num(p.symplectic_error),
               CsvWriter::num(r.mean()(0)), CsvWriter::num(r.covariance()(0, 0))});
    }
    res.files.push_back(w.close());
}

inline ParallelCompareInput compare_input(const ModelContext& ctx) {
    ParallelCompareInput in{ctx.hamiltonian, ctx.base_state};
    in.open_mode = "S";
    in.open_scale = ctx.open_scale;
    in.masses = ctx.masses;
    in.family = relative_family_from_string(ctx.cfg.family);
    in.alpha_S = detail::amp("S", ctx.cfg.alpha_S);
    in.beta_S = detail::amp("S", ctx.cfg.beta_S);
    in.alpha_CM = detail::amp("CM", ctx.cfg.alpha_CM);
    in.beta_CM = detail::amp("CM", ctx.cfg.beta_CM);
    in.t_grid = ctx.grid;
    in.allow_rescale = ctx.cfg.allow_rescale;
    in.allow_positivity_violation = ctx.cfg.allow_positivity_violation;
    return in;
}

inline void stage_decohere(const ModelContext& ctx, const std::filesystem::path& dir, RunResult& res) {
    if (ctx.cfg.structures == "original") {
        const auto env = other_modes(ctx.hamiltonian.layout(), "S");
        const auto b = evolve_branches(detail::amp("S", ctx.cfg.alpha_S), detail::amp("S", ctx.cfg.beta_S),
                                       ctx.base_state, ctx.hamiltonian, ctx.grid);
        detail::write_report(dir / "decoherence_S.csv", ctx.hash, decoherence_report("S+E", b, env, ctx.open_scale),
                             res.files);
        return;
    }
    const auto r = parallel_compare(compare_input(ctx));
    if (ctx.cfg.structures == "both") detail::write_report(dir / "decoherence_S.csv", ctx.hash, r.s_report, res.files);
    detail::write_report(dir / "decoherence_CM.csv", ctx.hash, r.cm_report, res.files);
}

inline ParallelCompareResult stage_compare(const ModelContext& ctx, const std::filesystem::path& dir, RunResult& res) {
    auto r = parallel_compare(compare_input(ctx));
    detail::write_report(dir / "decoherence_S.csv", ctx.hash, r.s_report, res.files);
    detail::write_report(dir / "decoherence_CM.csv", ctx.hash, r.cm_report, res.files);
    auto opt = [](const std::optional<double>& v) { return v ? CsvWriter::num(*v) : std::string("not reached"); };
    CsvWriter w(dir / "compare_summary.csv", ctx.hash, {"key", "value"});
    w.row({"tau_S", opt(r.s_report.tau)});
    w.row({"tau_CM", opt(r.cm_report.tau)});
    w.row({"tau_ratio_S_over_CM", opt(r.tau_ratio)});
    w.row({"tau_ratio_after_rescale", opt(r.tau_ratio_final)});
    w.row({"rescale_factor_CM", CsvWriter::num(r.rescale_factor)});
    w.row({"flag", r.flag});
    w.row({"threshold_gamma", CsvWriter::num(kDecoherenceThreshold)});
    w.row({"gamma_S_strictly_decreasing_initial_decade", strictly_decreasing_initial_decade(r.s_report) ? "1" : "0"});
    w.row({"gamma_CM_strictly_decreasing_initial_decade", strictly_decreasing_initial_decade(r.cm_report) ? "1" : "0"});
    w.row({"frame_equivalence_residual", CsvWriter::num(r.frame_residual)});
    w.row({"max_symplectic_error", CsvWriter::num(r.max_symplectic_error)});
    w.row({"open_scale_CM_mass", CsvWriter::num(r.cm_report.open_scale.mass)});
    w.row({"open_scale_CM_frequency", CsvWriter::num(r.cm_report.open_scale.frequency)});
    res.files.push_back(w.close());
    return r;
}

/// Returns false when the oracle flagged leakage (results untrusted).
inline bool stage_oracle(const ModelContext& ctx, const std::filesystem::path& dir, RunResult& res) {
    if (ctx.cfg.model_type != "two_mode") throw ValidationError("oracle: only two_mode scenarios fit the Fock oracle");
    CrosscheckInput in;
    in.params = ctx.cfg.two_mode();
    in.temperature = ctx.cfg.temperature;
    in.open_scale = ctx.open_scale;
    in.cutoff_S = static_cast<std::size_t>(ctx.cfg.cutoff_S);
    in.cutoff_E = static_cast<std::size_t>(ctx.cfg.cutoff_E);
    in.cutoff_CM = static_cast<std::size_t>(ctx.cfg.cutoff_CM);
    in.cutoff_R = static_cast<std::size_t>(ctx.cfg.cutoff_R);
    in.alpha = detail::amp("S", ctx.cfg.alpha_S);
    in.beta = detail::amp("S", ctx.cfg.beta_S);
    in.t_grid = ctx.grid;
    in.check_cm_entanglement = ctx.cfg.temperature == 0.0;
    const auto rep = gaussian_crosscheck(in);
    CsvWriter w(dir / "oracle_deviation.csv", ctx.hash,
                {"t", "mean_dev", "cov_dev", "purity_S_dev", "overlap_gauss", "overlap_oracle", "overlap_dev", "leakage",
                 "ln_cm_gauss", "ln_cm_oracle", "cm_leakage"});
    for (const auto& r : rep.rows)
        w.row({CsvWriter::num(r.t), CsvWriter::num(r.mean_dev), CsvWriter::num(r.cov_dev), CsvWriter::num(r.purity_dev),
               CsvWriter::num(r.overlap_gauss), CsvWriter::num(r.overlap_oracle), CsvWriter::num(r.overlap_dev),
               CsvWriter::num(r.leakage), CsvWriter::num(r.ln_cm_gauss), CsvWriter::num(r.ln_cm_oracle),
               CsvWriter::num(r.cm_leakage)});
    res.files.push_back(w.close());
    CsvWriter s(dir / "oracle_summary.csv", ctx.hash, {"key", "value"});
    s.row({"max_mean_dev", CsvWriter::num(rep.max_mean_dev)});
    s.row({"max_cov_dev", CsvWriter::num(rep.max_cov_dev)});
    s.row({"max_purity_S_dev", CsvWriter::num(rep.max_purity_dev)});
    s.row({"max_overlap_dev", CsvWriter::num(rep.max_overlap_dev)});
    s.row({"max_leakage", CsvWriter::num(rep.max_leakage)});
    s.row({"thermal_truncation_weight", CsvWriter::num(rep.thermal_missing_weight)});
    s.row({"trusted", rep.trusted ? "1" : "0"});
    s.row({"ln_cm_sign_agrees", rep.ln_sign_agrees ? "1" : "0"});
    res.files.push_back(s.close());
    if (!rep.trusted) res.messages.push_back("oracle: Fock leakage above 1e-6, deviation report untrusted");
    return rep.trusted;
}

/// Returns false when positivity was flagged.
inline bool stage_master(const ScenarioConfig& cfg, const std::filesystem::path& dir, RunResult& res) {
    if (cfg.model_type != "master_equation") throw ValidationError("master-eq: needs model.type = master_equation");
    MasterEqScenario s;
    s.variant = master_hamiltonian_from_string(cfg.master_variant);
    s.scale = {cfg.master_mass, cfg.master_omega};
    s.lambda = cfg.master_lambda;
    s.cutoff = static_cast<std::size_t>(cfg.master_cutoff);
    s.t_grid = cfg.grid();
    s.step = cfg.master_step;
    const double x0 = cfg.master_x0;
    const auto rho0 = cat_state(s.cutoff, s.scale, x0, 0.0, -x0, 0.0);
    const auto r = evolve_master(rho0, s);
    const double corot = cfg.master_corotate && s.variant == MasterHamiltonian::Harmonic ? cfg.master_omega : 0.0;
    const auto v = coherence_profile(r.samples, r.t, {x0, 0.0}, {-x0, 0.0}, s.scale, corot);
    const auto hash = manifest_hash(cfg);
    CsvWriter w(dir / "master_eq.csv", hash, {"t", "visibility", "trace", "purity", "min_eigenvalue"});
    for (std::size_t k = 0; k < r.t.size(); ++k)
        w.row({CsvWriter::num(r.t[k]), CsvWriter::num(v[k]), CsvWriter::num(r.samples[k].trace()),
               CsvWriter::num(r.samples[k].purity()), CsvWriter::num(r.samples[k].min_eigenvalue())});
    res.files.push_back(w.close());
    CsvWriter s2(dir / "master_eq_summary.csv", hash, {"key", "value"});
    s2.row({"step_used", CsvWriter::num(r.step_used)});
    s2.row({"halvings", std::to_string(r.halvings)});
    s2.row({"max_trace_drift", CsvWriter::num(r.max_trace_drift)});
    s2.row({"min_eigenvalue", CsvWriter::num(r.min_eigenvalue)});
    s2.row({"positivity_flag", r.positivity_flag ? "1" : "0"});
    s2.row({"predicted_rate_4_lambda_x0_sq", CsvWriter::num(4.0 * s.lambda * x0 * x0)});
    res.files.push_back(s2.close());
    if (r.positivity_flag) res.messages.push_back("master-eq: negative eigenvalue below -1e-6 (positivity flag)");
    return !r.positivity_flag;
}

inline void write_manifest(const ScenarioConfig& cfg, const std::string& command, const std::filesystem::path& dir,
                           RunResult& res) {
    const auto path = (dir / "manifest.txt").string();
    std::string body = "# manifest " + manifest_hash(cfg) + "\n# command " + command + "\n" + emit_config(cfg);
    std::lock_guard<std::mutex> g(detail::path_mutex(path));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write " + path);
    f << body;
    res.files.push_back(path);
}

/// Runs one subcommand ("build", "transform", "evolve", "decohere",
/// "compare", "oracle", "master-eq" or "run"). Validation errors map to
/// exit 1, trust failures to exit 2; both are rethrown to the caller's
/// handler only through the exit code and messages.
inline RunResult run_scenario(const ScenarioConfig& cfg, const std::string& command, const std::filesystem::path& dir,
                              const RunOptions& opt = {}) {
    RunResult res;
    try {
        std::filesystem::create_directories(dir);
        write_manifest(cfg, command, dir, res);
        bool trusted = true;
        if (command == "master-eq" || (command == "run" && cfg.model_type == "master_equation")) {
            trusted = stage_master(cfg, dir, res);
        } else {
            const auto ctx = build_context(cfg);
            if (command == "build" || command == "run") stage_build(ctx, dir, res);
            if (command == "transform" || command == "run") stage_transform(ctx, dir, res);
            if (command == "evolve" || command == "run") stage_evolve(ctx, dir, res);
            if (command == "decohere") stage_decohere(ctx, dir, res);
            if (command == "compare" || (command == "run" && cfg.structures == "both")) stage_compare(ctx, dir, res);
            if (command == "run" && cfg.structures != "both") stage_decohere(ctx, dir, res);
            if (command == "oracle" || (command == "run" && opt.oracle)) {
                if (cfg.model_type == "two_mode") trusted = stage_oracle(ctx, dir, res);
                else res.messages.push_back("oracle: skipped (Fock oracle supports two_mode scenarios only)");
            }
            static const std::set<std::string> known{"build", "transform", "evolve", "decohere", "compare", "oracle", "run"};
            if (!known.count(command)) throw ValidationError("unknown command '" + command + "'");
        }
        res.exit_code = trusted ? 0 : 2;
    } catch (const NumericalTrustError& e) {
        res.exit_code = 2;
        res.messages.push_back(std::string("numerical trust failure: ") + e.what());
    } catch (const ValidationError& e) {
        res.exit_code = 1;
        res.messages.push_back(std::string("validation error: ") + e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        res.exit_code = 1;
        res.messages.push_back(std::string("i/o error: ") + e.what());
    }
    return res;
}

}  // namespace pardec
