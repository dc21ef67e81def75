// Command-line front end: one subcommand per pipeline stage plus `run`.
//
//   pardec <command> --config FILE [--config FILE ...] [--out DIR]
//          [--oracle] [--workers N] [--seed K]
//
// Exit status: 0 success, 1 validation error, 2 numerical-trust failure.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "pardec/pardec.hpp"

namespace {

struct Job {
    pardec::ScenarioConfig cfg;
    std::filesystem::path dir;
    pardec::RunResult result;
};

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw pardec::ValidationError("cannot read config file '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pardec: parallel decoherence in two global decompositions of one oscillator system"};
    app.require_subcommand(1);
    app.fallthrough();

    std::vector<std::string> configs;
    std::string out;
    bool oracle = false;
    int workers = 1;
    std::optional<long> seed;
    app.add_option("--config", configs, "Scenario config file (repeatable)")->required();
    app.add_option("--out", out, "Output directory (default: output.dir from the config)");
    app.add_flag("--oracle", oracle, "Add the Fock-oracle cross-check to `run` (two_mode scenarios)");
    app.add_option("--workers", workers, "Scenarios run concurrently")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Override run.seed");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"build", "Build the closed-system Hamiltonian"},
        {"transform", "CM+R transform, constants check, normal modes"},
        {"evolve", "Gaussian evolution diagnostics on the time grid"},
        {"decohere", "Decoherence function for the configured structures"},
        {"compare", "Parallel S+E vs CM+R decoherence comparison"},
        {"oracle", "Fock-space cross-check of the Gaussian engine"},
        {"master-eq", "Integrate the position-measurement master equation"},
        {"run", "Full pipeline"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    std::vector<Job> jobs;
    int worst = 0;
    for (const auto& path : configs) {
        try {
            auto cfg = pardec::parse_config(read_file(path));
            if (seed) cfg.seed = *seed;
            std::filesystem::path dir = out.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(out);
            if (configs.size() > 1 && !out.empty()) dir /= cfg.name;
            jobs.push_back({cfg, dir, {}});
        } catch (const pardec::ValidationError& e) {
            std::cerr << path << ": " << e.what() << "\n";
            worst = std::max(worst, 1);
        }
    }
    if (worst) return worst;

    // Jobs sharing an output directory run in the same worker, one after another.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < jobs.size(); ++k) groups[jobs[k].dir.lexically_normal().string()].push_back(k);
    std::vector<std::vector<std::size_t>> queue;
    for (auto& [dir, idx] : groups) queue.push_back(idx);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t g; (g = next++) < queue.size();)
            for (auto k : queue[g])
                jobs[k].result = pardec::run_scenario(jobs[k].cfg, command, jobs[k].dir, {oracle});
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(workers), queue.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (const auto& j : jobs) {
        for (const auto& m : j.result.messages) std::cerr << j.cfg.name << ": " << m << "\n";
        for (const auto& f : j.result.files) std::cout << f << "\n";
        worst = std::max(worst, j.result.exit_code);
    }
    return worst;
}
