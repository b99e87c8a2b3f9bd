// Command-line front end: experiment runs and piecewise simulate / score / oracle steps.

#include "rlqe/episode_io.hpp"
#include "rlqe/harness.hpp"
#include "rlqe/kalman.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace rlqe;

namespace {

bool ends_with(const std::string& s, const std::string& suffix)
{
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write " + path);
    os << text;
}

/// Accepts a bare matrix or an object with an "x_hat" matrix.
MatrixXd load_estimate(const std::string& path)
{
    const json j = read_json_file(path);
    return matrix_from_json(j.is_object() ? j.at("x_hat") : j);
}

int cmd_run(const std::string& config_path, std::string out_dir, int workers, bool no_timing)
{
    ExperimentConfig config = config_from_json(read_json_file(config_path));
    config.master_seed = master_seed_from_env(config.master_seed);
    if (out_dir.empty())
        out_dir = config.output.empty() ? "." : config.output;
    fs::create_directories(out_dir);
    const auto rows = run_experiment(config, workers);
    write_text((fs::path(out_dir) / "results.csv").string(), rows_to_csv(rows, !no_timing));
    json summary{{"config", config_to_json(config)}, {"groups", summarize(rows)}};
    write_json_file(summary, (fs::path(out_dir) / "summary.json").string());
    std::size_t failed = 0;
    for (const auto& r : rows)
        failed += !r.error.empty() && r.error.rfind("flag:", 0) != 0;
    std::cout << rows.size() << " rows written to " << out_dir << " (" << failed << " failed)\n";
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& scenario, int T, double eta, std::uint64_t seed,
                 const std::string& out)
{
    ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : config_from_json(read_json_file(config_path));
    if (!scenario.empty())
        config.scenario = scenario;
    config.validate();
    const EpisodeData ep = make_episode(config, eta, T, master_seed_from_env(seed));
    if (ends_with(out, ".bin"))
        save_episode_binary(ep, out);
    else
        save_episode_json(ep, out);
    std::cout << "episode T=" << ep.T() << " corrupted=" << ep.corrupted_fraction() << " -> " << out << "\n";
    return 0;
}

int cmd_score(const std::string& episode_path, const std::string& estimate_path)
{
    const EpisodeData ep = load_episode(episode_path);
    const MatrixXd x_hat = load_estimate(estimate_path);
    if (x_hat.rows() != ep.T() || x_hat.cols() != ep.model.d())
        throw std::invalid_argument("estimate shape does not match the episode");
    const double opt = oracle_smoother(ep).opt_value;
    const double nll = clean_nll(x_hat, ep);
    std::cout << json{{"nll", nll}, {"opt", opt}, {"excess_risk", nll - opt}}.dump(2) << "\n";
    return 0;
}

int cmd_oracle(const std::string& episode_path, const std::string& out, bool brute_force, double eta)
{
    const EpisodeData ep = load_episode(episode_path);
    json j;
    if (brute_force) {
        j = solution_to_json(brute_force_oracle(ep.model, ep.y, eta));
    } else {
        const auto res = oracle_smoother(ep);
        j = {{"x_hat", matrix_to_json(res.x_hat)}, {"opt", res.opt_value}};
    }
    if (out.empty())
        std::cout << j.dump(2) << "\n";
    else
        write_json_file(j, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Robust state estimation experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int workers = 1;
    bool no_timing = false;
    auto* run = app.add_subcommand("run", "Run an experiment config and write results.csv and summary.json");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    run->add_flag("--no-timing", no_timing, "Omit the wall_time column");

    std::string sim_config, scenario, sim_out;
    int T = 64;
    double eta = 0.1;
    std::uint64_t seed = 1;
    auto* sim = app.add_subcommand("simulate", "Simulate and corrupt one episode");
    sim->add_option("--config", sim_config, "Experiment config supplying the model and adversary");
    sim->add_option("--scenario", scenario, "Scenario id");
    sim->add_option("--T", T, "Horizon")->check(CLI::PositiveNumber);
    sim->add_option("--eta", eta, "Corruption rate")->check(CLI::Range(0.0, 1.0));
    sim->add_option("--seed", seed, "Episode seed (RLQE_SEED overrides)");
    sim->add_option("--out", sim_out, "Output path (.json or .bin)")->required();

    std::string episode_path, estimate_path;
    auto* score = app.add_subcommand("score", "Clean NLL, OPT and excess risk of an estimate");
    score->add_option("--episode", episode_path, "Episode file")->required()->check(CLI::ExistingFile);
    score->add_option("--estimate", estimate_path, "Estimate (JSON matrix or {\"x_hat\": ...})")
        ->required()
        ->check(CLI::ExistingFile);

    std::string oracle_out;
    bool brute_force = false;
    double oracle_eta = 0.1;
    auto* oracle = app.add_subcommand("oracle", "Oracle smoother on the true mask, or exhaustive search");
    oracle->add_option("--episode", episode_path, "Episode file")->required()->check(CLI::ExistingFile);
    oracle->add_option("--out", oracle_out, "Output JSON (stdout when omitted)");
    oracle->add_flag("--brute-force", brute_force, "Exhaustive Program 1 search (T <= 14)");
    oracle->add_option("--eta", oracle_eta, "Corruption rate for --brute-force")->check(CLI::Range(0.0, 1.0));

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run)
            return cmd_run(config_path, out_dir, workers, no_timing);
        if (*sim)
            return cmd_simulate(sim_config, scenario, T, eta, seed, sim_out);
        if (*score)
            return cmd_score(episode_path, estimate_path);
        if (*oracle)
            return cmd_oracle(episode_path, oracle_out, brute_force, oracle_eta);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
