#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctxrs/harness.hpp"
#include "ctxrs/problems.hpp"

namespace {

using namespace ctxrs;

ProblemInstance load_problem(const std::string& name, const std::string& which,
                             std::uint64_t seed, std::size_t cancer_reps,
                             const std::string& cache) {
    SyntheticCase c = which == "one" ? SyntheticCase::OneCluster : SyntheticCase::MultiCluster;
    if (name == "example1") return make_example1(c, seed);
    if (name == "example2") return make_example2(c, seed);
    if (name == "small" || name == "example1-small") return make_small_instance();
    if (name == "cancer")
        return make_cancer_problem(CancerConfig::defaults(), seed, cancer_reps, cache).instance;
    if (name.size() > 5 && name.compare(name.size() - 5, 5, ".json") == 0) {
        std::ifstream in(name);
        if (!in) throw std::runtime_error("cannot open instance file " + name);
        std::stringstream buf;
        buf << in.rdbuf();
        return ProblemInstance::from_json(buf.str());
    }
    throw std::runtime_error("unknown problem: " + name);
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << text << "\n";
        return;
    }
    std::ofstream file(out);
    if (!file) throw std::runtime_error("cannot open output file " + out);
    file << text << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contextual ranking-and-selection experiment runner"};
    app.require_subcommand(1);
    // Long-only help so the short IZ-constant flag --h stays available.
    app.set_help_flag("--help", "print help");

    std::string problem = "example1", which = "multi", policy = "dsco", out, config_path;
    std::string cache, results_in, instance_path;
    std::uint64_t seed = 1;
    std::size_t budget = 1000, macro_reps = 100, workers = 1, cancer_reps = 2000;
    std::vector<std::size_t> checkpoints;
    PolicyConfig pcfg;
    bool redraw = false;

    auto add_problem_flags = [&](CLI::App* cmd) {
        cmd->add_option("--problem", problem,
                        "example1 | example2 | small | cancer | instance JSON path");
        cmd->add_option("--case", which, "one | multi")->check(CLI::IsMember({"one", "multi"}));
        cmd->add_option("--seed", seed, "root seed");
        cmd->add_option("--cancer-reps", cancer_reps, "chain runs per cell for ground truth");
        cmd->add_option("--cache", cache, "ground-truth cache file (cancer)");
    };

    CLI::App* run = app.add_subcommand("run", "run a policy experiment");
    run->set_help_flag("--help", "print help");
    add_problem_flags(run);
    run->add_option("--policy", policy, "dsco | ea | iz | cocba | sucb")
        ->check(CLI::IsMember({"dsco", "ea", "iz", "cocba", "sucb"}));
    run->add_option("--budget", budget, "total sampling budget (final checkpoint)");
    run->add_option("--checkpoints", checkpoints, "explicit budget checkpoints");
    run->add_option("--macro-reps", macro_reps, "independent macro-replications");
    run->add_option("--workers", workers, "worker threads (0 = hardware)");
    run->add_option("--n0", pcfg.n0, "initial replications per cell");
    run->add_option("--kmax", pcfg.k_max, "max design clusters for model selection");
    run->add_option("--lmax", pcfg.l_max, "max context clusters for model selection");
    run->add_option("--delta", pcfg.delta, "IZ indifference-zone width");
    run->add_option("--h", pcfg.h, "IZ constant");
    run->add_option("--gamma", pcfg.gamma, "SUCB exploration weight");
    run->add_option("--em-budget", pcfg.em_step_budget, "EM iterations per sampling step");
    run->add_option("--approx-budget", pcfg.approx_budget, "exact value-enumeration cutoff");
    run->add_flag("--redraw-instance", redraw, "fresh instance per macro-replication");
    run->add_option("--out", out, "results CSV path (JSON mirror alongside)");
    run->set_config("--config", "", "JSON/INI config file mirroring these flags");

    CLI::App* oracle = app.add_subcommand("oracle", "print optimal sampling ratios");
    add_problem_flags(oracle);
    oracle->add_option("--out", out, "output path (default stdout)");

    CLI::App* gen = app.add_subcommand("gen", "emit a problem instance as JSON");
    add_problem_flags(gen);
    gen->add_option("--out", out, "output path (default stdout)");

    CLI::App* validate = app.add_subcommand("validate", "check a results file's invariants");
    validate->add_option("--in", results_in, "results CSV or JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            ProblemInstance inst = load_problem(problem, which, seed, cancer_reps, cache);
            emit(inst.to_json(), out);
        } else if (oracle->parsed()) {
            ProblemInstance inst = load_problem(problem, which, seed, cancer_reps, cache);
            OptimalRatios ratios = optimal_ratio_oracle(inst);
            nlohmann::ordered_json doc;
            doc["problem"] = problem;
            nlohmann::json rows = nlohmann::json::array();
            for (std::size_t i = 0; i < ratios.r.rows(); ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (std::size_t j = 0; j < ratios.r.cols(); ++j)
                    row.push_back(ratios.r(i, j));
                rows.push_back(row);
            }
            doc["ratios"] = rows;
            doc["common_rate"] = ratios.common_rate;
            doc["residual"] = ratios.residual;
            doc["converged"] = ratios.converged;
            emit(doc.dump(2), out);
        } else if (run->parsed()) {
            ExperimentConfig cfg;
            cfg.policy = policy_from_name(policy);
            cfg.policy_cfg = pcfg;
            cfg.checkpoints = checkpoints.empty() ? std::vector<std::size_t>{budget}
                                                  : checkpoints;
            cfg.macro_reps = macro_reps;
            cfg.seed = seed;
            cfg.workers = workers;
            cfg.problem_name = problem + (problem.find("example") == 0 ? "-" + which : "");
            ExperimentRecord record;
            if (redraw) {
                std::string p = problem, w = which;
                std::uint64_t root = seed;
                std::size_t reps = cancer_reps;
                std::string cc = cache;
                record = run_experiment(
                    [&](std::uint64_t rep) {
                        return load_problem(p, w, root * 1000003ull + rep, reps, cc);
                    },
                    cfg);
            } else {
                ProblemInstance inst = load_problem(problem, which, seed, cancer_reps, cache);
                record = run_experiment(inst, cfg);
            }
            std::string path = out.empty() ? "results.csv" : out;
            write_results(record, path);
            for (const auto& ck : record.checkpoints)
                std::cout << "budget " << ck.budget << "  pcs_w " << ck.pcs_w << "\n";
            std::cout << "wrote " << path << " and " << path << ".json\n";
        } else if (validate->parsed()) {
            ExperimentRecord record = read_results(results_in);
            for (const auto& ck : record.checkpoints) {
                double min_pcs = 1.0;
                for (double p : ck.pcs) {
                    if (p < 0.0 || p > 1.0)
                        throw std::runtime_error("pcs outside [0, 1]");
                    min_pcs = std::min(min_pcs, p);
                }
                if (std::abs(min_pcs - ck.pcs_w) > 1e-12)
                    throw std::runtime_error("pcs_w is not the per-context minimum");
            }
            std::cout << "ok: " << record.checkpoints.size() << " checkpoints\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
