#ifndef CTXRS_HARNESS_HPP
#define CTXRS_HARNESS_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ctxrs/core.hpp"
#include "ctxrs/policies.hpp"

namespace ctxrs {

struct ExperimentConfig {
    PolicyKind policy = PolicyKind::Ea;
    PolicyConfig policy_cfg;
    std::vector<std::size_t> checkpoints; // strictly increasing totals
    std::size_t macro_reps = 100;
    std::uint64_t seed = 1;
    std::size_t workers = 1; // 0: hardware concurrency; CTXRS_WORKERS overrides
    std::string problem_name = "problem";
};

struct CheckpointStats {
    std::size_t budget = 0;
    std::vector<double> pcs;    // per context
    std::vector<double> pcs_se; // binomial standard errors
    double pcs_w = 0.0;         // min_j pcs[j]
};

struct ExperimentRecord {
    std::string policy;
    std::string problem;
    std::uint64_t seed = 0;
    std::size_t macro_reps = 0;
    std::vector<CheckpointStats> checkpoints;
    Matrix mean_ratios; // t_ij / t at the final budget, averaged over reps

    std::string to_json() const;
    static ExperimentRecord from_json(const std::string& text);
};

/// Redraws the instance for one macro-replication (redraw-instance mode).
using ProblemMaker = std::function<ProblemInstance(std::uint64_t rep)>;

/// R independent macro-replications of one policy on one fixed instance;
/// selection quality evaluated at each budget checkpoint. Deterministic in
/// (config, seed) for any worker count. IZ ignores the checkpoint grid and
/// reports one entry at its self-chosen average total.
ExperimentRecord run_experiment(const ProblemInstance& problem, const ExperimentConfig& config);

/// Same, with a fresh instance drawn per macro-replication.
ExperimentRecord run_experiment(const ProblemMaker& maker, const ExperimentConfig& config);

struct OptimalRatios {
    Matrix r;                 // n x m, entries >= 0, sums to 1
    double common_rate = 0.0; // the shared pairwise rate G at the solution
    double residual = 0.0;    // max relative residual of the balance system
    bool converged = false;
};

/// Large-deviations-optimal sampling ratios for a known instance: within
/// each context all leader-challenger pairwise rates equal a common value,
/// the leader's rate weight balances the challengers' total, and the
/// common value is shared across contexts. Solved by nested bisection.
OptimalRatios optimal_ratio_oracle(const ProblemInstance& problem);

/// Max relative residual of the three balance conditions at ratios `r`.
double balance_residual(const ProblemInstance& problem, const Matrix& r);

/// CSV (one row per checkpoint-context plus a worst-case row per
/// checkpoint) and a JSON mirror at `path` + ".json" with diagnostics.
void write_results(const ExperimentRecord& record, const std::string& path);

/// Inverse of write_results: reads the CSV (or the JSON mirror when given
/// a .json path, restoring diagnostics too).
ExperimentRecord read_results(const std::string& path);

/// Worker count after applying the CTXRS_WORKERS override and hardware
/// fallback for 0.
std::size_t resolve_workers(std::size_t requested);

} // namespace ctxrs

#endif
