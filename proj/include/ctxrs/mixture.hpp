#ifndef CTXRS_MIXTURE_HPP
#define CTXRS_MIXTURE_HPP

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxrs/core.hpp"
#include "ctxrs/matrix.hpp"

namespace ctxrs {

/// Gaussian-mixture hyper-parameters: K design clusters x L context clusters.
struct MixtureParams {
    std::size_t K = 1;
    std::size_t L = 1;
    std::vector<double> tau;   // length K, sums to 1
    std::vector<double> omega; // length L, sums to 1
    Matrix mu;                 // K x L cluster means
    Matrix sigma2;             // K x L cluster variances

    static MixtureParams single(double mean, double var);
    std::string to_json() const;
};

/// Posterior cluster memberships and per-cell conditional posteriors,
/// conditioned on the params they were computed under.
struct PosteriorState {
    Matrix z_hat;      // n x K, rows sum to 1
    Matrix v_hat;      // m x L, rows sum to 1
    Tensor4 cond_mean; // mu_{ij,kl}
    Tensor4 cond_var;  // sigma^2_{ij,kl}
    MixtureParams params;

    // Diagnostics from the last E-step.
    bool exact_backend = true;
    bool meanfield_converged = true;
    double stabilized_denominator = 1.0; // exact backend: sum exp(g) after max shift

    std::string to_json() const;
};

struct EnumerationBudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyClusterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Normal-normal conjugate update for one cell under one cluster pair.
/// With t = 0 this returns the prior unchanged.
struct CellPosterior {
    double mean;
    double variance;
};
CellPosterior conditional_posterior(double t, double sum_y, double plug_var,
                                    double prior_mean, double prior_var);

/// Log of the closed-form marginal likelihood of a cell's observations
/// under one cluster pair (the observation density with the latent
/// performance integrated out). Zero observations give 0.
double log_evidence(double t, double sum_y, double sum_ysq, double plug_var,
                    double prior_mean, double prior_var);

/// Per-cell per-cluster-pair log evidences for the whole state.
Tensor4 build_log_evidence(const SamplingState& state, const PlugInVariance& plug,
                           const MixtureParams& params);

struct EStepResult {
    Matrix z_hat;
    Matrix v_hat;
    double log_likelihood = 0.0; // exact: observed-data; mean-field: ELBO
    double stabilized_denominator = 1.0;
    bool converged = true;
    // Pairwise joint P(z_i = k, v_j = l | data), filled only on request by
    // the exact backend. Needed for a true (monotone) M-step: the z, v
    // posteriors are dependent, so the product of marginals is not the
    // correct weight.
    Tensor4 joint;
    bool has_joint = false;
};

/// Exact cluster-membership posteriors by factorized enumeration over the
/// cheaper of the two clustering dimensions, entirely in log domain with
/// max-shift stabilization. Throws EnumerationBudgetExceeded when
/// min(n*K*m*L^m, m*L*n*K^n) exceeds `enum_budget`.
EStepResult e_step_exact(const Tensor4& log_c, const std::vector<double>& tau,
                         const std::vector<double>& omega, double enum_budget = 1e7,
                         bool want_joint = false);

/// Coordinate-ascent mean-field approximation of the membership
/// posteriors, warm-started from `z0`/`v0`. Always returns; reports
/// non-convergence via EStepResult::converged.
EStepResult e_step_meanfield(const Tensor4& log_c, const std::vector<double>& tau,
                             const std::vector<double>& omega, const Matrix& z0,
                             const Matrix& v0, double tol = 1e-8,
                             std::size_t max_sweeps = 500);

enum class EmptyClusterPolicy { Throw, Reseed };

/// Hyper-parameter update from membership posteriors and conditional
/// posterior moments. Cluster variances are floored at `var_floor`.
/// When `joint` is supplied (exact backend), the mu/sigma2 weights use the
/// pairwise joint memberships instead of the product of marginals, which
/// makes the EM iteration exactly monotone.
MixtureParams m_step(const Matrix& z_hat, const Matrix& v_hat, const Tensor4& cond_mean,
                     const Tensor4& cond_var, double var_floor,
                     EmptyClusterPolicy on_empty = EmptyClusterPolicy::Throw,
                     const Tensor4* joint = nullptr);

struct EmOptions {
    std::size_t max_iter = 200;
    double tol = 1e-6;
    double enum_budget = 1e7;
    double cluster_var_floor = 0.0; // 0: derive as 1e-6 * global sample variance
};

struct EmResult {
    MixtureParams params;
    PosteriorState posterior;
    double log_likelihood = 0.0;
    std::vector<double> log_likelihood_trace;
    std::size_t iterations = 0;
    bool exact_backend = true;
};

EmResult run_em(const SamplingState& state, const PlugInVariance& plug,
                const MixtureParams& init, const EmOptions& opts = {});

/// Single EM iteration budget for in-policy refreshes: warm-start from the
/// previous fit and run at most `max_iter` iterations.
EmResult refresh_em(const SamplingState& state, const PlugInVariance& plug,
                    const PosteriorState& prev, std::size_t max_iter,
                    const EmOptions& opts = {});

struct BicResult {
    std::size_t K = 1;
    std::size_t L = 1;
    MixtureParams params;
    EmResult fit;
    double bic = 0.0;
};

/// Best (K, L) on the grid 1..K_max x 1..L_max by BIC, each fit taken as
/// the best of a k-means seeded run plus `restarts` random restarts.
BicResult bic_select(const SamplingState& state, const PlugInVariance& plug,
                     std::size_t k_max, std::size_t l_max, std::size_t restarts,
                     Rng& rng, const EmOptions& opts = {});

/// Deterministic k-means style initialization from cell sample means.
MixtureParams init_kmeans(const SamplingState& state, std::size_t K, std::size_t L,
                          Rng& rng, double var_floor);

/// Random hard-assignment initialization.
MixtureParams init_random(const SamplingState& state, std::size_t K, std::size_t L,
                          Rng& rng, double var_floor);

struct LimitEmResult {
    MixtureParams params;
    Matrix z_hat;
    Matrix v_hat;
    double log_likelihood = 0.0;
};

/// Classic biclustered GMM EM on directly observed performances, the
/// infinite-sample reference the sampled pipeline converges to.
LimitEmResult limit_em(const Matrix& true_means, const MixtureParams& init,
                       const EmOptions& opts = {});

/// 1e-6 times the population variance of the per-cell sample means,
/// the default cluster-variance floor.
double default_cluster_var_floor(const SamplingState& state);

} // namespace ctxrs

#endif
