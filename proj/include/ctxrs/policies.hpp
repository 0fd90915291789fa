#ifndef CTXRS_POLICIES_HPP
#define CTXRS_POLICIES_HPP

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ctxrs/core.hpp"
#include "ctxrs/mixture.hpp"
#include "ctxrs/vfa.hpp"

namespace ctxrs {

enum class PolicyKind { Dsco, Ea, Iz, Cocba, Sucb };

PolicyKind policy_from_name(const std::string& name);
std::string policy_name(PolicyKind kind);

struct PolicyConfig {
    std::size_t n0 = 5;
    double delta = 0.1;
    double h = 2.583; // IZ constant; computed externally for a target PCS level
    double gamma = 1.0;
    std::size_t k_max = 4;
    std::size_t l_max = 4;
    std::size_t em_restarts = 5;
    std::size_t em_step_budget = 3;    // EM iterations per sampling step
    std::size_t full_em_every = 100;   // steps between full-convergence EM runs
    double approx_budget = 1e6;
    double enum_budget = 1e7;
    bool use_known_variance = false;   // plug in true variances instead of estimates
};

/// Draws one observation for design i in context j.
using Sampler = std::function<double(std::size_t, std::size_t)>;

struct Allocation {
    std::size_t r = 0;
    std::size_t q = 0;
    enum class Rule { VRule, WRule, RoundRobin, Balance, Ucb, Stage } rule = Rule::RoundRobin;
    double criterion = 0.0;
};

/// Everything a sequential policy carries between steps.
struct PolicyContext {
    PolicyKind kind = PolicyKind::Ea;
    PolicyConfig cfg;
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<std::vector<double>> contexts;
    SamplingState state;
    PlugInVariance plug;
    bool has_plug = false;

    // DSCO state
    PosteriorState posterior;
    bool has_posterior = false;
    bool w_mode = false;
    std::size_t steps_since_full_em = 0;

    // The true variances, used when cfg.use_known_variance is set.
    Matrix known_var;
};

/// Policy-appropriate warm-up: DSCO takes n0 per cell, fits BIC + EM;
/// C-OCBA takes n0 per cell; SUCB seeds one sample per cell; EA none.
/// When cfg.use_known_variance is set, `known_var` must supply the true
/// n x m sampling variances (they are needed already during warm-up).
PolicyContext initialize_policy(PolicyKind kind, const PolicyConfig& cfg, std::size_t n,
                                std::size_t m, std::vector<std::vector<double>> contexts,
                                const Sampler& sampler, Rng& rng,
                                const Matrix* known_var = nullptr);

Allocation dsco_next(PolicyContext& ctx);
Allocation ea_next(const PolicyContext& ctx);
Allocation cocba_next(const PolicyContext& ctx);
Allocation sucb_next(const PolicyContext& ctx);

/// One sequential step: pick, sample, record, refresh estimates.
Allocation policy_step(PolicyContext& ctx, const Sampler& sampler);

/// The IZ procedure allocates its whole budget in two stages and returns
/// the context with the final counts; its total is self-determined.
struct IzResult {
    Matrix stage2_added; // per-cell additional samples beyond n0
    std::size_t total = 0;
};
IzResult iz_allocate(PolicyContext& ctx, const Sampler& sampler);

/// Per-context selected designs from the policy's terminal estimator.
std::vector<std::size_t> final_selection(const PolicyContext& ctx);

} // namespace ctxrs

#endif
