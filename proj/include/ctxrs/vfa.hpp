#ifndef CTXRS_VFA_HPP
#define CTXRS_VFA_HPP

#include <cstddef>
#include <vector>

#include "ctxrs/core.hpp"
#include "ctxrs/mixture.hpp"

namespace ctxrs {

/// MAP cluster indices and per-context ranking of designs by posterior
/// mean under the MAP cluster pair. Ties break toward the smaller index.
struct RankingView {
    std::vector<std::size_t> map_k;           // per design
    std::vector<std::size_t> map_l;           // per context
    std::vector<std::vector<std::size_t>> order; // order[j][0] is the leader in context j
};

RankingView ranking_view(const PosteriorState& posterior);

/// Squared-gap-over-summed-variance minimum across challengers of context
/// j under a fixed clustering (k assignment per design, ell for the
/// context). Denominators are floored at the global variance floor.
double apcs(const PosteriorState& posterior, const RankingView& ranking,
            const std::vector<std::size_t>& k_assign, std::size_t ell, std::size_t j);

/// Hypothetical state after one more sample at (r, q): updated cluster
/// variances, per-cell posterior variances, and reweighted memberships.
/// Posterior means are frozen at their time-t values.
struct OneStepView {
    std::size_t r = 0;
    std::size_t q = 0;
    Matrix cluster_sigma2; // K x L
    Tensor4 cond_var;      // n x m x K x L
    Matrix z_hat;          // n x K
    Matrix v_hat;          // m x L
};

/// Variance part of the one-step view (memberships copied unchanged).
OneStepView one_step_variances(const PosteriorState& posterior, const SamplingState& state,
                               const PlugInVariance& plug, std::size_t r, std::size_t q);

/// Membership part: rows r of z and q of v reweighted and renormalized,
/// every other row untouched.
void one_step_membership(const PosteriorState& posterior, const PlugInVariance& plug,
                         OneStepView& view);

OneStepView one_step_view(const PosteriorState& posterior, const SamplingState& state,
                          const PlugInVariance& plug, std::size_t r, std::size_t q);

/// Clustering-weighted expected APCS, minimized over contexts. Exact
/// product-measure enumeration when K^n * L <= approx_budget, otherwise a
/// pairwise-marginal approximation.
double value_v(const PosteriorState& posterior, const RankingView& ranking,
               double approx_budget = 1e6);

/// value_v evaluated under the one-step view for candidate (r, q).
double value_v_onestep(const PosteriorState& posterior, const SamplingState& state,
                       const PlugInVariance& plug, std::size_t r, std::size_t q,
                       double approx_budget = 1e6);

/// Min over contexts, challengers, and cluster assignments of the pairwise
/// APCS term under one-step variances; a lower bound of value_v_onestep.
double value_w_onestep(const PosteriorState& posterior, const SamplingState& state,
                       const PlugInVariance& plug, std::size_t r, std::size_t q);

} // namespace ctxrs

#endif
