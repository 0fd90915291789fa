#include "ctxrs/vfa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ctxrs {

namespace {

std::vector<std::size_t> argmax_rows(const Matrix& a) {
    std::vector<std::size_t> out(a.rows(), 0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 1; k < a.cols(); ++k)
            if (a(i, k) > a(i, out[i])) out[i] = k;
    return out;
}

double pair_term(const Tensor4& cond_mean, const Tensor4& cond_var, std::size_t i1,
                 std::size_t ic, std::size_t j, std::size_t k1, std::size_t kc,
                 std::size_t ell) {
    double gap = cond_mean(i1, j, k1, ell) - cond_mean(ic, j, kc, ell);
    double denom = cond_var(i1, j, k1, ell) + cond_var(ic, j, kc, ell);
    if (denom < kVarianceFloor) denom = kVarianceFloor;
    return gap * gap / denom;
}

double apcs_with(const Tensor4& cond_mean, const Tensor4& cond_var, const RankingView& ranking,
                 const std::vector<std::size_t>& k_assign, std::size_t ell, std::size_t j) {
    const auto& ord = ranking.order[j];
    std::size_t i1 = ord[0];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t p = 1; p < ord.size(); ++p) {
        std::size_t ic = ord[p];
        best = std::min(best, pair_term(cond_mean, cond_var, i1, ic, j, k_assign[i1],
                                        k_assign[ic], ell));
    }
    return best;
}

/// min over contexts of the clustering-weighted expected APCS, evaluated
/// with the supplied memberships and variances (means stay at time t).
double value_core(const PosteriorState& posterior, const RankingView& ranking, const Matrix& z,
                  const Matrix& v, const Tensor4& cond_var, double approx_budget) {
    const std::size_t n = z.rows(), K = z.cols();
    const std::size_t m = v.rows(), L = v.cols();
    const Tensor4& cond_mean = posterior.cond_mean;
    if (n < 2) return 0.0;

    double result = std::numeric_limits<double>::infinity();
    if (std::pow(double(K), double(n)) * L <= approx_budget) {
        std::vector<std::size_t> k_assign(n, 0);
        for (std::size_t j = 0; j < m; ++j) {
            double expect = 0.0;
            std::fill(k_assign.begin(), k_assign.end(), 0u);
            while (true) {
                double w = 1.0;
                for (std::size_t i = 0; i < n; ++i) w *= z(i, k_assign[i]);
                if (w > 0.0) {
                    for (std::size_t ell = 0; ell < L; ++ell) {
                        double wv = v(j, ell);
                        if (wv > 0.0)
                            expect += w * wv *
                                      apcs_with(cond_mean, cond_var, ranking, k_assign, ell, j);
                    }
                }
                std::size_t i = 0;
                while (i < n && ++k_assign[i] == K) k_assign[i++] = 0;
                if (i == n) break;
            }
            result = std::min(result, expect);
        }
    } else {
        // Pairwise-marginal approximation: min and expectation swapped, so
        // each term is an expectation over the leader/challenger pair only.
        for (std::size_t j = 0; j < m; ++j) {
            const auto& ord = ranking.order[j];
            std::size_t i1 = ord[0];
            for (std::size_t p = 1; p < n; ++p) {
                std::size_t ic = ord[p];
                double s = 0.0;
                for (std::size_t k1 = 0; k1 < K; ++k1)
                    for (std::size_t kc = 0; kc < K; ++kc)
                        for (std::size_t ell = 0; ell < L; ++ell) {
                            double w = z(i1, k1) * z(ic, kc) * v(j, ell);
                            if (w > 0.0)
                                w *= pair_term(cond_mean, cond_var, i1, ic, j, k1, kc, ell);
                            s += w;
                        }
                result = std::min(result, s);
            }
        }
    }
    return result;
}

} // namespace

RankingView ranking_view(const PosteriorState& posterior) {
    RankingView rv;
    rv.map_k = argmax_rows(posterior.z_hat);
    rv.map_l = argmax_rows(posterior.v_hat);
    const std::size_t n = posterior.z_hat.rows(), m = posterior.v_hat.rows();
    rv.order.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        auto& ord = rv.order[j];
        ord.resize(n);
        std::iota(ord.begin(), ord.end(), 0u);
        std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
            double ma = posterior.cond_mean(a, j, rv.map_k[a], rv.map_l[j]);
            double mb = posterior.cond_mean(b, j, rv.map_k[b], rv.map_l[j]);
            if (ma != mb) return ma > mb;
            return a < b;
        });
    }
    return rv;
}

double apcs(const PosteriorState& posterior, const RankingView& ranking,
            const std::vector<std::size_t>& k_assign, std::size_t ell, std::size_t j) {
    return apcs_with(posterior.cond_mean, posterior.cond_var, ranking, k_assign, ell, j);
}

OneStepView one_step_variances(const PosteriorState& posterior, const SamplingState& state,
                               const PlugInVariance& plug, std::size_t r, std::size_t q) {
    const std::size_t n = state.n(), m = state.m();
    const std::size_t K = posterior.params.K, L = posterior.params.L;
    OneStepView view;
    view.r = r;
    view.q = q;
    view.z_hat = posterior.z_hat;
    view.v_hat = posterior.v_hat;
    view.cond_var = posterior.cond_var;

    auto map_k = argmax_rows(posterior.z_hat);
    auto map_l = argmax_rows(posterior.v_hat);

    // Updated cluster variances: the time-t weighted average with the
    // sampled cell's replication count incremented. Clamped so the cluster
    // variance never grows from the mid-EM reference value.
    view.cluster_sigma2 = Matrix(K, L);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t l = 0; l < L; ++l) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    double w = posterior.z_hat(i, k) * posterior.v_hat(j, l);
                    if (w == 0.0) continue;
                    double t = state.counts(i, j) + ((i == r && j == q) ? 1.0 : 0.0);
                    double pv = 1.0 / (t / plug(i, j) + 1.0 / posterior.params.sigma2(k, l));
                    double dm = posterior.cond_mean(i, j, k, l) - posterior.params.mu(k, l);
                    num += w * (pv + dm * dm);
                    den += w;
                }
            double upd = den >= 1e-12 ? num / den : posterior.params.sigma2(k, l);
            view.cluster_sigma2(k, l) = std::min(upd, posterior.params.sigma2(k, l));
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            bool sampled = (i == r && j == q);
            bool shares = !sampled && map_k[i] == map_k[r] && map_l[j] == map_l[q];
            if (!sampled && !shares) continue;
            double t = state.counts(i, j) + (sampled ? 1.0 : 0.0);
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t l = 0; l < L; ++l)
                    view.cond_var(i, j, k, l) =
                        1.0 / (t / plug(i, j) + 1.0 / view.cluster_sigma2(k, l));
        }
    }
    return view;
}

void one_step_membership(const PosteriorState& posterior, const PlugInVariance& plug,
                         OneStepView& view) {
    const std::size_t K = posterior.params.K, L = posterior.params.L;
    const std::size_t r = view.r, q = view.q;
    auto map_k = argmax_rows(posterior.z_hat);
    auto map_l = argmax_rows(posterior.v_hat);
    const std::size_t kr = map_k[r], lq = map_l[q];
    const double pv = plug(r, q);

    if (K > 1) {
        std::vector<double> w(K);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double dm = posterior.cond_mean(r, q, k, lq) - posterior.params.mu(k, lq);
            double cv = posterior.cond_var(r, q, k, lq);
            double cs = posterior.params.sigma2(k, lq);
            double rate = dm * dm * cv * cv / (2.0 * pv * cs * cs);
            w[k] = posterior.z_hat(r, k) * std::exp(-rate);
            sum += w[k];
        }
        for (std::size_t k = 0; k < K; ++k)
            view.z_hat(r, k) = sum > 0.0 ? w[k] / sum : 1.0 / K;
    }
    if (L > 1) {
        std::vector<double> w(L);
        double sum = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            double dm = posterior.cond_mean(r, q, kr, l) - posterior.params.mu(kr, l);
            double cv = posterior.cond_var(r, q, kr, l);
            double cs = posterior.params.sigma2(kr, l);
            double rate = dm * dm * cv * cv / (2.0 * pv * cs * cs);
            w[l] = posterior.v_hat(q, l) * std::exp(-rate);
            sum += w[l];
        }
        for (std::size_t l = 0; l < L; ++l)
            view.v_hat(q, l) = sum > 0.0 ? w[l] / sum : 1.0 / L;
    }
}

OneStepView one_step_view(const PosteriorState& posterior, const SamplingState& state,
                          const PlugInVariance& plug, std::size_t r, std::size_t q) {
    OneStepView view = one_step_variances(posterior, state, plug, r, q);
    one_step_membership(posterior, plug, view);
    return view;
}

double value_v(const PosteriorState& posterior, const RankingView& ranking,
               double approx_budget) {
    return value_core(posterior, ranking, posterior.z_hat, posterior.v_hat,
                      posterior.cond_var, approx_budget);
}

double value_v_onestep(const PosteriorState& posterior, const SamplingState& state,
                       const PlugInVariance& plug, std::size_t r, std::size_t q,
                       double approx_budget) {
    OneStepView view = one_step_view(posterior, state, plug, r, q);
    RankingView ranking = ranking_view(posterior);
    return value_core(posterior, ranking, view.z_hat, view.v_hat, view.cond_var,
                      approx_budget);
}

double value_w_onestep(const PosteriorState& posterior, const SamplingState& state,
                       const PlugInVariance& plug, std::size_t r, std::size_t q) {
    OneStepView view = one_step_variances(posterior, state, plug, r, q);
    RankingView ranking = ranking_view(posterior);
    const std::size_t n = posterior.z_hat.rows(), K = posterior.z_hat.cols();
    const std::size_t m = posterior.v_hat.rows(), L = posterior.v_hat.cols();
    if (n < 2) return 0.0;

    double result = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
        const auto& ord = ranking.order[j];
        std::size_t i1 = ord[0];
        for (std::size_t p = 1; p < n; ++p) {
            std::size_t ic = ord[p];
            for (std::size_t k1 = 0; k1 < K; ++k1)
                for (std::size_t kc = 0; kc < K; ++kc)
                    for (std::size_t ell = 0; ell < L; ++ell)
                        result = std::min(result, pair_term(posterior.cond_mean, view.cond_var,
                                                            i1, ic, j, k1, kc, ell));
        }
    }
    return result;
}

} // namespace ctxrs
