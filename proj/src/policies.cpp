#include "ctxrs/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ctxrs {

PolicyKind policy_from_name(const std::string& name) {
    if (name == "dsco") return PolicyKind::Dsco;
    if (name == "ea") return PolicyKind::Ea;
    if (name == "iz") return PolicyKind::Iz;
    if (name == "cocba") return PolicyKind::Cocba;
    if (name == "sucb") return PolicyKind::Sucb;
    throw std::invalid_argument("unknown policy: " + name);
}

std::string policy_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::Dsco: return "dsco";
        case PolicyKind::Ea: return "ea";
        case PolicyKind::Iz: return "iz";
        case PolicyKind::Cocba: return "cocba";
        case PolicyKind::Sucb: return "sucb";
    }
    return "?";
}

namespace {

void refresh_plug(PolicyContext& ctx) {
    if (ctx.cfg.use_known_variance) {
        ctx.plug.var = ctx.known_var;
        ctx.has_plug = true;
        return;
    }
    bool all2 = true;
    for (std::size_t i = 0; i < ctx.n && all2; ++i)
        for (std::size_t j = 0; j < ctx.m; ++j)
            if (ctx.state.counts(i, j) < 2.0) {
                all2 = false;
                break;
            }
    if (all2) {
        ctx.plug = plug_in_variance(ctx.state);
        ctx.has_plug = true;
    }
}

EmOptions em_options(const PolicyConfig& cfg) {
    EmOptions o;
    o.enum_budget = cfg.enum_budget;
    return o;
}

void dsco_refresh(PolicyContext& ctx, bool full) {
    EmOptions opts = em_options(ctx.cfg);
    std::size_t iters = full ? opts.max_iter : std::max<std::size_t>(ctx.cfg.em_step_budget, 1);
    EmResult fit = refresh_em(ctx.state, ctx.plug, ctx.posterior, iters, opts);
    ctx.posterior = std::move(fit.posterior);
}

/// Solve A x = b for a small symmetric positive definite matrix by
/// Gauss-Jordan with partial pivoting.
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t d = b.size();
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        double diag = a[col][col];
        for (std::size_t c = col; c < d; ++c) a[col][c] /= diag;
        b[col] /= diag;
        for (std::size_t r = 0; r < d; ++r) {
            if (r == col || a[r][col] == 0.0) continue;
            double f = a[r][col];
            for (std::size_t c = col; c < d; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    return b;
}

} // namespace

PolicyContext initialize_policy(PolicyKind kind, const PolicyConfig& cfg, std::size_t n,
                                std::size_t m, std::vector<std::vector<double>> contexts,
                                const Sampler& sampler, Rng& rng, const Matrix* known_var) {
    PolicyContext ctx;
    ctx.kind = kind;
    ctx.cfg = cfg;
    ctx.n = n;
    ctx.m = m;
    ctx.contexts = std::move(contexts);
    ctx.state = SamplingState(n, m);
    if (cfg.use_known_variance) {
        if (!known_var || known_var->rows() != n || known_var->cols() != m)
            throw std::invalid_argument(
                "use_known_variance requires an n x m known-variance matrix");
        ctx.known_var = *known_var;
    }

    std::size_t warm = 0;
    switch (kind) {
        case PolicyKind::Dsco:
        case PolicyKind::Cocba:
        case PolicyKind::Iz: warm = cfg.n0; break;
        case PolicyKind::Sucb: warm = 1; break;
        case PolicyKind::Ea: warm = 0; break;
    }
    for (std::size_t rep = 0; rep < warm; ++rep)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) ctx.state.record(i, j, sampler(i, j));

    refresh_plug(ctx);

    if (kind == PolicyKind::Dsco) {
        if (cfg.n0 < 2) throw std::invalid_argument("dsco requires n0 >= 2");
        BicResult sel = bic_select(ctx.state, ctx.plug, cfg.k_max, cfg.l_max,
                                   cfg.em_restarts, rng, em_options(cfg));
        ctx.posterior = std::move(sel.fit.posterior);
        ctx.has_posterior = true;
    }
    return ctx;
}

Allocation dsco_next(PolicyContext& ctx) {
    const std::size_t n = ctx.n, m = ctx.m;
    RankingView ranking = ranking_view(ctx.posterior);
    double v0 = value_v(ctx.posterior, ranking, ctx.cfg.approx_budget);

    auto scan = [&](auto&& value_fn) {
        Allocation best;
        best.criterion = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t q = 0; q < m; ++q) {
                double val = value_fn(r, q);
                if (val > best.criterion) {
                    best.criterion = val;
                    best.r = r;
                    best.q = q;
                }
            }
        return best;
    };

    if (!ctx.w_mode) {
        Allocation best = scan([&](std::size_t r, std::size_t q) {
            return value_v_onestep(ctx.posterior, ctx.state, ctx.plug, r, q,
                                   ctx.cfg.approx_budget);
        });
        if (best.criterion > v0) {
            best.rule = Allocation::Rule::VRule;
            return best;
        }
        ctx.w_mode = true;
    }
    Allocation best = scan([&](std::size_t r, std::size_t q) {
        return value_w_onestep(ctx.posterior, ctx.state, ctx.plug, r, q);
    });
    best.rule = Allocation::Rule::WRule;
    // Leave W-mode once the lower-bound criterion signals an improvement over V.
    if (best.criterion > v0) ctx.w_mode = false;
    return best;
}

Allocation ea_next(const PolicyContext& ctx) {
    Allocation a;
    std::size_t idx = ctx.state.total % (ctx.n * ctx.m);
    a.r = idx / ctx.m;
    a.q = idx % ctx.m;
    a.rule = Allocation::Rule::RoundRobin;
    return a;
}

Allocation cocba_next(const PolicyContext& ctx) {
    const std::size_t n = ctx.n, m = ctx.m;
    if (!ctx.has_plug) throw std::domain_error("cocba_next: needs 2 samples per cell");

    // Per-context leader, challenger rate terms, and the worst context.
    std::size_t worst_j = 0;
    double worst_rate = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> leader(m);
    for (std::size_t j = 0; j < m; ++j) {
        std::size_t b = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (ctx.state.sample_mean(i, j) > ctx.state.sample_mean(b, j)) b = i;
        leader[j] = b;
        double tb = ctx.state.counts(b, j);
        double yb = ctx.state.sample_mean(b, j);
        double ctx_rate = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (i == b) continue;
            double gap = yb - ctx.state.sample_mean(i, j);
            double denom =
                ctx.plug(b, j) / tb + ctx.plug(i, j) / ctx.state.counts(i, j);
            ctx_rate = std::min(ctx_rate, gap * gap / std::max(denom, kVarianceFloor));
        }
        if (ctx_rate < worst_rate) {
            worst_rate = ctx_rate;
            worst_j = j;
        }
    }

    // Within the worst context, balance the total condition first, then
    // push the challenger with the smallest rate.
    std::size_t b = leader[worst_j];
    double lhs = ctx.state.counts(b, worst_j) * ctx.state.counts(b, worst_j) /
                 ctx.plug(b, worst_j);
    double rhs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == b) continue;
        rhs += ctx.state.counts(i, worst_j) * ctx.state.counts(i, worst_j) /
               ctx.plug(i, worst_j);
    }
    Allocation a;
    a.q = worst_j;
    a.rule = Allocation::Rule::Balance;
    if (lhs < rhs || n == 1) {
        a.r = b;
        a.criterion = rhs - lhs;
        return a;
    }
    double yb = ctx.state.sample_mean(b, worst_j);
    double best_rate = std::numeric_limits<double>::infinity();
    std::size_t best_i = b == 0 ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == b) continue;
        double gap = yb - ctx.state.sample_mean(i, worst_j);
        double denom = ctx.plug(b, worst_j) / ctx.state.counts(b, worst_j) +
                       ctx.plug(i, worst_j) / ctx.state.counts(i, worst_j);
        double rate = gap * gap / std::max(denom, kVarianceFloor);
        if (rate < best_rate) {
            best_rate = rate;
            best_i = i;
        }
    }
    a.r = best_i;
    a.criterion = best_rate;
    return a;
}

Allocation sucb_next(const PolicyContext& ctx) {
    const std::size_t n = ctx.n, m = ctx.m, d = ctx.contexts.empty()
                                                    ? 0
                                                    : ctx.contexts.front().size();
    if (d == 0) throw std::domain_error("sucb_next: empty context vectors");

    std::vector<std::vector<double>> A(d, std::vector<double>(d, 0.0));
    for (std::size_t p = 0; p < d; ++p) A[p][p] = 1.0;
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = 0; q < d; ++q)
                A[p][q] += ctx.contexts[j][p] * ctx.contexts[j][q];

    // Exploration bonus per context: gamma * sqrt(x^T A^-1 x).
    std::vector<double> bonus(m);
    for (std::size_t j = 0; j < m; ++j) {
        auto y = solve_linear(A, ctx.contexts[j]);
        double q = 0.0;
        for (std::size_t p = 0; p < d; ++p) q += ctx.contexts[j][p] * y[p];
        bonus[j] = ctx.cfg.gamma * std::sqrt(std::max(q, 0.0));
    }

    // theta_i = A^-1 sum_j Ybar_i(x_j) x_j, recomputed from current means.
    Matrix score(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> rhs(d, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            double ybar = ctx.state.sample_mean(i, j);
            for (std::size_t p = 0; p < d; ++p) rhs[p] += ybar * ctx.contexts[j][p];
        }
        auto theta = solve_linear(A, rhs);
        for (std::size_t j = 0; j < m; ++j) {
            double dot = 0.0;
            for (std::size_t p = 0; p < d; ++p) dot += ctx.contexts[j][p] * theta[p];
            score(i, j) = dot + bonus[j];
        }
    }

    std::size_t best_j = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> min_i(m);
    for (std::size_t j = 0; j < m; ++j) {
        std::size_t mi = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (score(i, j) < score(mi, j)) mi = i;
        min_i[j] = mi;
        if (score(mi, j) > best_val) {
            best_val = score(mi, j);
            best_j = j;
        }
    }
    Allocation a;
    a.r = min_i[best_j];
    a.q = best_j;
    a.rule = Allocation::Rule::Ucb;
    a.criterion = best_val;
    return a;
}

Allocation policy_step(PolicyContext& ctx, const Sampler& sampler) {
    Allocation a;
    switch (ctx.kind) {
        case PolicyKind::Dsco: a = dsco_next(ctx); break;
        case PolicyKind::Ea: a = ea_next(ctx); break;
        case PolicyKind::Cocba: a = cocba_next(ctx); break;
        case PolicyKind::Sucb: a = sucb_next(ctx); break;
        case PolicyKind::Iz:
            throw std::logic_error("IZ allocates in two stages; use iz_allocate");
    }
    ctx.state.record(a.r, a.q, sampler(a.r, a.q));
    refresh_plug(ctx);
    if (ctx.kind == PolicyKind::Dsco) {
        ++ctx.steps_since_full_em;
        bool full = ctx.steps_since_full_em >= ctx.cfg.full_em_every;
        if (full) ctx.steps_since_full_em = 0;
        dsco_refresh(ctx, full);
    }
    return a;
}

IzResult iz_allocate(PolicyContext& ctx, const Sampler& sampler) {
    if (!(ctx.cfg.h > 0.0) || !(ctx.cfg.delta > 0.0))
        throw std::invalid_argument("iz_allocate: h and delta must be positive");
    const std::size_t n = ctx.n, m = ctx.m;
    IzResult res;
    res.stage2_added = Matrix(n, m);
    double ratio = ctx.cfg.h * ctx.cfg.h / (ctx.cfg.delta * ctx.cfg.delta);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double t = ctx.state.counts(i, j);
            double mean = ctx.state.sums(i, j) / t;
            double s2 = (ctx.state.sumsq(i, j) - t * mean * mean) / (t - 1.0);
            double extra = std::max(std::ceil(ratio * s2) - double(ctx.cfg.n0), 0.0);
            res.stage2_added(i, j) = extra;
            for (double k = 0; k < extra; ++k) ctx.state.record(i, j, sampler(i, j));
        }
    }
    res.total = ctx.state.total;
    return res;
}

std::vector<std::size_t> final_selection(const PolicyContext& ctx) {
    std::vector<std::size_t> sel(ctx.m, 0);
    if (ctx.kind == PolicyKind::Dsco && ctx.has_posterior) {
        RankingView ranking = ranking_view(ctx.posterior);
        for (std::size_t j = 0; j < ctx.m; ++j) sel[j] = ranking.order[j][0];
        return sel;
    }
    for (std::size_t j = 0; j < ctx.m; ++j) {
        std::size_t best = 0;
        double best_mean = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ctx.n; ++i) {
            if (ctx.state.counts(i, j) < 1.0) continue;
            double mean = ctx.state.sample_mean(i, j);
            if (mean > best_mean) {
                best_mean = mean;
                best = i;
            }
        }
        sel[j] = best;
    }
    return sel;
}

} // namespace ctxrs
