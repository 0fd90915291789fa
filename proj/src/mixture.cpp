#include "ctxrs/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace ctxrs {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

/// Running log-sum-exp accumulator.
class LogAccum {
public:
    void add(double x) {
        if (x == kNegInf) return;
        if (x > max_) {
            sum_ = sum_ * std::exp(max_ - x) + 1.0;
            max_ = x;
        } else {
            sum_ += std::exp(x - max_);
        }
    }
    double value() const { return sum_ > 0.0 ? max_ + std::log(sum_) : kNegInf; }

private:
    double max_ = kNegInf;
    double sum_ = 0.0;
};

void normalize_rows(Matrix& a) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k);
        if (s > 0.0)
            for (std::size_t k = 0; k < a.cols(); ++k) a(i, k) /= s;
        else
            for (std::size_t k = 0; k < a.cols(); ++k) a(i, k) = 1.0 / a.cols();
    }
}

Tensor4 transpose_tensor(const Tensor4& t) {
    Tensor4 out(t.m(), t.n(), t.L(), t.K());
    for (std::size_t i = 0; i < t.n(); ++i)
        for (std::size_t j = 0; j < t.m(); ++j)
            for (std::size_t k = 0; k < t.K(); ++k)
                for (std::size_t l = 0; l < t.L(); ++l) out(j, i, l, k) = t(i, j, k, l);
    return out;
}

/// Exact membership posteriors enumerating column clusterings; the joint
/// sum over row clusterings factorizes per row for each fixed column
/// clustering. All accumulation happens in log domain.
EStepResult enum_over_columns(const Tensor4& log_c, const std::vector<double>& tau,
                              const std::vector<double>& omega, bool want_joint) {
    const std::size_t n = log_c.n(), m = log_c.m(), K = log_c.K(), L = log_c.L();
    std::vector<double> log_tau(K), log_omega(L);
    for (std::size_t k = 0; k < K; ++k) log_tau[k] = safe_log(tau[k]);
    for (std::size_t l = 0; l < L; ++l) log_omega[l] = safe_log(omega[l]);

    LogAccum total;
    double log_max = kNegInf;
    std::vector<LogAccum> z_acc(n * K), v_acc(m * L);
    std::vector<LogAccum> j_acc(want_joint ? n * m * K * L : 0);
    std::vector<double> a(n * K), s(n), mx(n);
    std::vector<std::size_t> ell(m, 0);

    while (true) {
        double base = 0.0;
        for (std::size_t j = 0; j < m; ++j) base += log_omega[ell[j]];
        double tot = base, mtot = base;
        for (std::size_t i = 0; i < n; ++i) {
            LogAccum si;
            double mi = kNegInf;
            for (std::size_t k = 0; k < K; ++k) {
                double v = log_tau[k];
                for (std::size_t j = 0; j < m; ++j) v += log_c(i, j, k, ell[j]);
                a[i * K + k] = v;
                si.add(v);
                mi = std::max(mi, v);
            }
            s[i] = si.value();
            mx[i] = mi;
            tot += s[i];
            mtot += mi;
        }
        log_max = std::max(log_max, mtot);
        if (tot != kNegInf) {
            total.add(tot);
            for (std::size_t j = 0; j < m; ++j) v_acc[j * L + ell[j]].add(tot);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    if (a[i * K + k] == kNegInf) continue;
                    double g = tot - s[i] + a[i * K + k];
                    z_acc[i * K + k].add(g);
                    if (want_joint)
                        for (std::size_t j = 0; j < m; ++j)
                            j_acc[((i * m + j) * K + k) * L + ell[j]].add(g);
                }
        }
        // advance odometer
        std::size_t j = 0;
        while (j < m && ++ell[j] == L) ell[j++] = 0;
        if (j == m) break;
    }

    EStepResult out;
    double log_z = total.value();
    out.log_likelihood = log_z;
    out.stabilized_denominator = std::exp(log_z - log_max);
    out.z_hat = Matrix(n, K);
    out.v_hat = Matrix(m, L);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < K; ++k)
            out.z_hat(i, k) = std::exp(z_acc[i * K + k].value() - log_z);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t l = 0; l < L; ++l)
            out.v_hat(j, l) = std::exp(v_acc[j * L + l].value() - log_z);
    normalize_rows(out.z_hat);
    normalize_rows(out.v_hat);
    if (want_joint) {
        out.joint = Tensor4(n, m, K, L);
        out.has_joint = true;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                double cell = 0.0;
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t l = 0; l < L; ++l)
                        cell += out.joint(i, j, k, l) =
                            std::exp(j_acc[((i * m + j) * K + k) * L + l].value() - log_z);
                if (cell > 0.0)
                    for (std::size_t k = 0; k < K; ++k)
                        for (std::size_t l = 0; l < L; ++l) out.joint(i, j, k, l) /= cell;
            }
    }
    return out;
}

} // namespace

MixtureParams MixtureParams::single(double mean, double var) {
    MixtureParams p;
    p.K = 1;
    p.L = 1;
    p.tau = {1.0};
    p.omega = {1.0};
    p.mu = Matrix(1, 1, mean);
    p.sigma2 = Matrix(1, 1, var);
    return p;
}

CellPosterior conditional_posterior(double t, double sum_y, double plug_var,
                                    double prior_mean, double prior_var) {
    if (!(plug_var > 0.0) || !(prior_var > 0.0))
        throw std::domain_error("conditional_posterior: variances must be positive");
    double precision = t / plug_var + 1.0 / prior_var;
    double variance = 1.0 / precision;
    double mean = variance * (sum_y / plug_var + prior_mean / prior_var);
    return {mean, variance};
}

double log_evidence(double t, double sum_y, double sum_ysq, double plug_var,
                    double prior_mean, double prior_var) {
    if (!(plug_var > 0.0) || !(prior_var > 0.0))
        throw std::domain_error("log_evidence: variances must be positive");
    if (t == 0.0) return 0.0;
    auto post = conditional_posterior(t, sum_y, plug_var, prior_mean, prior_var);
    return -0.5 * t * (kLog2Pi + std::log(plug_var)) +
           0.5 * std::log(post.variance / prior_var) +
           0.5 * (post.mean * post.mean / post.variance - sum_ysq / plug_var -
                  prior_mean * prior_mean / prior_var);
}

Tensor4 build_log_evidence(const SamplingState& state, const PlugInVariance& plug,
                           const MixtureParams& params) {
    const std::size_t n = state.n(), m = state.m();
    Tensor4 out(n, m, params.K, params.L);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < params.K; ++k)
                for (std::size_t l = 0; l < params.L; ++l)
                    out(i, j, k, l) =
                        log_evidence(state.counts(i, j), state.sums(i, j), state.sumsq(i, j),
                                     plug(i, j), params.mu(k, l), params.sigma2(k, l));
    return out;
}

EStepResult e_step_exact(const Tensor4& log_c, const std::vector<double>& tau,
                         const std::vector<double>& omega, double enum_budget,
                         bool want_joint) {
    const double n = static_cast<double>(log_c.n()), m = static_cast<double>(log_c.m());
    const double K = static_cast<double>(log_c.K()), L = static_cast<double>(log_c.L());
    double cost_ctx = n * K * m * std::pow(L, m);
    double cost_des = m * L * n * std::pow(K, n);
    if (std::min(cost_ctx, cost_des) > enum_budget)
        throw EnumerationBudgetExceeded("exact E-step enumeration budget exceeded");
    if (cost_ctx <= cost_des) return enum_over_columns(log_c, tau, omega, want_joint);
    EStepResult t = enum_over_columns(transpose_tensor(log_c), omega, tau, want_joint);
    std::swap(t.z_hat, t.v_hat);
    if (t.has_joint) t.joint = transpose_tensor(t.joint);
    return t;
}

EStepResult e_step_meanfield(const Tensor4& log_c, const std::vector<double>& tau,
                             const std::vector<double>& omega, const Matrix& z0,
                             const Matrix& v0, double tol, std::size_t max_sweeps) {
    const std::size_t n = log_c.n(), m = log_c.m(), K = log_c.K(), L = log_c.L();
    std::vector<double> log_tau(K), log_omega(L);
    for (std::size_t k = 0; k < K; ++k) log_tau[k] = safe_log(tau[k]);
    for (std::size_t l = 0; l < L; ++l) log_omega[l] = safe_log(omega[l]);

    Matrix z = z0, v = v0;
    normalize_rows(z);
    normalize_rows(v);
    EStepResult out;
    out.converged = false;
    std::vector<double> w(std::max(K, L));
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double wmax = kNegInf;
            for (std::size_t k = 0; k < K; ++k) {
                double acc = log_tau[k];
                for (std::size_t j = 0; j < m; ++j)
                    for (std::size_t l = 0; l < L; ++l) acc += v(j, l) * log_c(i, j, k, l);
                w[k] = acc;
                wmax = std::max(wmax, acc);
            }
            double sum = 0.0;
            for (std::size_t k = 0; k < K; ++k) sum += std::exp(w[k] - wmax);
            for (std::size_t k = 0; k < K; ++k) {
                double nz = std::exp(w[k] - wmax) / sum;
                diff = std::max(diff, std::abs(nz - z(i, k)));
                z(i, k) = nz;
            }
        }
        for (std::size_t j = 0; j < m; ++j) {
            double wmax = kNegInf;
            for (std::size_t l = 0; l < L; ++l) {
                double acc = log_omega[l];
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < K; ++k) acc += z(i, k) * log_c(i, j, k, l);
                w[l] = acc;
                wmax = std::max(wmax, acc);
            }
            double sum = 0.0;
            for (std::size_t l = 0; l < L; ++l) sum += std::exp(w[l] - wmax);
            for (std::size_t l = 0; l < L; ++l) {
                double nv = std::exp(w[l] - wmax) / sum;
                diff = std::max(diff, std::abs(nv - v(j, l)));
                v(j, l) = nv;
            }
        }
        if (diff < tol) {
            out.converged = true;
            break;
        }
    }

    // Variational lower bound on the observed-data log-likelihood.
    double elbo = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < K; ++k)
            if (z(i, k) > 0.0) elbo += z(i, k) * (log_tau[k] - std::log(z(i, k)));
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t l = 0; l < L; ++l)
            if (v(j, l) > 0.0) elbo += v(j, l) * (log_omega[l] - std::log(v(j, l)));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t l = 0; l < L; ++l) {
                    double zw = z(i, k) * v(j, l);
                    if (zw > 0.0) elbo += zw * log_c(i, j, k, l);
                }
    out.z_hat = std::move(z);
    out.v_hat = std::move(v);
    out.log_likelihood = elbo;
    return out;
}

MixtureParams m_step(const Matrix& z_hat, const Matrix& v_hat, const Tensor4& cond_mean,
                     const Tensor4& cond_var, double var_floor, EmptyClusterPolicy on_empty,
                     const Tensor4* joint) {
    const std::size_t n = z_hat.rows(), K = z_hat.cols();
    const std::size_t m = v_hat.rows(), L = v_hat.cols();
    auto membership = [&](std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return joint ? (*joint)(i, j, k, l) : z_hat(i, k) * v_hat(j, l);
    };
    MixtureParams p;
    p.K = K;
    p.L = L;
    p.tau.assign(K, 0.0);
    p.omega.assign(L, 0.0);
    p.mu = Matrix(K, L);
    p.sigma2 = Matrix(K, L);

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < K; ++k) p.tau[k] += z_hat(i, k) / n;
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t l = 0; l < L; ++l) p.omega[l] += v_hat(j, l) / m;

    Matrix weight(K, L);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t l = 0; l < L; ++l) {
            double w = 0.0, wm = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    double zw = membership(i, j, k, l);
                    w += zw;
                    wm += zw * cond_mean(i, j, k, l);
                }
            weight(k, l) = w;
            if (w >= 1e-12) p.mu(k, l) = wm / w;
        }
    }

    bool any_empty = false;
    double nonempty_var_sum = 0.0;
    std::size_t nonempty = 0;
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t l = 0; l < L; ++l) {
            if (weight(k, l) < 1e-12) {
                any_empty = true;
                continue;
            }
            double ws = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    double zw = membership(i, j, k, l);
                    if (zw == 0.0) continue;
                    double dm = cond_mean(i, j, k, l) - p.mu(k, l);
                    ws += zw * (cond_var(i, j, k, l) + dm * dm);
                }
            p.sigma2(k, l) = std::max(ws / weight(k, l), var_floor);
            nonempty_var_sum += p.sigma2(k, l);
            ++nonempty;
        }
    }

    if (any_empty) {
        if (on_empty == EmptyClusterPolicy::Throw)
            throw EmptyClusterError("m_step: empty cluster pair");
        // Re-seed each empty pair at the cell with the lowest responsibility
        // mass, and keep mixture weights away from exact zero.
        double fallback_var = nonempty ? nonempty_var_sum / nonempty : std::max(var_floor, 1.0);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t l = 0; l < L; ++l) {
                if (weight(k, l) >= 1e-12) continue;
                std::size_t bi = 0, bj = 0;
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        double mass = 0.0;
                        for (std::size_t kk = 0; kk < K; ++kk)
                            for (std::size_t ll = 0; ll < L; ++ll)
                                mass = std::max(mass, z_hat(i, kk) * v_hat(j, ll));
                        if (mass < best) {
                            best = mass;
                            bi = i;
                            bj = j;
                        }
                    }
                p.mu(k, l) = cond_mean(bi, bj, k, l);
                p.sigma2(k, l) = std::max(fallback_var, var_floor);
            }
        double tsum = 0.0, osum = 0.0;
        for (auto& t : p.tau) tsum += (t = std::max(t, 1e-8));
        for (auto& o : p.omega) osum += (o = std::max(o, 1e-8));
        for (auto& t : p.tau) t /= tsum;
        for (auto& o : p.omega) o /= osum;
    }
    return p;
}

double default_cluster_var_floor(const SamplingState& state) {
    double sum = 0.0, sumsq = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < state.n(); ++i)
        for (std::size_t j = 0; j < state.m(); ++j) {
            if (state.counts(i, j) < 1.0) continue;
            double mean = state.sums(i, j) / state.counts(i, j);
            sum += mean;
            sumsq += mean * mean;
            ++cnt;
        }
    if (cnt == 0) return 1e-6;
    double var = sumsq / cnt - (sum / cnt) * (sum / cnt);
    return std::max(1e-6 * var, 1e-12);
}

namespace {

struct EvidenceBundle {
    Tensor4 log_c;
    Tensor4 cond_mean;
    Tensor4 cond_var;
};

EvidenceBundle build_bundle(const SamplingState& state, const PlugInVariance& plug,
                            const MixtureParams& params) {
    const std::size_t n = state.n(), m = state.m(), K = params.K, L = params.L;
    EvidenceBundle b{Tensor4(n, m, K, L), Tensor4(n, m, K, L), Tensor4(n, m, K, L)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t l = 0; l < L; ++l) {
                    auto post = conditional_posterior(state.counts(i, j), state.sums(i, j),
                                                      plug(i, j), params.mu(k, l),
                                                      params.sigma2(k, l));
                    b.cond_mean(i, j, k, l) = post.mean;
                    b.cond_var(i, j, k, l) = post.variance;
                    b.log_c(i, j, k, l) =
                        log_evidence(state.counts(i, j), state.sums(i, j), state.sumsq(i, j),
                                     plug(i, j), params.mu(k, l), params.sigma2(k, l));
                }
    return b;
}

EmResult run_em_core(const SamplingState& state, const PlugInVariance& plug,
                     const MixtureParams& init, const Matrix* warm_z, const Matrix* warm_v,
                     const EmOptions& opts, std::size_t max_iter) {
    const std::size_t n = state.n(), m = state.m(), K = init.K, L = init.L;
    double floor = opts.cluster_var_floor > 0.0 ? opts.cluster_var_floor
                                                : default_cluster_var_floor(state);
    double cost_ctx = double(n) * K * m * std::pow(double(L), double(m));
    double cost_des = double(m) * L * n * std::pow(double(K), double(n));
    bool exact = std::min(cost_ctx, cost_des) <= opts.enum_budget;

    MixtureParams params = init;
    Matrix z = warm_z ? *warm_z : Matrix(n, K, 1.0 / K);
    Matrix v = warm_v ? *warm_v : Matrix(m, L, 1.0 / L);

    EmResult res;
    res.exact_backend = exact;
    double prev_ll = kNegInf;
    for (std::size_t iter = 1; iter <= max_iter; ++iter) {
        EvidenceBundle b = build_bundle(state, plug, params);
        EStepResult e = exact ? e_step_exact(b.log_c, params.tau, params.omega,
                                             opts.enum_budget, /*want_joint=*/true)
                              : e_step_meanfield(b.log_c, params.tau, params.omega, z, v);
        res.iterations = iter;
        res.log_likelihood_trace.push_back(e.log_likelihood);
        res.posterior.z_hat = e.z_hat;
        res.posterior.v_hat = e.v_hat;
        res.posterior.cond_mean = std::move(b.cond_mean);
        res.posterior.cond_var = std::move(b.cond_var);
        res.posterior.params = params;
        res.posterior.exact_backend = exact;
        res.posterior.meanfield_converged = e.converged;
        res.posterior.stabilized_denominator = e.stabilized_denominator;
        res.params = params;
        res.log_likelihood = e.log_likelihood;
        if (e.log_likelihood - prev_ll < opts.tol && iter > 1) break;
        prev_ll = e.log_likelihood;
        if (iter == max_iter) break;
        params = m_step(e.z_hat, e.v_hat, res.posterior.cond_mean, res.posterior.cond_var,
                        floor, EmptyClusterPolicy::Reseed,
                        e.has_joint ? &e.joint : nullptr);
        z = e.z_hat;
        v = e.v_hat;
    }
    return res;
}

} // namespace

EmResult run_em(const SamplingState& state, const PlugInVariance& plug,
                const MixtureParams& init, const EmOptions& opts) {
    return run_em_core(state, plug, init, nullptr, nullptr, opts, opts.max_iter);
}

EmResult refresh_em(const SamplingState& state, const PlugInVariance& plug,
                    const PosteriorState& prev, std::size_t max_iter, const EmOptions& opts) {
    return run_em_core(state, plug, prev.params, &prev.z_hat, &prev.v_hat, opts,
                       std::max<std::size_t>(max_iter, 1));
}

namespace {

Matrix cell_means(const SamplingState& state) {
    Matrix ybar(state.n(), state.m());
    for (std::size_t i = 0; i < state.n(); ++i)
        for (std::size_t j = 0; j < state.m(); ++j)
            ybar(i, j) = state.counts(i, j) >= 1.0 ? state.sums(i, j) / state.counts(i, j) : 0.0;
    return ybar;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// k-means with k-means++ seeding; returns hard assignments.
std::vector<std::size_t> kmeans_assign(const std::vector<std::vector<double>>& pts,
                                       std::size_t k, Rng& rng) {
    const std::size_t np = pts.size();
    std::vector<std::vector<double>> centers;
    centers.push_back(pts[rng.below(np)]);
    std::vector<double> d2(np);
    while (centers.size() < k) {
        double sum = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, sq_dist(pts[p], c));
            d2[p] = best;
            sum += best;
        }
        if (sum <= 0.0) {
            centers.push_back(pts[rng.below(np)]);
            continue;
        }
        double pick = rng.uniform() * sum;
        std::size_t chosen = np - 1;
        double acc = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            acc += d2[p];
            if (acc >= pick) {
                chosen = p;
                break;
            }
        }
        centers.push_back(pts[chosen]);
    }

    std::vector<std::size_t> assign(np, 0);
    for (int iter = 0; iter < 25; ++iter) {
        bool changed = false;
        for (std::size_t p = 0; p < np; ++p) {
            std::size_t best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                double d = sq_dist(pts[p], centers[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (assign[p] != best) {
                assign[p] = best;
                changed = true;
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> mean(pts[0].size(), 0.0);
            std::size_t cnt = 0;
            for (std::size_t p = 0; p < np; ++p)
                if (assign[p] == c) {
                    ++cnt;
                    for (std::size_t q = 0; q < mean.size(); ++q) mean[q] += pts[p][q];
                }
            if (cnt) {
                for (auto& x : mean) x /= cnt;
                centers[c] = std::move(mean);
            } else {
                // move the empty center onto the farthest point
                std::size_t far = 0;
                double fd = -1.0;
                for (std::size_t p = 0; p < np; ++p) {
                    double d = sq_dist(pts[p], centers[assign[p]]);
                    if (d > fd) {
                        fd = d;
                        far = p;
                    }
                }
                centers[c] = pts[far];
                assign[far] = c;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return assign;
}

MixtureParams params_from_assignment(const Matrix& ybar,
                                     const std::vector<std::size_t>& row_cluster,
                                     const std::vector<std::size_t>& col_cluster,
                                     std::size_t K, std::size_t L, double var_floor) {
    const std::size_t n = ybar.rows(), m = ybar.cols();
    MixtureParams p;
    p.K = K;
    p.L = L;
    p.tau.assign(K, 0.0);
    p.omega.assign(L, 0.0);
    p.mu = Matrix(K, L);
    p.sigma2 = Matrix(K, L);

    double gsum = 0.0, gsumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            gsum += ybar(i, j);
            gsumsq += ybar(i, j) * ybar(i, j);
        }
    double gmean = gsum / (n * m);
    double gvar = std::max(gsumsq / (n * m) - gmean * gmean, 1e-6);

    for (std::size_t i = 0; i < n; ++i) p.tau[row_cluster[i]] += 1.0 / n;
    for (std::size_t j = 0; j < m; ++j) p.omega[col_cluster[j]] += 1.0 / m;
    double tsum = 0.0, osum = 0.0;
    for (auto& t : p.tau) tsum += (t = std::max(t, 1e-3));
    for (auto& o : p.omega) osum += (o = std::max(o, 1e-3));
    for (auto& t : p.tau) t /= tsum;
    for (auto& o : p.omega) o /= osum;

    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = 0; l < L; ++l) {
            double s = 0.0, ss = 0.0;
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    if (row_cluster[i] == k && col_cluster[j] == l) {
                        s += ybar(i, j);
                        ss += ybar(i, j) * ybar(i, j);
                        ++cnt;
                    }
            if (cnt) {
                double mean = s / cnt;
                p.mu(k, l) = mean;
                p.sigma2(k, l) =
                    std::max({ss / cnt - mean * mean, 0.05 * gvar, var_floor});
            } else {
                p.mu(k, l) = gmean;
                p.sigma2(k, l) = std::max(gvar, var_floor);
            }
        }
    return p;
}

} // namespace

MixtureParams init_kmeans(const SamplingState& state, std::size_t K, std::size_t L, Rng& rng,
                          double var_floor) {
    Matrix ybar = cell_means(state);
    const std::size_t n = state.n(), m = state.m();
    std::vector<std::vector<double>> rows(n, std::vector<double>(m));
    std::vector<std::vector<double>> cols(m, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            rows[i][j] = ybar(i, j);
            cols[j][i] = ybar(i, j);
        }
    auto rc = K > 1 ? kmeans_assign(rows, K, rng) : std::vector<std::size_t>(n, 0);
    auto cc = L > 1 ? kmeans_assign(cols, L, rng) : std::vector<std::size_t>(m, 0);
    return params_from_assignment(ybar, rc, cc, K, L, var_floor);
}

MixtureParams init_random(const SamplingState& state, std::size_t K, std::size_t L, Rng& rng,
                          double var_floor) {
    Matrix ybar = cell_means(state);
    const std::size_t n = state.n(), m = state.m();
    std::vector<std::size_t> rc(n), cc(m);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < n; ++i) rc[perm[i]] = i % K;
    perm.resize(m);
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t j = m; j > 1; --j) std::swap(perm[j - 1], perm[rng.below(j)]);
    for (std::size_t j = 0; j < m; ++j) cc[perm[j]] = j % L;
    return params_from_assignment(ybar, rc, cc, K, L, var_floor);
}

BicResult bic_select(const SamplingState& state, const PlugInVariance& plug, std::size_t k_max,
                     std::size_t l_max, std::size_t restarts, Rng& rng, const EmOptions& opts) {
    EmOptions local = opts;
    if (local.cluster_var_floor <= 0.0)
        local.cluster_var_floor = default_cluster_var_floor(state);
    const double log_nm = std::log(double(state.n() * state.m()));

    BicResult best;
    bool have = false;
    for (std::size_t K = 1; K <= k_max; ++K) {
        for (std::size_t L = 1; L <= l_max; ++L) {
            EmResult fit = run_em(state, plug, init_kmeans(state, K, L, rng,
                                                           local.cluster_var_floor),
                                  local);
            for (std::size_t r = 0; r < restarts; ++r) {
                EmResult alt = run_em(state, plug, init_random(state, K, L, rng,
                                                               local.cluster_var_floor),
                                      local);
                if (alt.log_likelihood > fit.log_likelihood) fit = std::move(alt);
            }
            double penalty = double(2 * K * L + K + L) * log_nm;
            double bic = 2.0 * fit.log_likelihood - penalty;
            if (!have || bic > best.bic) {
                have = true;
                best.K = K;
                best.L = L;
                best.bic = bic;
                best.params = fit.params;
                best.fit = std::move(fit);
            }
        }
    }
    return best;
}

LimitEmResult limit_em(const Matrix& true_means, const MixtureParams& init,
                       const EmOptions& opts) {
    const std::size_t n = true_means.rows(), m = true_means.cols();
    const std::size_t K = init.K, L = init.L;

    double gsum = 0.0, gsumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            gsum += true_means(i, j);
            gsumsq += true_means(i, j) * true_means(i, j);
        }
    double gmean = gsum / (n * m);
    double gvar = std::max(gsumsq / (n * m) - gmean * gmean, 1e-12);
    double floor = opts.cluster_var_floor > 0.0 ? opts.cluster_var_floor : 1e-6 * gvar;

    MixtureParams params = init;
    Tensor4 cond_mean(n, m, K, L), cond_var(n, m, K, L);
    LimitEmResult res;
    double prev_ll = kNegInf;
    for (std::size_t iter = 1; iter <= opts.max_iter; ++iter) {
        Tensor4 log_c(n, m, K, L);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t l = 0; l < L; ++l) {
                        double d = true_means(i, j) - params.mu(k, l);
                        log_c(i, j, k, l) = -0.5 * (kLog2Pi + std::log(params.sigma2(k, l))) -
                                            d * d / (2.0 * params.sigma2(k, l));
                        cond_mean(i, j, k, l) = true_means(i, j);
                        cond_var(i, j, k, l) = 0.0;
                    }
        EStepResult e = e_step_exact(log_c, params.tau, params.omega, opts.enum_budget,
                                     /*want_joint=*/true);
        res.z_hat = e.z_hat;
        res.v_hat = e.v_hat;
        res.params = params;
        res.log_likelihood = e.log_likelihood;
        if (e.log_likelihood - prev_ll < opts.tol && iter > 1) break;
        prev_ll = e.log_likelihood;
        params = m_step(e.z_hat, e.v_hat, cond_mean, cond_var, floor,
                        EmptyClusterPolicy::Reseed, &e.joint);
    }
    return res;
}

std::string MixtureParams::to_json() const {
    nlohmann::ordered_json doc;
    doc["K"] = K;
    doc["L"] = L;
    doc["tau"] = tau;
    doc["omega"] = omega;
    auto mat = [](const Matrix& a) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < a.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    doc["mu"] = mat(mu);
    doc["sigma2"] = mat(sigma2);
    return doc.dump(2);
}

std::string PosteriorState::to_json() const {
    nlohmann::ordered_json doc;
    auto mat = [](const Matrix& a) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < a.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    doc["z_hat"] = mat(z_hat);
    doc["v_hat"] = mat(v_hat);
    return doc.dump(2);
}

} // namespace ctxrs
