#include "ctxrs/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace ctxrs {

namespace {

Matrix json_matrix(const nlohmann::json& rows) {
    std::size_t r = rows.size(), c = r ? rows.at(0).size() : 0;
    Matrix out(r, c);
    for (std::size_t a = 0; a < r; ++a)
        for (std::size_t b = 0; b < c; ++b) out(a, b) = rows.at(a).at(b).get<double>();
    return out;
}

nlohmann::json matrix_json(const Matrix& a) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
        rows.push_back(row);
    }
    return rows;
}

struct RepOutcome {
    std::vector<std::size_t> budgets;                // one per evaluated checkpoint
    std::vector<std::vector<std::uint8_t>> correct;  // checkpoint x context
    Matrix ratios;                                   // final t_ij / t
};

RepOutcome run_rep(const ProblemInstance& problem, const ExperimentConfig& config,
                   std::size_t rep) {
    const std::size_t n = problem.n, m = problem.m;
    std::vector<Rng> streams;
    streams.reserve(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            streams.push_back(Rng::stream(config.seed, rep + 1, i, j));
    Sampler sampler = [&](std::size_t i, std::size_t j) {
        return streams[i * m + j].normal(problem.true_means(i, j), problem.sampling_std(i, j));
    };
    Rng aux = Rng::stream(config.seed, rep + 1, 0x00FFFFFFu, 1);

    Matrix known_var;
    if (config.policy_cfg.use_known_variance) {
        known_var = Matrix(n, m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j)
                known_var(i, j) = problem.sampling_std(i, j) * problem.sampling_std(i, j);
    }
    PolicyContext ctx = initialize_policy(config.policy, config.policy_cfg, n, m,
                                          problem.contexts, sampler, aux,
                                          config.policy_cfg.use_known_variance ? &known_var
                                                                               : nullptr);

    RepOutcome out;
    auto evaluate = [&]() {
        auto sel = final_selection(ctx);
        std::vector<std::uint8_t> ok(m);
        for (std::size_t j = 0; j < m; ++j)
            ok[j] = sel[j] == problem.best_per_context[j] ? 1 : 0;
        out.budgets.push_back(ctx.state.total);
        out.correct.push_back(std::move(ok));
    };

    if (config.policy == PolicyKind::Iz) {
        iz_allocate(ctx, sampler);
        evaluate();
    } else {
        for (std::size_t ck : config.checkpoints) {
            while (ctx.state.total < ck) policy_step(ctx, sampler);
            evaluate();
        }
    }

    out.ratios = Matrix(n, m);
    double total = double(ctx.state.total);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.ratios(i, j) = ctx.state.counts(i, j) / total;
    return out;
}

ExperimentRecord aggregate(const std::vector<RepOutcome>& reps, const ExperimentConfig& config,
                           std::size_t n, std::size_t m) {
    ExperimentRecord record;
    record.policy = policy_name(config.policy);
    record.problem = config.problem_name;
    record.seed = config.seed;
    record.macro_reps = config.macro_reps;

    const std::size_t R = reps.size();
    const std::size_t C = reps.empty() ? 0 : reps.front().budgets.size();
    for (std::size_t c = 0; c < C; ++c) {
        CheckpointStats stats;
        double budget_sum = 0.0;
        stats.pcs.assign(m, 0.0);
        for (const auto& rep : reps) {
            budget_sum += double(rep.budgets[c]);
            for (std::size_t j = 0; j < m; ++j) stats.pcs[j] += rep.correct[c][j];
        }
        stats.budget = std::size_t(std::llround(budget_sum / double(R)));
        stats.pcs_se.assign(m, 0.0);
        stats.pcs_w = 1.0;
        for (std::size_t j = 0; j < m; ++j) {
            double p = stats.pcs[j] / double(R);
            stats.pcs[j] = p;
            stats.pcs_se[j] = std::sqrt(p * (1.0 - p) / double(R));
            stats.pcs_w = std::min(stats.pcs_w, p);
        }
        record.checkpoints.push_back(std::move(stats));
    }

    record.mean_ratios = Matrix(n, m);
    for (const auto& rep : reps)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j)
                record.mean_ratios(i, j) += rep.ratios(i, j) / double(R);
    return record;
}

ExperimentRecord run_common(const ProblemMaker& maker, const ExperimentConfig& config) {
    if (config.macro_reps < 1) throw std::invalid_argument("macro_reps must be >= 1");
    for (std::size_t c = 1; c < config.checkpoints.size(); ++c)
        if (config.checkpoints[c] <= config.checkpoints[c - 1])
            throw std::invalid_argument("checkpoints must be strictly increasing");

    const std::size_t R = config.macro_reps;
    std::vector<RepOutcome> outcomes(R);
    std::size_t workers = std::min(resolve_workers(config.workers), R);
    std::size_t n = 0, m = 0;

    std::exception_ptr failure;
    std::mutex failure_mu;
    auto work = [&](std::size_t worker) {
        for (std::size_t rep = worker; rep < R; rep += workers) {
            try {
                ProblemInstance problem = maker(rep);
                outcomes[rep] = run_rep(problem, config, rep);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    if (workers <= 1) {
        work(0);
        workers = 1;
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    n = outcomes.front().ratios.rows();
    m = outcomes.front().ratios.cols();
    return aggregate(outcomes, config, n, m);
}

} // namespace

std::size_t resolve_workers(std::size_t requested) {
    if (const char* env = std::getenv("CTXRS_WORKERS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v > 0) return std::size_t(v);
    }
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

ExperimentRecord run_experiment(const ProblemInstance& problem, const ExperimentConfig& config) {
    return run_common([&problem](std::uint64_t) { return problem; }, config);
}

ExperimentRecord run_experiment(const ProblemMaker& maker, const ExperimentConfig& config) {
    return run_common(maker, config);
}

// ---------------------------------------------------------------------------
// Optimal-ratio oracle
// ---------------------------------------------------------------------------

namespace {

struct ContextView {
    std::size_t leader = 0;
    std::vector<std::size_t> challengers;
    std::vector<double> gap;     // leader mean minus challenger mean
    std::vector<double> var;     // challenger sampling variance
    double leader_var = 0.0;
};

ContextView context_view(const ProblemInstance& problem, std::size_t j) {
    ContextView view;
    view.leader = problem.best_per_context[j];
    view.leader_var = problem.sampling_std(view.leader, j) * problem.sampling_std(view.leader, j);
    for (std::size_t i = 0; i < problem.n; ++i) {
        if (i == view.leader) continue;
        view.challengers.push_back(i);
        view.gap.push_back(problem.true_means(view.leader, j) - problem.true_means(i, j));
        view.var.push_back(problem.sampling_std(i, j) * problem.sampling_std(i, j));
    }
    return view;
}

/// Within one context, given the shared pairwise rate G: solve the total
/// balance equation for the leader's ratio (challenger ratios follow from
/// the pairwise rate equations) and return all ratios.
void solve_context(const ContextView& view, double G, double& r_leader,
                   std::vector<double>& r_chal) {
    const std::size_t c = view.challengers.size();
    double min_gap2 = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < c; ++a)
        min_gap2 = std::min(min_gap2, view.gap[a] * view.gap[a]);
    double lb = G * view.leader_var / min_gap2; // below this a challenger ratio diverges

    auto challenger = [&](std::size_t a, double rb) {
        double denom = view.gap[a] * view.gap[a] / G - view.leader_var / rb;
        return view.var[a] / denom;
    };
    auto f = [&](double rb) {
        double lhs = rb * rb / view.leader_var;
        double rhs = 0.0;
        for (std::size_t a = 0; a < c; ++a) {
            double ra = challenger(a, rb);
            rhs += ra * ra / view.var[a];
        }
        return lhs - rhs;
    };

    double lo = lb * (1.0 + 1e-12) + 1e-300, hi = std::max(lb * 2.0, 1e-12);
    while (f(hi) < 0.0) hi *= 2.0;
    lo = std::max(lo, hi / 2.0 > lb ? hi / 2.0 : lo);
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    r_leader = 0.5 * (lo + hi);
    r_chal.resize(c);
    for (std::size_t a = 0; a < c; ++a) r_chal[a] = challenger(a, r_leader);
}

} // namespace

OptimalRatios optimal_ratio_oracle(const ProblemInstance& problem) {
    if (problem.n < 2) throw std::invalid_argument("optimal_ratio_oracle: need >= 2 designs");
    const std::size_t m = problem.m;
    std::vector<ContextView> views;
    views.reserve(m);
    for (std::size_t j = 0; j < m; ++j) views.push_back(context_view(problem, j));

    auto total_for = [&](double G) {
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double rb;
            std::vector<double> rc;
            solve_context(views[j], G, rb, rc);
            total += rb;
            for (double r : rc) total += r;
        }
        return total;
    };

    // The per-context allocation grows monotonically with the shared rate;
    // bisect on the rate until the grand total hits 1.
    double lo = 1e-18, hi = 1e-12;
    while (total_for(hi) < 1.0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (total_for(mid) < 1.0)
            lo = mid;
        else
            hi = mid;
    }
    double G = 0.5 * (lo + hi);

    OptimalRatios result;
    result.common_rate = G;
    result.r = Matrix(problem.n, m);
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        double rb;
        std::vector<double> rc;
        solve_context(views[j], G, rb, rc);
        result.r(views[j].leader, j) = rb;
        for (std::size_t a = 0; a < views[j].challengers.size(); ++a)
            result.r(views[j].challengers[a], j) = rc[a];
    }
    for (std::size_t i = 0; i < problem.n; ++i)
        for (std::size_t j = 0; j < m; ++j) sum += result.r(i, j);
    for (std::size_t i = 0; i < problem.n; ++i)
        for (std::size_t j = 0; j < m; ++j) result.r(i, j) /= sum;

    result.residual = balance_residual(problem, result.r);
    result.converged = result.residual < 1e-8;
    return result;
}

double balance_residual(const ProblemInstance& problem, const Matrix& r) {
    const std::size_t m = problem.m;
    double worst = 0.0;
    std::vector<double> context_rates;
    double rate_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        ContextView view = context_view(problem, j);
        double rb = r(view.leader, j);
        double lhs = rb * rb / view.leader_var;
        double rhs = 0.0;
        double rate_min = std::numeric_limits<double>::infinity();
        double rate_max = 0.0;
        for (std::size_t a = 0; a < view.challengers.size(); ++a) {
            double ra = r(view.challengers[a], j);
            rhs += ra * ra / view.var[a];
            double rate = view.gap[a] * view.gap[a] /
                          (view.leader_var / rb + view.var[a] / ra);
            rate_min = std::min(rate_min, rate);
            rate_max = std::max(rate_max, rate);
        }
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(lhs, 1e-300));
        worst = std::max(worst, (rate_max - rate_min) / std::max(rate_max, 1e-300));
        context_rates.push_back(0.5 * (rate_min + rate_max));
        rate_sum += context_rates.back();
    }
    double mean_rate = rate_sum / double(m);
    for (double g : context_rates)
        worst = std::max(worst, std::abs(g - mean_rate) / std::max(mean_rate, 1e-300));
    return worst;
}

// ---------------------------------------------------------------------------
// Result persistence
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

} // namespace

std::string ExperimentRecord::to_json() const {
    nlohmann::ordered_json doc;
    doc["policy"] = policy;
    doc["problem"] = problem;
    doc["seed"] = seed;
    doc["macro_reps"] = macro_reps;
    doc["checkpoints"] = nlohmann::json::array();
    for (const auto& ck : checkpoints) {
        nlohmann::ordered_json c;
        c["budget"] = ck.budget;
        c["pcs"] = ck.pcs;
        c["pcs_se"] = ck.pcs_se;
        c["pcs_w"] = ck.pcs_w;
        doc["checkpoints"].push_back(c);
    }
    doc["mean_ratios"] = matrix_json(mean_ratios);
    return doc.dump(2);
}

ExperimentRecord ExperimentRecord::from_json(const std::string& text) {
    auto doc = nlohmann::json::parse(text);
    ExperimentRecord record;
    record.policy = doc.at("policy").get<std::string>();
    record.problem = doc.at("problem").get<std::string>();
    record.seed = doc.at("seed").get<std::uint64_t>();
    record.macro_reps = doc.at("macro_reps").get<std::size_t>();
    for (const auto& c : doc.at("checkpoints")) {
        CheckpointStats ck;
        ck.budget = c.at("budget").get<std::size_t>();
        ck.pcs = c.at("pcs").get<std::vector<double>>();
        ck.pcs_se = c.at("pcs_se").get<std::vector<double>>();
        ck.pcs_w = c.at("pcs_w").get<double>();
        record.checkpoints.push_back(std::move(ck));
    }
    record.mean_ratios = json_matrix(doc.at("mean_ratios"));
    return record;
}

void write_results(const ExperimentRecord& record, const std::string& path) {
    std::ofstream csv(path);
    if (!csv) throw std::runtime_error("write_results: cannot open " + path);
    csv << "policy,problem,seed,budget,context,pcs,pcs_se,pcs_w\n";
    for (const auto& ck : record.checkpoints) {
        for (std::size_t j = 0; j < ck.pcs.size(); ++j)
            csv << record.policy << ',' << record.problem << ',' << record.seed << ','
                << ck.budget << ',' << j << ',' << fmt(ck.pcs[j]) << ','
                << fmt(ck.pcs_se[j]) << ",\n";
        csv << record.policy << ',' << record.problem << ',' << record.seed << ','
            << ck.budget << ",W,,," << fmt(ck.pcs_w) << '\n';
    }
    csv.close();

    std::ofstream json(path + ".json");
    if (!json) throw std::runtime_error("write_results: cannot open " + path + ".json");
    json << record.to_json() << "\n";
}

ExperimentRecord read_results(const std::string& path) {
    auto slurp = [](const std::string& p) {
        std::ifstream in(p);
        if (!in) throw std::runtime_error("read_results: cannot open " + p);
        std::stringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0)
        return ExperimentRecord::from_json(slurp(path));
    {
        // Prefer the JSON mirror: it carries diagnostics the CSV omits.
        std::ifstream mirror(path + ".json");
        if (mirror) {
            std::stringstream buf;
            buf << mirror.rdbuf();
            return ExperimentRecord::from_json(buf.str());
        }
    }

    std::istringstream in(slurp(path));
    std::string line;
    if (!std::getline(in, line) || line != "policy,problem,seed,budget,context,pcs,pcs_se,pcs_w")
        throw std::runtime_error("read_results: bad CSV header in " + path);
    ExperimentRecord record;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cell;
        std::stringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) cell.push_back(field);
        cell.resize(8);
        if (first) {
            record.policy = cell[0];
            record.problem = cell[1];
            record.seed = std::stoull(cell[2]);
            first = false;
        }
        std::size_t budget = std::stoull(cell[3]);
        if (record.checkpoints.empty() || record.checkpoints.back().budget != budget) {
            CheckpointStats ck;
            ck.budget = budget;
            record.checkpoints.push_back(ck);
        }
        CheckpointStats& ck = record.checkpoints.back();
        if (cell[4] == "W") {
            ck.pcs_w = std::stod(cell[7]);
        } else {
            ck.pcs.push_back(std::stod(cell[5]));
            ck.pcs_se.push_back(std::stod(cell[6]));
        }
    }
    return record;
}

} // namespace ctxrs
