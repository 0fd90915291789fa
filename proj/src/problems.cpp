#include "ctxrs/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ctxrs {

namespace {

constexpr std::uint64_t kExample1Tag = 0xE1;
constexpr std::uint64_t kExample2Tag = 0xE2;

ProblemInstance make_synthetic(SyntheticCase which, std::uint64_t seed, std::uint64_t tag,
                               std::size_t n, std::size_t m, std::size_t blocks,
                               double one_mean, double one_sd, double block_base,
                               double block_step, double block_sd, double sigma_lo,
                               double sigma_hi, const std::vector<double>& ctx_means) {
    Rng mean_rng = Rng::stream(seed, tag, 1);
    Rng sigma_rng = Rng::stream(seed, tag, 2);
    Rng ctx_rng = Rng::stream(seed, tag, 3);

    Matrix means(n, m);
    if (which == SyntheticCase::OneCluster) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) means(i, j) = mean_rng.normal(one_mean, one_sd);
    } else {
        // Block (bi, bj) has mean block_base + block_step * (bj * blocks + bi).
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                std::size_t bi = i * blocks / n;
                std::size_t bj = j * blocks / m;
                double center = block_base + block_step * double(bj * blocks + bi);
                means(i, j) = mean_rng.normal(center, block_sd);
            }
    }

    Matrix sigma(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) sigma(i, j) = sigma_rng.uniform(sigma_lo, sigma_hi);

    std::vector<std::vector<double>> contexts(m);
    for (std::size_t j = 0; j < m; ++j) {
        double c = which == SyntheticCase::OneCluster
                       ? ctx_means[ctx_means.size() / 2]
                       : ctx_means[j * ctx_means.size() / m];
        contexts[j] = {ctx_rng.normal(c, 1.0)};
    }
    return ProblemInstance::make(std::move(contexts), std::move(means), std::move(sigma));
}

} // namespace

ProblemInstance make_example1(SyntheticCase which, std::uint64_t seed) {
    if (which == SyntheticCase::MultiCluster) {
        // 2x2 blocks with boundaries after design 6 and context 4; block
        // means 20 (i<=6, j<=4), 40, 60, 80.
        Rng mean_rng = Rng::stream(seed, kExample1Tag, 1);
        Rng sigma_rng = Rng::stream(seed, kExample1Tag, 2);
        Rng ctx_rng = Rng::stream(seed, kExample1Tag, 3);
        Matrix means(10, 10), sigma(10, 10);
        for (std::size_t i = 0; i < 10; ++i)
            for (std::size_t j = 0; j < 10; ++j) {
                double center = j < 4 ? (i < 6 ? 20.0 : 40.0) : (i < 6 ? 60.0 : 80.0);
                means(i, j) = mean_rng.normal(center, 3.0);
                sigma(i, j) = sigma_rng.uniform(8.0, 12.0);
            }
        std::vector<std::vector<double>> contexts(10);
        for (std::size_t j = 0; j < 10; ++j)
            contexts[j] = {ctx_rng.normal(j < 4 ? 4.0 : 6.0, 1.0)};
        return ProblemInstance::make(std::move(contexts), std::move(means), std::move(sigma));
    }
    return make_synthetic(which, seed, kExample1Tag, 10, 10, 2, 50.0, 3.0, 20.0, 20.0, 3.0,
                          8.0, 12.0, {5.0});
}

ProblemInstance make_example2(SyntheticCase which, std::uint64_t seed) {
    if (which == SyntheticCase::MultiCluster)
        return make_synthetic(which, seed, kExample2Tag, 30, 30, 3, 50.0, 15.0, 10.0, 10.0,
                              1.5, 4.0, 6.0, {2.0, 5.0, 8.0});
    return make_synthetic(which, seed, kExample2Tag, 30, 30, 3, 50.0, 15.0, 10.0, 10.0, 1.5,
                          4.0, 6.0, {5.0});
}

ProblemInstance make_small_instance() {
    Matrix means(3, 2), sigma(3, 2);
    double m[3][2] = {{10.0, 8.0}, {7.0, 11.0}, {4.0, 5.0}};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            means(i, j) = m[i][j];
            sigma(i, j) = 1.0;
        }
    return ProblemInstance::make({{1.0}, {2.0}}, std::move(means), std::move(sigma));
}

ProblemInstance make_block_instance(std::size_t n, std::size_t m, std::size_t design_clusters,
                                    std::size_t context_clusters, double base, double step,
                                    double block_sd, double sigma_lo, double sigma_hi,
                                    std::uint64_t seed) {
    Rng mean_rng = Rng::stream(seed, 0xB1, 1);
    Rng sigma_rng = Rng::stream(seed, 0xB1, 2);
    Rng ctx_rng = Rng::stream(seed, 0xB1, 3);
    Matrix means(n, m), sigma(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            std::size_t bi = i * design_clusters / n;
            std::size_t bj = j * context_clusters / m;
            double center = base + step * double(bj * design_clusters + bi);
            means(i, j) = mean_rng.normal(center, block_sd);
            sigma(i, j) = sigma_rng.uniform(sigma_lo, sigma_hi);
        }
    std::vector<std::vector<double>> contexts(m);
    for (std::size_t j = 0; j < m; ++j) {
        std::size_t bj = j * context_clusters / m;
        contexts[j] = {ctx_rng.normal(2.0 + 3.0 * double(bj), 1.0)};
    }
    return ProblemInstance::make(std::move(contexts), std::move(means), std::move(sigma));
}

// ---------------------------------------------------------------------------
// Cancer-prevention chain
// ---------------------------------------------------------------------------

DrugEffect drug_params(Drug drug, double dose, double pressure) {
    if (pressure < 110.0 || pressure > 150.0)
        throw std::invalid_argument("drug_params: pressure outside [110, 150]");
    DrugEffect e;
    if (drug == Drug::Aspirin) {
        if (dose < 50.0 || dose > 150.0)
            throw std::invalid_argument("drug_params: aspirin dose outside [50, 150]");
        e.alpha = 0.5 + (dose - 75.0) * 0.003 - (pressure - 120.0) * 0.005;
        e.beta = 0.025 + (dose - 75.0) * 0.0005 - (pressure - 120.0) * 0.001;
    } else {
        if (dose < 6.0 || dose > 18.0)
            throw std::invalid_argument("drug_params: statin dose outside [6, 18]");
        e.alpha = 0.5 + (dose - 9.0) * 0.0417 - (pressure - 120.0) * 0.0025;
        e.beta = 0.04 + (dose - 9.0) * 0.01 + (pressure - 120.0) * 0.001;
    }
    // The linear maps can leave (0, 1) at range corners; clamp so the
    // resulting transition probabilities stay valid.
    e.alpha = std::clamp(e.alpha, 1e-6, 1.0 - 1e-6);
    e.beta = std::clamp(e.beta, 1e-6, 1.0 - 1e-6);
    return e;
}

double mortality(double x1) {
    if (x1 >= 85.0) throw std::invalid_argument("mortality: x1 must be below 85");
    return 1.0 / (12.0 * (85.0 - x1));
}

double resection_eligibility_factor(double x1) {
    if (x1 < 45.0 || x1 > 81.0)
        throw std::invalid_argument("resection_eligibility_factor: x1 outside [45, 81]");
    return 1.0 - (x1 - 45.0) * 0.00225;
}

double resection_eligibility(double x1, double lambda) {
    return (1.0 - lambda) * resection_eligibility_factor(x1);
}

CancerConfig CancerConfig::defaults() {
    CancerConfig c;
    c.states = {"be_on_drug", "complication", "be_off_drug", "cancer",
                "post_surgery", "ineligible", "death"};
    c.base = Matrix(kCancerStates, kCancerStates);
    // Row 0 is fully overwritten by the (alpha, beta) overlay; its base
    // values only document the structure.
    double base[kCancerStates][kCancerStates] = {
        {0.9725, 0.025, 0.0, 0.0025, 0.0, 0.0, 0.0},
        {0.0, 0.6, 0.4, 0.0, 0.0, 0.0, 0.0},
        {0.0, 0.0, 0.995, 0.005, 0.0, 0.0, 0.0},
        {0.0, 0.0, 0.0, 0.0, 0.9, 0.1, 0.0},
        {0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0},
        {0.0, 0.0, 0.0, 0.0, 0.0, 0.97, 0.03},
        {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0},
    };
    for (std::size_t r = 0; r < kCancerStates; ++r)
        for (std::size_t s = 0; s < kCancerStates; ++s) c.base(r, s) = base[r][s];
    c.notes = "Non-clinical placeholder disease-progression values; only the "
              "structure (states, reachability, absorbing death) is meaningful.";
    return c;
}

CancerConfig CancerConfig::from_json(const std::string& text) {
    auto doc = nlohmann::json::parse(text);
    CancerConfig c;
    c.states = doc.at("states").get<std::vector<std::string>>();
    if (c.states.size() != kCancerStates)
        throw std::invalid_argument("CancerConfig: expected 7 states");
    auto rows = doc.at("base");
    c.base = Matrix(kCancerStates, kCancerStates);
    for (std::size_t r = 0; r < kCancerStates; ++r)
        for (std::size_t s = 0; s < kCancerStates; ++s)
            c.base(r, s) = rows.at(r).at(s).get<double>();
    c.notes = doc.value("notes", "");
    return c;
}

std::string CancerConfig::to_json() const {
    nlohmann::ordered_json doc;
    doc["states"] = states;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < kCancerStates; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t s = 0; s < kCancerStates; ++s) row.push_back(base(r, s));
        rows.push_back(row);
    }
    doc["base"] = rows;
    doc["notes"] = notes;
    return doc.dump(2);
}

std::uint64_t CancerConfig::hash() const {
    std::uint64_t h = 0x9E3779B97F4A7C15ull;
    auto mixin = [&h](std::uint64_t v) {
        h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    };
    for (const auto& s : states)
        for (char ch : s) mixin(std::uint64_t(static_cast<unsigned char>(ch)));
    for (std::size_t r = 0; r < base.rows(); ++r)
        for (std::size_t s = 0; s < base.cols(); ++s) {
            std::uint64_t bits;
            double v = base(r, s);
            static_assert(sizeof(bits) == sizeof(v));
            std::memcpy(&bits, &v, sizeof(bits));
            mixin(bits);
        }
    return h;
}

Matrix build_transition_matrix(const CancerConfig& config, double alpha, double beta,
                               double lambda, double elig_factor) {
    if (lambda < 0.0 || lambda >= 1.0)
        throw std::invalid_argument("build_transition_matrix: lambda outside [0, 1)");
    Matrix p = config.base;

    // Parameter overlay on the disease-only rows.
    double p14 = alpha * config.base(2, 3); // drug scales the off-drug rate
    double self = 1.0 - beta - p14;
    if (self < 0.0)
        throw std::invalid_argument("build_transition_matrix: beta + alpha*P_{3,4} > 1");
    for (std::size_t s = 0; s < kCancerStates; ++s) p(0, s) = 0.0;
    p(0, 0) = self;
    p(0, 1) = beta;
    p(0, 3) = p14;
    for (std::size_t s = 0; s < kCancerStates; ++s) p(3, s) = 0.0;
    if (elig_factor < 0.0 || elig_factor > 1.0)
        throw std::invalid_argument("build_transition_matrix: eligibility outside [0, 1]");
    p(3, 4) = elig_factor;
    p(3, 5) = 1.0 - elig_factor;

    // Mortality overlay: scale each non-death row into 1 - lambda and move
    // lambda to the death column.
    for (std::size_t r = 0; r < kCancerStates; ++r) {
        if (r == kDeathState) continue;
        double sum = 0.0;
        for (std::size_t s = 0; s < kCancerStates; ++s) sum += p(r, s);
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("build_transition_matrix: base row not stochastic");
        for (std::size_t s = 0; s < kCancerStates; ++s) {
            if (p(r, s) < 0.0)
                throw std::invalid_argument("build_transition_matrix: negative entry");
            p(r, s) *= (1.0 - lambda) / sum;
        }
        p(r, kDeathState) += lambda;
    }
    for (std::size_t s = 0; s < kCancerStates; ++s) p(kDeathState, s) = 0.0;
    p(kDeathState, kDeathState) = 1.0;
    return p;
}

Matrix build_transition_matrix(const CancerConfig& config, const ChainSpec& spec) {
    DrugEffect e = drug_params(spec.drug, spec.dose, spec.x2);
    double lambda = mortality(spec.x1);
    return build_transition_matrix(config, e.alpha, e.beta, lambda,
                                   resection_eligibility_factor(spec.x1));
}

std::size_t qaly_horizon(double x1) {
    return std::size_t(12.0 * (100.0 - x1));
}

double qaly_simulate(const Matrix& transition, std::size_t horizon_months, Rng& rng) {
    static constexpr double quality[kCancerStates] = {1.0, 1.0, 1.0, 0.5,
                                                      0.5 * 0.97, 0.5, 0.0};
    std::size_t state = 0;
    double total = 0.0;
    for (std::size_t t = 0; t < horizon_months && state != kDeathState; ++t) {
        total += quality[state];
        double u = rng.uniform();
        double acc = 0.0;
        std::size_t next = kCancerStates - 1;
        for (std::size_t s = 0; s < kCancerStates; ++s) {
            acc += transition(state, s);
            if (u <= acc) {
                next = s;
                break;
            }
        }
        state = next;
    }
    return total / 12.0;
}

double qaly_simulate(const CancerConfig& config, const ChainSpec& spec, Rng& rng) {
    Matrix p = build_transition_matrix(config, spec);
    return qaly_simulate(p, qaly_horizon(spec.x1), rng);
}

std::vector<CancerDesign> cancer_design_grid() {
    std::vector<CancerDesign> designs;
    designs.reserve(40);
    for (std::size_t i = 0; i < 20; ++i)
        designs.push_back({Drug::Aspirin, 52.5 + 5.0 * double(i)});
    for (std::size_t i = 0; i < 20; ++i)
        designs.push_back({Drug::Statin, 6.2 + 0.6 * double(i)});
    return designs;
}

std::vector<std::array<double, 2>> cancer_context_grid() {
    std::vector<std::array<double, 2>> grid;
    grid.reserve(60);
    for (std::size_t a = 0; a < 10; ++a) {
        double x1 = 45.0 + 35.0 * double(a) / 9.0;
        for (std::size_t b = 0; b < 6; ++b) {
            double x2 = 110.0 + 40.0 * double(b) / 5.0;
            grid.push_back({x1, x2});
        }
    }
    return grid;
}

double cancer_sample(const CancerProblem& problem, std::size_t i, std::size_t j, Rng& rng) {
    ChainSpec spec{problem.designs[i].drug, problem.designs[i].dose,
                   problem.patients[j][0], problem.patients[j][1]};
    return qaly_simulate(problem.config, spec, rng);
}

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

} // namespace

CancerProblem make_cancer_problem(const CancerConfig& config, std::uint64_t seed,
                                  std::size_t reps_per_cell, const std::string& cache_path) {
    CancerProblem problem;
    problem.config = config;
    problem.designs = cancer_design_grid();
    problem.patients = cancer_context_grid();
    const std::size_t n = problem.designs.size(), m = problem.patients.size();

    std::uint64_t key = config.hash();
    key ^= seed * 0x2545F4914F6CDD1Dull + reps_per_cell;

    if (!cache_path.empty()) {
        std::ifstream in(cache_path);
        if (in) {
            std::stringstream buf;
            buf << in.rdbuf();
            auto doc = nlohmann::json::parse(buf.str(), nullptr, false);
            if (!doc.is_discarded() && doc.value("key", std::uint64_t(0)) == key) {
                Matrix means = json_matrix(doc.at("means"));
                Matrix stds = json_matrix(doc.at("stds"));
                problem.standard_error = json_matrix(doc.at("se"));
                std::vector<std::vector<double>> contexts(m);
                for (std::size_t j = 0; j < m; ++j)
                    contexts[j] = {problem.patients[j][0], problem.patients[j][1]};
                problem.instance =
                    ProblemInstance::make(std::move(contexts), std::move(means), std::move(stds));
                problem.resolvable = doc.at("resolvable").get<std::vector<bool>>();
                return problem;
            }
        }
    }

    Matrix means(n, m), stds(n, m);
    problem.standard_error = Matrix(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            ChainSpec spec{problem.designs[i].drug, problem.designs[i].dose,
                           problem.patients[j][0], problem.patients[j][1]};
            Matrix p = build_transition_matrix(config, spec);
            std::size_t horizon = qaly_horizon(spec.x1);
            Rng rng = Rng::stream(seed, 0xCA, i, j);
            double sum = 0.0, sumsq = 0.0;
            for (std::size_t rep = 0; rep < reps_per_cell; ++rep) {
                double y = qaly_simulate(p, horizon, rng);
                sum += y;
                sumsq += y * y;
            }
            double mean = sum / double(reps_per_cell);
            double var = std::max(
                (sumsq - double(reps_per_cell) * mean * mean) / double(reps_per_cell - 1),
                kVarianceFloor);
            means(i, j) = mean;
            stds(i, j) = std::sqrt(var);
            problem.standard_error(i, j) = std::sqrt(var / double(reps_per_cell));
        }
    }

    problem.resolvable.assign(m, true);
    for (std::size_t j = 0; j < m; ++j) {
        std::size_t b1 = 0, b2 = 1;
        if (means(b2, j) > means(b1, j)) std::swap(b1, b2);
        for (std::size_t i = 2; i < n; ++i) {
            if (means(i, j) > means(b1, j)) {
                b2 = b1;
                b1 = i;
            } else if (means(i, j) > means(b2, j)) {
                b2 = i;
            }
        }
        double gap = means(b1, j) - means(b2, j);
        double se = std::sqrt(problem.standard_error(b1, j) * problem.standard_error(b1, j) +
                              problem.standard_error(b2, j) * problem.standard_error(b2, j));
        problem.resolvable[j] = gap >= 5.0 * se;
    }

    std::vector<std::vector<double>> contexts(m);
    for (std::size_t j = 0; j < m; ++j)
        contexts[j] = {problem.patients[j][0], problem.patients[j][1]};
    Matrix means_copy = means, stds_copy = stds;
    problem.instance =
        ProblemInstance::make(std::move(contexts), std::move(means_copy), std::move(stds_copy));

    if (!cache_path.empty()) {
        nlohmann::ordered_json doc;
        doc["key"] = key;
        doc["seed"] = seed;
        doc["reps_per_cell"] = reps_per_cell;
        doc["means"] = matrix_json(means);
        doc["stds"] = matrix_json(stds);
        doc["se"] = matrix_json(problem.standard_error);
        doc["resolvable"] = problem.resolvable;
        std::ofstream out(cache_path);
        out << doc.dump(2) << "\n";
    }
    return problem;
}

} // namespace ctxrs
