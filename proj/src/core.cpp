#include "ctxrs/core.hpp"

#include <sstream>

#include "json.hpp"

namespace ctxrs {

ProblemInstance ProblemInstance::make(std::vector<std::vector<double>> contexts,
                                      Matrix true_means, Matrix sampling_std) {
    ProblemInstance p;
    p.n = true_means.rows();
    p.m = true_means.cols();
    if (p.n == 0 || p.m == 0)
        throw std::invalid_argument("problem must have at least one design and context");
    if (sampling_std.rows() != p.n || sampling_std.cols() != p.m)
        throw std::invalid_argument("sampling_std shape mismatch");
    if (contexts.size() != p.m)
        throw std::invalid_argument("context count mismatch");
    p.d = contexts.empty() ? 0 : contexts.front().size();
    for (const auto& x : contexts)
        if (x.size() != p.d)
            throw std::invalid_argument("ragged context vectors");

    for (std::size_t i = 0; i < p.n; ++i)
        for (std::size_t j = 0; j < p.m; ++j)
            if (!(sampling_std(i, j) > 0.0))
                throw std::invalid_argument("sampling std must be strictly positive");

    p.best_per_context.resize(p.m);
    for (std::size_t j = 0; j < p.m; ++j) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < p.n; ++i)
            if (true_means(i, j) > true_means(best, j)) best = i;
        for (std::size_t i = 0; i < p.n; ++i)
            if (i != best && true_means(i, j) == true_means(best, j))
                throw std::invalid_argument("tied best design in context " + std::to_string(j));
        p.best_per_context[j] = best;
    }

    p.contexts = std::move(contexts);
    p.true_means = std::move(true_means);
    p.sampling_std = std::move(sampling_std);
    return p;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& a) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& rows) {
    std::size_t n = rows.size();
    std::size_t m = n ? rows.front().size() : 0;
    Matrix a(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) a(i, j) = rows[i][j].get<double>();
    return a;
}

} // namespace

std::string ProblemInstance::to_json() const {
    nlohmann::ordered_json doc;
    doc["n"] = n;
    doc["m"] = m;
    doc["d"] = d;
    doc["contexts"] = contexts;
    doc["true_means"] = matrix_to_json(true_means);
    doc["sampling_std"] = matrix_to_json(sampling_std);
    return doc.dump(2);
}

ProblemInstance ProblemInstance::from_json(const std::string& text) {
    auto doc = nlohmann::json::parse(text);
    auto contexts = doc.at("contexts").get<std::vector<std::vector<double>>>();
    return make(std::move(contexts), matrix_from_json(doc.at("true_means")),
                matrix_from_json(doc.at("sampling_std")));
}

void SamplingState::record(std::size_t i, std::size_t j, double y) {
    if (i >= n() || j >= m()) throw std::out_of_range("record: index out of range");
    counts(i, j) += 1.0;
    sums(i, j) += y;
    sumsq(i, j) += y * y;
    ++total;
}

double SamplingState::sample_mean(std::size_t i, std::size_t j) const {
    if (i >= n() || j >= m()) throw std::out_of_range("sample_mean: index out of range");
    if (counts(i, j) < 1.0) throw std::domain_error("sample_mean: empty cell");
    return sums(i, j) / counts(i, j);
}

PlugInVariance plug_in_variance(const SamplingState& state, double floor) {
    PlugInVariance out;
    out.var = Matrix(state.n(), state.m());
    for (std::size_t i = 0; i < state.n(); ++i) {
        for (std::size_t j = 0; j < state.m(); ++j) {
            double t = state.counts(i, j);
            if (t < 2.0)
                throw std::domain_error("plug_in_variance: cell needs at least 2 replications");
            double mean = state.sums(i, j) / t;
            double v = (state.sumsq(i, j) - t * mean * mean) / (t - 1.0);
            out.var(i, j) = v > floor ? v : floor;
        }
    }
    return out;
}

PlugInVariance known_variance(const ProblemInstance& problem) {
    PlugInVariance out;
    out.var = Matrix(problem.n, problem.m);
    for (std::size_t i = 0; i < problem.n; ++i)
        for (std::size_t j = 0; j < problem.m; ++j)
            out.var(i, j) = problem.sampling_std(i, j) * problem.sampling_std(i, j);
    return out;
}

double simulate(const ProblemInstance& problem, std::size_t i, std::size_t j, Rng& rng) {
    if (i >= problem.n || j >= problem.m)
        throw std::out_of_range("simulate: index out of range");
    return rng.normal(problem.true_means(i, j), problem.sampling_std(i, j));
}

} // namespace ctxrs
