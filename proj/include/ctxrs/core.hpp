#ifndef CTXRS_CORE_HPP
#define CTXRS_CORE_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxrs/matrix.hpp"
#include "ctxrs/rng.hpp"

namespace ctxrs {

constexpr double kVarianceFloor = 1e-8;

/// Ground-truth description of a selection problem: n designs, m contexts,
/// true mean payoffs, sampling noise, and the per-context best design.
struct ProblemInstance {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t d = 0;
    std::vector<std::vector<double>> contexts; // m vectors of dimension d
    Matrix true_means;                         // n x m
    Matrix sampling_std;                       // n x m, strictly positive
    std::vector<std::size_t> best_per_context; // length m

    /// Validates invariants and fills best_per_context. Throws on
    /// nonpositive sampling std or a tied best design in any context.
    static ProblemInstance make(std::vector<std::vector<double>> contexts,
                                Matrix true_means, Matrix sampling_std);

    std::string to_json() const;
    static ProblemInstance from_json(const std::string& text);
};

/// Per-cell sufficient statistics of all observations so far.
struct SamplingState {
    Matrix counts; // replication counts t_ij
    Matrix sums;   // running sum of draws
    Matrix sumsq;  // running sum of squared draws
    std::size_t total = 0;

    SamplingState() = default;
    SamplingState(std::size_t n, std::size_t m)
        : counts(n, m), sums(n, m), sumsq(n, m) {}

    std::size_t n() const { return counts.rows(); }
    std::size_t m() const { return counts.cols(); }

    void record(std::size_t i, std::size_t j, double y);
    double count(std::size_t i, std::size_t j) const { return counts(i, j); }
    double sample_mean(std::size_t i, std::size_t j) const;
};

/// Plug-in estimates of the sampling variances, floored below.
struct PlugInVariance {
    Matrix var; // n x m, every entry >= floor

    double operator()(std::size_t i, std::size_t j) const { return var(i, j); }
};

/// Unbiased per-cell sample variance, clamped below by `floor`.
/// Requires at least two replications in every cell.
PlugInVariance plug_in_variance(const SamplingState& state, double floor = kVarianceFloor);

/// Plug-in variances from known true sampling stds (oracle-variance mode).
PlugInVariance known_variance(const ProblemInstance& problem);

/// One draw from N(y_i(x_j), sigma_i^2(x_j)) on the supplied stream.
double simulate(const ProblemInstance& problem, std::size_t i, std::size_t j, Rng& rng);

} // namespace ctxrs

#endif
