#ifndef CTXRS_PROBLEMS_HPP
#define CTXRS_PROBLEMS_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxrs/core.hpp"
#include "ctxrs/matrix.hpp"
#include "ctxrs/rng.hpp"

namespace ctxrs {

enum class SyntheticCase { OneCluster, MultiCluster };

/// 10x10 synthetic benchmark. One-cluster: means ~ N(50, 3^2), contexts
/// ~ N(5, 1). Multi-cluster: 2x2 blocks with means 20/40/60/80 (SD 3),
/// noise SD ~ U(8, 12), contexts ~ N(4, 1) / N(6, 1).
ProblemInstance make_example1(SyntheticCase which, std::uint64_t seed);

/// 30x30 synthetic benchmark. One-cluster: means ~ N(50, 15^2).
/// Multi-cluster: 3x3 blocks with means 10..90 step 10 (SD 1.5), noise SD
/// ~ U(4, 6), contexts ~ N(2, 1) / N(5, 1) / N(8, 1).
ProblemInstance make_example2(SyntheticCase which, std::uint64_t seed);

/// Fixed 3-design x 2-context instance with unit noise and 3-sigma gaps;
/// design 0 is best in context 0, design 1 in context 1.
ProblemInstance make_small_instance();

/// Generic blocked synthetic instance: `design_clusters` x
/// `context_clusters` blocks with means base + step * block index (SD
/// `block_sd`), noise SD ~ U(sigma_lo, sigma_hi), 1-D contexts clustered
/// by block.
ProblemInstance make_block_instance(std::size_t n, std::size_t m, std::size_t design_clusters,
                                    std::size_t context_clusters, double base, double step,
                                    double block_sd, double sigma_lo, double sigma_hi,
                                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cancer-prevention Markov chain.
//
// States: 0 BE on drug, 1 complication, 2 BE off drug, 3 cancer,
// 4 post-surgery, 5 resection-ineligible cancer, 6 death. One step is one
// month.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kCancerStates = 7;
inline constexpr std::size_t kDeathState = 6;

enum class Drug { Aspirin, Statin };

struct DrugEffect {
    double alpha; // canceration reduction ratio P_{1,4} / P_{3,4}
    double beta;  // monthly complication probability
};

/// Linear dose-response maps for drug effect and complication rate,
/// calibrated at (aspirin, 75mg, 120mmHg) -> (0.5, 0.025) and
/// (statin, 9mg, 120mmHg) -> (0.5, 0.04). Results clamped into (0, 1);
/// throws on a dose or pressure outside the supported range.
DrugEffect drug_params(Drug drug, double dose, double pressure);

/// Monthly all-cause mortality for starting age x1 < 85, geometric with a
/// life expectancy of 85 years: 1 / (12 * (85 - x1)).
double mortality(double x1);

/// Age-dependent resection eligibility factor 1 - (x1 - 45) * 0.00225.
/// Accepts x1 in [45, 81] so the published age-81 calibration is testable.
double resection_eligibility_factor(double x1);

/// Transition probability from cancer to surgery: (1 - lambda) * factor.
double resection_eligibility(double x1, double lambda);

/// Disease-progression transition structure with the parameter-dependent
/// entries left to the overlay. Values are non-clinical placeholders.
struct CancerConfig {
    std::vector<std::string> states;
    Matrix base; // 7x7 row-stochastic disease transitions, no mortality
    std::string notes;

    static CancerConfig defaults();
    static CancerConfig from_json(const std::string& text);
    std::string to_json() const;
    std::uint64_t hash() const;
};

/// One (design, context) configuration of the chain.
struct ChainSpec {
    Drug drug = Drug::Aspirin;
    double dose = 75.0;
    double x1 = 55.0; // starting age, years
    double x2 = 120.0; // systolic pressure, mmHg
};

/// Full monthly transition matrix: parameter overlay first (complication
/// rate, drug-scaled canceration, eligibility split), then every
/// non-death row is scaled into the survival mass 1 - lambda with lambda
/// moved to the death column. Rows sum to 1 within 1e-12; death absorbs.
Matrix build_transition_matrix(const CancerConfig& config, double alpha, double beta,
                               double lambda, double elig_factor);
Matrix build_transition_matrix(const CancerConfig& config, const ChainSpec& spec);

/// One chain run from state 0 until death or `horizon_months`; returns
/// quality-adjusted life years. Monthly quality: 1 before cancer, 0.5
/// after cancer, 0.5 * 0.97 after surgery, 0 at death.
double qaly_simulate(const Matrix& transition, std::size_t horizon_months, Rng& rng);
double qaly_simulate(const CancerConfig& config, const ChainSpec& spec, Rng& rng);

/// Horizon cap used by the benchmark: 12 * (100 - x1) months.
std::size_t qaly_horizon(double x1);

struct CancerDesign {
    Drug drug;
    double dose;
};

/// The 40-design x 60-context benchmark: 20 aspirin dosages
/// {52.5, 57.5, ..., 147.5}, 20 statin dosages {6.2, 6.8, ..., 17.6},
/// contexts on a 10x6 (age x pressure) grid over [45, 80] x [110, 150].
/// Ground-truth means come from a Monte Carlo cache (no closed form).
struct CancerProblem {
    ProblemInstance instance; // MC means as truth, MC draw SD as noise SD
    std::vector<CancerDesign> designs;
    std::vector<std::array<double, 2>> patients; // (x1, x2) per context
    Matrix standard_error;                       // MC SE of each mean
    std::vector<bool> resolvable; // top-two gap >= 5x combined SE
    CancerConfig config;

    std::size_t design_of(std::size_t i) const { return i; }
};

std::vector<CancerDesign> cancer_design_grid();
std::vector<std::array<double, 2>> cancer_context_grid();

/// Builds (or loads from `cache_path`, keyed by a hash of config, seed and
/// reps) the benchmark with `reps_per_cell` chain runs per cell.
CancerProblem make_cancer_problem(const CancerConfig& config, std::uint64_t seed,
                                  std::size_t reps_per_cell = 10000,
                                  const std::string& cache_path = "");

/// One QALY draw for benchmark cell (i, j) on the supplied stream.
double cancer_sample(const CancerProblem& problem, std::size_t i, std::size_t j, Rng& rng);

} // namespace ctxrs

#endif
