#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmmci/estimation.hpp"
#include "lmmci/random.hpp"
#include "lmmci/robust.hpp"

namespace lmmci {

enum class BootScheme { Parametric, Wild };

std::string to_string(BootScheme scheme);
BootScheme parse_boot_scheme(const std::string& text);

// Two-point law with mean 0, variance 1 and third moment 1.
inline constexpr double kMammenLow = -0.61803398874989484820;   // -(sqrt5 - 1) / 2
inline constexpr double kMammenHigh = 1.61803398874989484820;   //  (sqrt5 + 1) / 2
inline constexpr double kMammenProbLow = 0.72360679774997896964;  // (sqrt5 + 1) / (2 sqrt5)

double mammen_draw(RandomStream& rng);

struct WildPrecomputation {
    std::vector<Eigen::VectorXd> residual_adjusted;  // (1 - h)^(-1/2) * (y - X gamma)
    std::vector<Eigen::VectorXd> leverage;           // diag of X (X'X)^-1 X', sliced per cluster
};

// Leverages come from the row-stacked fixed-effects design of all clusters.
WildPrecomputation wild_precompute(const LongitudinalDataset& data, const Eigen::VectorXd& gamma_hat);

// y*_i = X_i gamma + residual_adjusted_i * w_i, one multiplier per cluster.
std::vector<Eigen::VectorXd> wild_responses(const LongitudinalDataset& data, const Eigen::VectorXd& gamma_hat,
                                            const WildPrecomputation& pre, std::span<const double> multipliers);
std::vector<Eigen::VectorXd> wild_resample(const LongitudinalDataset& data, const Eigen::VectorXd& gamma_hat,
                                           const WildPrecomputation& pre, RandomStream& rng);

// y*_i = X_i gamma + Z_i b*_i + eps*_i with b*_i ~ N(0, Sigma), eps*_i ~ N(0, sigma_e^2 I).
std::vector<Eigen::VectorXd> parametric_resample(const LongitudinalDataset& data, const ParameterSet& params,
                                                 RandomStream& rng);

struct BootstrapOptions {
    std::size_t replicates = 5000;
    BootScheme scheme = BootScheme::Wild;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    int max_retries = 3;
    double max_failure_fraction = 0.1;
};

struct BootstrapRun {
    Eigen::MatrixXd estimates;  // successful replicates x K, reported scale
    std::vector<std::string> names;
    std::vector<std::size_t> replicate_ids;  // 1-based replicate index of each row
    BootScheme scheme = BootScheme::Wild;
    std::size_t requested = 0;
    std::size_t n_failed = 0;
    std::uint64_t seed = 0;
    FitMethod refit_method = FitMethod::ML;
};

// Replicate k draws from RandomStream(seed, k); retry a uses substream a.
// Every replicate is refitted by ML, started from the original fit's
// variance parameters.
BootstrapRun run_bootstrap(const FitResult& original, const LongitudinalDataset& data,
                           const BootstrapOptions& options);

// Draws and refits a single replicate; returns nullopt when every attempt fails.
std::optional<Eigen::VectorXd> bootstrap_replicate(const FitResult& original, const LongitudinalDataset& data,
                                                   const BootstrapOptions& options, std::size_t replicate,
                                                   const WildPrecomputation* wild);

struct Estimator {
    FitMethod method = FitMethod::ML;
    RobustConfig robust;
};

FitResult fit_with(const LongitudinalDataset& data, const Estimator& estimator, const Eigen::VectorXd& start_theta = {});

struct JackknifeRun {
    Eigen::MatrixXd estimates;  // n x K, row i omits cluster i
    Eigen::RowVectorXd mean_row;
    std::vector<std::string> names;
    bool failed = false;
    std::optional<std::size_t> failed_cluster;
};

JackknifeRun jackknife_run(const LongitudinalDataset& data, const Estimator& estimator, unsigned threads,
                           const Eigen::VectorXd& start_theta = {});

}  // namespace lmmci
