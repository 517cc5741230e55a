#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmmci/data.hpp"

namespace lmmci {

enum class FitMethod { ML, REML, Robust };

std::string to_string(FitMethod method);
FitMethod parse_fit_method(const std::string& text);

enum class ParameterKind { Fixed, StdDev, Correlation, Residual };

// Row labels of the reported parameter vector, e.g. "treat:time",
// "Sigma id (Intercept)", "Sigma id (Intercept) time", "Sigma Residual".
struct ParameterNames {
    std::vector<std::string> fixed;
    std::vector<std::string> random;
    std::string cluster;

    static ParameterNames of(const LongitudinalDataset& data);

    std::size_t count() const noexcept;  // K = p + q + q(q-1)/2 + 1
    std::vector<std::string> labels() const;
    std::vector<ParameterKind> kinds() const;
};

struct ReportedParameters {
    std::vector<std::string> names;
    std::vector<ParameterKind> kinds;
    std::vector<double> values;
};

// Fixed effects, random-effect SDs, correlations (i < j, row-major), residual SD.
ReportedParameters to_reported(const ParameterSet& params, const ParameterNames& names);
Eigen::VectorXd reported_values(const ParameterSet& params);

// Inverse of reported_values for PSD inputs (p fixed effects, q random effects).
ParameterSet from_reported(const Eigen::VectorXd& values, Eigen::Index p, Eigen::Index q);

struct FitResult {
    ParameterSet params;
    ParameterNames names;
    Eigen::VectorXd se_gamma;
    Eigen::MatrixXd cov_gamma;
    double loglik = 0.0;    // REML log-likelihood for REML fits, ML otherwise
    double deviance = 0.0;  // always -2 * ML log-likelihood at params
    FitMethod method = FitMethod::ML;
    bool converged = false;
    bool boundary = false;
    int n_iter = 0;
    std::optional<std::vector<double>> weights;  // per cluster, robust fits only

    ReportedParameters reported() const { return to_reported(params, names); }
};

// V_i = Z_i Sigma Z_i' + sigma_e^2 I.
Eigen::MatrixXd marginal_covariance(const ClusterBlock& block, const ParameterSet& params);

// Direct evaluation with dense V_i factorizations.  The REML variant adds
// -1/2 log det(sum X'V^-1 X) + (p/2) log(2 pi).
double log_likelihood(const ParameterSet& params, const LongitudinalDataset& data, bool restricted);

struct GlsResult {
    Eigen::VectorXd gamma;
    Eigen::MatrixXd cov_gamma;
};

// Generalized least squares for gamma given Sigma and sigma_e (gamma in
// `variance` is ignored).
GlsResult gls_fixed_effects(const LongitudinalDataset& data, const ParameterSet& variance);

struct FitOptions {
    FitMethod method = FitMethod::ML;
    // Free entries of the relative Cholesky factor (Sigma / sigma_e^2 = C C'),
    // column-major lower triangle.  Empty selects data-driven starting values.
    Eigen::VectorXd start_theta;
    int max_iter = 2000;
    int restarts = 3;
};

// ML or REML fit.  Robust fits go through fit_robust.
FitResult fit(const LongitudinalDataset& data, const FitOptions& options);
FitResult fit(const LongitudinalDataset& data, FitMethod method);

// theta <-> Sigma / sigma_e^2 conversions.
Eigen::VectorXd theta_of(const ParameterSet& params);
Eigen::MatrixXd relative_factor(const Eigen::VectorXd& theta, Eigen::Index q);

namespace detail {

// Profiled deviance over theta with per-cluster weights, evaluated from
// cluster sufficient statistics.  Clusters with identical Z'Z share their
// q x q factorization.
class ProfiledDeviance {
public:
    ProfiledDeviance(const LongitudinalDataset& data, bool restricted,
                     const std::vector<double>* weights = nullptr);

    struct Evaluation {
        double deviance;  // profiled criterion (ML or REML)
        Eigen::VectorXd gamma;
        double sigma2;
        Eigen::MatrixXd information;  // sum w X' Vtilde^-1 X, Vtilde = V / sigma2
    };

    Evaluation evaluate(const Eigen::VectorXd& theta) const;
    double operator()(const Eigen::VectorXd& theta) const { return evaluate(theta).deviance; }

    Eigen::Index p() const noexcept { return p_; }
    Eigen::Index q() const noexcept { return q_; }

private:
    struct Group {
        Eigen::MatrixXd ztz;
        double weight = 0.0;  // sum of cluster weights
        // Sums over clusters of outer products of Z'X rows, Z'X rows times
        // Z'y entries, and Z'y entry products.
        std::vector<Eigen::MatrixXd> xx;  // q*q blocks of p x p
        std::vector<Eigen::VectorXd> xy;  // q*q vectors of length p
        Eigen::MatrixXd yy;               // q x q
    };

    Eigen::Index p_;
    Eigen::Index q_;
    bool restricted_;
    double n_weighted_ = 0.0;
    Eigen::MatrixXd xtx_;
    Eigen::VectorXd xty_;
    double yty_ = 0.0;
    std::vector<Group> groups_;
};

// ML/REML fit with optional per-cluster likelihood weights.
FitResult fit_profiled(const LongitudinalDataset& data, const FitOptions& options,
                       const std::vector<double>* weights);

}  // namespace detail

}  // namespace lmmci
