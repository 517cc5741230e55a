#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lmmci/random.hpp"

namespace lmmci {

// Lower Cholesky factor of a symmetric positive semi-definite matrix.
// Pivots within 1e-10 * max|diag| of zero are treated as exact zeros and the
// factor is marked semi-definite; the corresponding column is zero.
struct CholeskyFactor {
    Eigen::MatrixXd lower;
    bool semidefinite = false;

    // 2 * sum(log L_jj); -inf when semi-definite.
    double log_determinant() const;
};

CholeskyFactor cholesky(const Eigen::MatrixXd& m);

bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol = 1e-12);

double norm_cdf(double x);

// Inverse of the standard normal CDF.  Returns -inf/+inf at p = 0/1 and
// throws std::domain_error outside [0, 1].
double norm_quantile(double p);

double normal_draw(RandomStream& rng, double mean, double sd);

Eigen::VectorXd mvnormal_draw(RandomStream& rng, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov);
Eigen::VectorXd mvnormal_draw(RandomStream& rng, const Eigen::VectorXd& mean,
                              const CholeskyFactor& cov_factor);

// Linear-interpolation quantile, h = (B - 1) p + 1 on the sorted sample
// (R's type 7).
double empirical_quantile(std::span<const double> samples, double p);
double empirical_quantile_sorted(std::span<const double> sorted, double p);

}  // namespace lmmci
