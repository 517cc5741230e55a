#include "lmmci/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "lmmci/error.hpp"

namespace lmmci {

double CholeskyFactor::log_determinant() const {
    if (semidefinite) {
        return -std::numeric_limits<double>::infinity();
    }
    return 2.0 * lower.diagonal().array().log().sum();
}

bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol) {
    if (m.rows() != m.cols()) {
        return false;
    }
    const double scale = std::max(m.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

CholeskyFactor cholesky(const Eigen::MatrixXd& m) {
    if (!is_symmetric(m)) {
        throw NumericalError("cholesky: matrix is not symmetric");
    }
    const Eigen::Index n = m.rows();
    CholeskyFactor result;
    result.lower = Eigen::MatrixXd::Zero(n, n);
    if (n == 0) {
        return result;
    }
    const double tol = 1e-10 * m.diagonal().cwiseAbs().maxCoeff();
    Eigen::MatrixXd& L = result.lower;
    for (Eigen::Index j = 0; j < n; ++j) {
        double pivot = m(j, j);
        for (Eigen::Index k = 0; k < j; ++k) {
            pivot -= L(j, k) * L(j, k);
        }
        if (pivot < -tol) {
            throw NumericalError("cholesky: matrix is not positive semi-definite");
        }
        if (pivot <= tol) {
            // Zero pivot: the remaining entries of this column must vanish too.
            for (Eigen::Index i = j + 1; i < n; ++i) {
                double s = m(i, j);
                for (Eigen::Index k = 0; k < j; ++k) {
                    s -= L(i, k) * L(j, k);
                }
                if (std::abs(s) > std::sqrt(tol * std::max(std::abs(m(i, i)), tol))) {
                    throw NumericalError("cholesky: matrix is not positive semi-definite");
                }
            }
            result.semidefinite = true;
            continue;
        }
        const double d = std::sqrt(pivot);
        L(j, j) = d;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (Eigen::Index k = 0; k < j; ++k) {
                s -= L(i, k) * L(j, k);
            }
            L(i, j) = s / d;
        }
    }
    return result;
}

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

double norm_quantile(double p) {
    if (std::isnan(p) || p < 0.0 || p > 1.0) {
        throw std::domain_error("norm_quantile: probability outside [0, 1]");
    }
    if (p == 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    if (p == 1.0) {
        return std::numeric_limits<double>::infinity();
    }

    // Acklam's rational approximation (relative error < 1.2e-9).
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00, 2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Halley step on Phi(x) - p.  The upper tail is refined through the
    // complement to avoid cancellation in 1 - p.
    const double density = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    if (density > 0.0) {
        const double e = (p <= 0.5) ? norm_cdf(x) - p : (1.0 - p) - norm_cdf(-x);
        const double u = e / density;
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double normal_draw(RandomStream& rng, double mean, double sd) {
    if (sd < 0.0) {
        throw std::domain_error("normal_draw: negative standard deviation");
    }
    // Box-Muller, one variate per pair of uniforms so the stream position is a
    // simple function of the number of draws.
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    if (sd == 0.0) {
        return mean;
    }
    return mean + sd * z;
}

Eigen::VectorXd mvnormal_draw(RandomStream& rng, const Eigen::VectorXd& mean,
                              const CholeskyFactor& cov_factor) {
    const Eigen::Index q = mean.size();
    if (cov_factor.lower.rows() != q) {
        throw std::invalid_argument("mvnormal_draw: dimension mismatch");
    }
    Eigen::VectorXd z(q);
    for (Eigen::Index j = 0; j < q; ++j) {
        z(j) = normal_draw(rng, 0.0, 1.0);
    }
    return mean + cov_factor.lower.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd mvnormal_draw(RandomStream& rng, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov) {
    return mvnormal_draw(rng, mean, cholesky(cov));
}

double empirical_quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) {
        throw std::invalid_argument("empirical_quantile: empty sample");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error("empirical_quantile: probability outside [0, 1]");
    }
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = static_cast<std::size_t>(std::ceil(h));
    const double frac = h - static_cast<double>(lo);
    if (lo == hi) {
        return sorted[lo];
    }
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double empirical_quantile(std::span<const double> samples, double p) {
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return empirical_quantile_sorted(sorted, p);
}

}  // namespace lmmci
