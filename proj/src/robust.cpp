#include "lmmci/robust.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lmmci/error.hpp"

namespace lmmci {

double cluster_distance(const ClusterBlock& block, const ParameterSet& params) {
    const Eigen::LLT<Eigen::MatrixXd> llt(marginal_covariance(block, params));
    if (llt.info() != Eigen::Success) {
        throw NumericalError("cluster_distance: singular marginal covariance in cluster '" + block.id + "'");
    }
    const Eigen::VectorXd r = block.y - block.X * params.gamma;
    return llt.matrixL().solve(r).norm();
}

double huber_weight(double distance, Eigen::Index cluster_size, double k) {
    if (!(distance >= 0.0)) {
        throw std::domain_error("huber_weight: distance must be non-negative");
    }
    const double cutoff = std::sqrt(static_cast<double>(cluster_size)) + k * std::numbers::sqrt2;
    return distance <= cutoff ? 1.0 : cutoff / distance;
}

FitResult fit_robust(const LongitudinalDataset& data, const RobustConfig& config) {
    if (!(config.k > 0.0) || !(config.tol > 0.0) || config.max_iter < 1) {
        throw DataError("robust: k and tol must be positive, max_iter at least 1");
    }
    if (data.n() < 2) {
        throw DataError("robust: at least 2 clusters are required");
    }

    FitOptions options;
    options.method = FitMethod::ML;
    std::vector<double> weights(data.n(), 1.0);
    FitResult current = detail::fit_profiled(data, options, nullptr);
    if (current.params.sigma_e == 0.0) {
        // Exact fit: every residual is zero, so every weight is 1.
        current.method = FitMethod::Robust;
        current.weights = weights;
        return current;
    }

    bool weights_converged = false;
    int iterations = current.n_iter;
    for (int iter = 0; iter < config.max_iter; ++iter) {
        std::vector<double> next(data.n());
        for (std::size_t i = 0; i < data.n(); ++i) {
            const auto& c = data.clusters[i];
            next[i] = huber_weight(cluster_distance(c, current.params), c.size(), config.k);
        }
        double change = 0.0;
        for (std::size_t i = 0; i < data.n(); ++i) {
            change = std::max(change, std::abs(next[i] - weights[i]));
        }
        weights = std::move(next);
        if (change < config.tol) {
            weights_converged = true;
            break;
        }
        double effective = 0.0;
        for (std::size_t i = 0; i < data.n(); ++i) {
            effective += weights[i] * static_cast<double>(data.clusters[i].size());
        }
        if (!(effective > static_cast<double>(data.p()))) {
            throw NumericalError("robust: weights vanished for (almost) every cluster");
        }
        if (current.params.sigma_e > 0.0) {
            options.start_theta = theta_of(current.params);
        }
        current = detail::fit_profiled(data, options, &weights);
        iterations += current.n_iter;
    }

    current.method = FitMethod::Robust;
    current.converged = current.converged && weights_converged;
    current.n_iter = iterations;
    current.weights = std::move(weights);
    return current;
}

}  // namespace lmmci
