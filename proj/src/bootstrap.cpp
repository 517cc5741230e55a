#include "lmmci/bootstrap.hpp"

#include <cmath>
#include <sstream>

#include "lmmci/error.hpp"
#include "lmmci/numerics.hpp"
#include "lmmci/parallel.hpp"

namespace lmmci {

unsigned default_thread_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

std::string to_string(BootScheme scheme) {
    return scheme == BootScheme::Wild ? "wild" : "parametric";
}

BootScheme parse_boot_scheme(const std::string& text) {
    if (text == "wild") return BootScheme::Wild;
    if (text == "parametric") return BootScheme::Parametric;
    throw DataError("unknown bootstrap type '" + text + "' (expected wild or parametric)");
}

double mammen_draw(RandomStream& rng) {
    return rng.uniform() < kMammenProbLow ? kMammenLow : kMammenHigh;
}

WildPrecomputation wild_precompute(const LongitudinalDataset& data, const Eigen::VectorXd& gamma_hat) {
    const Eigen::MatrixXd X = data.stacked_X();
    const Eigen::LLT<Eigen::MatrixXd> llt(X.transpose() * X);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("wild bootstrap: fixed-effects design is rank deficient");
    }
    WildPrecomputation pre;
    for (const auto& c : data.clusters) {
        const Eigen::MatrixXd W = llt.matrixL().solve(c.X.transpose());
        const Eigen::VectorXd h = W.colwise().squaredNorm().transpose();
        if ((h.array() >= 1.0 - 1e-10).any()) {
            throw NumericalError("wild bootstrap: leverage of 1 in cluster '" + c.id + "'");
        }
        const Eigen::VectorXd r = c.y - c.X * gamma_hat;
        pre.residual_adjusted.push_back(r.array() / (1.0 - h.array()).sqrt());
        pre.leverage.push_back(h);
    }
    return pre;
}

std::vector<Eigen::VectorXd> wild_responses(const LongitudinalDataset& data, const Eigen::VectorXd& gamma_hat,
                                            const WildPrecomputation& pre, std::span<const double> multipliers) {
    if (multipliers.size() != data.n() || pre.residual_adjusted.size() != data.n()) {
        throw std::invalid_argument("wild_responses: one multiplier and residual vector per cluster required");
    }
    std::vector<Eigen::VectorXd> y(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        y[i] = data.clusters[i].X * gamma_hat + pre.residual_adjusted[i] * multipliers[i];
    }
    return y;
}

std::vector<Eigen::VectorXd> wild_resample(const LongitudinalDataset& data, const Eigen::VectorXd& gamma_hat,
                                           const WildPrecomputation& pre, RandomStream& rng) {
    std::vector<double> w(data.n());
    for (auto& v : w) {
        v = mammen_draw(rng);
    }
    return wild_responses(data, gamma_hat, pre, w);
}

std::vector<Eigen::VectorXd> parametric_resample(const LongitudinalDataset& data, const ParameterSet& params,
                                                 RandomStream& rng) {
    const CholeskyFactor factor = cholesky(params.sigma);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(params.sigma.rows());
    std::vector<Eigen::VectorXd> y(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto& c = data.clusters[i];
        const Eigen::VectorXd b = mvnormal_draw(rng, zero, factor);
        y[i] = c.X * params.gamma + c.Z * b;
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            y[i](j) += normal_draw(rng, 0.0, params.sigma_e);
        }
    }
    return y;
}

namespace {

Eigen::VectorXd start_of(const FitResult& fit) {
    return fit.params.sigma_e > 0.0 ? theta_of(fit.params) : Eigen::VectorXd();
}

}  // namespace

std::optional<Eigen::VectorXd> bootstrap_replicate(const FitResult& original, const LongitudinalDataset& data,
                                                   const BootstrapOptions& options, std::size_t replicate,
                                                   const WildPrecomputation* wild) {
    FitOptions refit;
    refit.method = FitMethod::ML;
    refit.start_theta = start_of(original);
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        RandomStream rng(options.seed, replicate, static_cast<std::uint64_t>(attempt));
        try {
            const auto y = options.scheme == BootScheme::Wild
                               ? wild_resample(data, original.params.gamma, *wild, rng)
                               : parametric_resample(data, original.params, rng);
            const FitResult r = fit(data.with_responses(y), refit);
            const Eigen::VectorXd values = reported_values(r.params);
            if (r.converged && values.allFinite()) {
                return values;
            }
        } catch (const NumericalError&) {
        }
    }
    return std::nullopt;
}

BootstrapRun run_bootstrap(const FitResult& original, const LongitudinalDataset& data,
                           const BootstrapOptions& options) {
    if (options.replicates < 1) {
        throw DataError("bootstrap: at least one replicate is required");
    }
    std::optional<WildPrecomputation> wild;
    if (options.scheme == BootScheme::Wild) {
        wild = wild_precompute(data, original.params.gamma);
    }
    const std::size_t B = options.replicates;
    std::vector<std::optional<Eigen::VectorXd>> rows(B);
    parallel_for(B, options.threads, [&](std::size_t i) {
        rows[i] = bootstrap_replicate(original, data, options, i + 1, wild ? &*wild : nullptr);
    });

    BootstrapRun run;
    run.names = original.names.labels();
    run.scheme = options.scheme;
    run.requested = B;
    run.seed = options.seed;
    const auto K = static_cast<Eigen::Index>(run.names.size());
    for (const auto& r : rows) {
        if (!r) {
            ++run.n_failed;
        }
    }
    if (static_cast<double>(run.n_failed) > options.max_failure_fraction * static_cast<double>(B)) {
        std::ostringstream msg;
        msg << "bootstrap: " << run.n_failed << " of " << B << " replicates failed to refit after "
            << options.max_retries << " retries each";
        throw NumericalError(msg.str());
    }
    run.estimates.resize(static_cast<Eigen::Index>(B - run.n_failed), K);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < B; ++i) {
        if (rows[i]) {
            run.estimates.row(row++) = rows[i]->transpose();
            run.replicate_ids.push_back(i + 1);
        }
    }
    return run;
}

FitResult fit_with(const LongitudinalDataset& data, const Estimator& estimator, const Eigen::VectorXd& start_theta) {
    if (estimator.method == FitMethod::Robust) {
        return fit_robust(data, estimator.robust);
    }
    FitOptions options;
    options.method = estimator.method;
    options.start_theta = start_theta;
    return fit(data, options);
}

JackknifeRun jackknife_run(const LongitudinalDataset& data, const Estimator& estimator, unsigned threads,
                           const Eigen::VectorXd& start_theta) {
    const std::size_t n = data.n();
    if (n < 3) {
        throw DataError("jackknife: at least 3 clusters are required");
    }
    std::vector<std::optional<Eigen::VectorXd>> rows(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const LongitudinalDataset reduced = data.without_cluster(i);
        // Second attempt uses data-driven starting values.
        for (int attempt = 0; attempt < 2 && !rows[i]; ++attempt) {
            try {
                const FitResult r = fit_with(reduced, estimator, attempt == 0 ? start_theta : Eigen::VectorXd());
                const Eigen::VectorXd values = reported_values(r.params);
                if (r.converged && values.allFinite()) {
                    rows[i] = values;
                }
            } catch (const NumericalError&) {
            }
        }
    });

    JackknifeRun run;
    run.names = ParameterNames::of(data).labels();
    const auto K = static_cast<Eigen::Index>(run.names.size());
    run.estimates = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), K);
    for (std::size_t i = 0; i < n; ++i) {
        if (!rows[i]) {
            run.failed = true;
            if (!run.failed_cluster) {
                run.failed_cluster = i;
            }
            continue;
        }
        run.estimates.row(static_cast<Eigen::Index>(i)) = rows[i]->transpose();
    }
    run.mean_row = run.estimates.colwise().mean();
    return run;
}

}  // namespace lmmci
