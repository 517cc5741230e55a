#include <catch_amalgamated.hpp>

#include <random>

#include "lmmci/bootstrap.hpp"
#include "lmmci/data.hpp"
#include "lmmci/error.hpp"
#include "lmmci/random.hpp"
#include "oracles.hpp"

using namespace lmmci;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("two-point multiplier law has mean 0, variance 1, skewness 1") {
    CHECK(kMammenLow == -0.6180339887498948482);
    CHECK(kMammenHigh == 1.6180339887498948482);
    const double p = kMammenProbLow;
    const double mean = p * kMammenLow + (1 - p) * kMammenHigh;
    const double m2 = p * kMammenLow * kMammenLow + (1 - p) * kMammenHigh * kMammenHigh;
    const double m3 = p * std::pow(kMammenLow, 3) + (1 - p) * std::pow(kMammenHigh, 3);
    CHECK_THAT(mean, WithinAbs(0.0, 1e-15));
    CHECK_THAT(m2, WithinRel(1.0, 1e-15));
    CHECK_THAT(m3, WithinRel(1.0, 1e-15));

    RandomStream rng(3, 0);
    int low = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double w = mammen_draw(rng);
        REQUIRE((w == kMammenLow || w == kMammenHigh));
        low += w == kMammenLow ? 1 : 0;
    }
    CHECK_THAT(static_cast<double>(low) / n, WithinAbs(p, 4.0 * std::sqrt(p * (1 - p) / n)));
}

TEST_CASE("wild responses on a two-cluster toy") {
    // Intercept-only design: h = 1/N for each of N = 4 rows.
    const auto f = parse_formula("y ~ 1 + (1|g)");
    const auto d = make_dataset(f, {"a", "b"}, {Eigen::Vector2d(1, 3), Eigen::Vector2d(5, 7)},
                                {Eigen::MatrixXd(2, 0), Eigen::MatrixXd(2, 0)});
    const Eigen::VectorXd gamma = Eigen::VectorXd::Constant(1, 4.0);
    const auto pre = wild_precompute(d, gamma);
    const double s = 1.0 / std::sqrt(0.75);
    CHECK_THAT(pre.leverage[0](0), WithinRel(0.25, 1e-15));
    CHECK_THAT(pre.residual_adjusted[0](0), WithinRel(-3.0 * s, 1e-15));
    CHECK_THAT(pre.residual_adjusted[1](1), WithinRel(3.0 * s, 1e-15));
    const std::vector<double> w{kMammenLow, kMammenHigh};
    const auto y = wild_responses(d, gamma, pre, w);
    CHECK_THAT(y[0](0), WithinRel(4.0 + 3.0 * s * 0.6180339887498949, 1e-14));
    CHECK_THAT(y[1](0), WithinRel(4.0 + 1.0 * s * 1.6180339887498949, 1e-14));
}

TEST_CASE("leverages match the hat matrix and stay in [0, 1]", "[property]") {
    std::mt19937_64 gen(61);
    std::normal_distribution<double> z;
    for (int i = 0; i < 1000; ++i) {
        const auto d = oracle::random_slope_dataset(gen, std::uniform_int_distribution<std::size_t>(2, 8)(gen), 1, 5,
                                                    1.0, 0.5, 1.0);
        const Eigen::MatrixXd X = d.stacked_X();
        if (Eigen::FullPivLU<Eigen::MatrixXd>(X).rank() != X.cols()) continue;
        const Eigen::MatrixXd H = X * (X.transpose() * X).inverse() * X.transpose();
        if ((H.diagonal().array() > 1.0 - 1e-8).any()) {
            CHECK_THROWS_AS(wild_precompute(d, Eigen::Vector2d(0, 0)), NumericalError);
            continue;
        }
        const Eigen::Vector2d gamma(z(gen), z(gen));
        const auto pre = wild_precompute(d, gamma);
        Eigen::Index at = 0;
        double total = 0.0;
        std::vector<double> w(d.n());
        for (auto& v : w) v = z(gen);
        const auto y = wild_responses(d, gamma, pre, w);
        for (std::size_t c = 0; c < d.n(); ++c) {
            const auto& cl = d.clusters[c];
            for (Eigen::Index j = 0; j < cl.size(); ++j, ++at) {
                const double h = pre.leverage[c](j);
                CHECK(h >= 0.0);
                CHECK(h < 1.0);
                CHECK_THAT(h, WithinAbs(H(at, at), 1e-10));
                total += h;
                const double r = cl.y(j) - cl.X.row(j).dot(gamma);
                CHECK_THAT(y[c](j), WithinAbs(cl.X.row(j).dot(gamma) + w[c] * r / std::sqrt(1.0 - H(at, at)),
                                              1e-9 * (1.0 + std::abs(y[c](j)))));
            }
        }
        CHECK_THAT(total, WithinAbs(2.0, 1e-9));
    }
}

TEST_CASE("parametric resamples follow the fitted model") {
    RandomStream rng0(8, 0);
    const auto d = simulate_dataset(medsim_design(), rng0);
    ParameterSet ps = medsim_design().truth;
    ps.sigma.setZero();
    ps.sigma_e = 0.0;
    RandomStream rng(1, 1);
    const auto y = parametric_resample(d, ps, rng);
    for (std::size_t i = 0; i < d.n(); ++i) CHECK((y[i] - d.clusters[i].X * ps.gamma).isZero(1e-12));

    ps = medsim_design().truth;
    double sum = 0.0, sq = 0.0;
    int count = 0;
    for (std::uint64_t r = 0; r < 200; ++r) {
        RandomStream s(2, r);
        const auto yy = parametric_resample(d, ps, s);
        for (std::size_t i = 0; i < d.n(); ++i) {
            const double e = yy[i](0) - d.clusters[i].X.row(0).dot(ps.gamma);
            sum += e;
            sq += e * e;
            ++count;
        }
    }
    CHECK(std::abs(sum / count) < 4.0 * std::sqrt(3341.47 / count));
    CHECK_THAT(sq / count, WithinRel(3341.47, 0.05));
}

TEST_CASE("bootstrap runs are reproducible and thread-count independent") {
    RandomStream rng(9, 0);
    const auto d = simulate_dataset(medsim_design(), rng);
    const auto f = fit(d, FitMethod::ML);
    for (auto scheme : {BootScheme::Wild, BootScheme::Parametric}) {
        BootstrapOptions o;
        o.replicates = 40;
        o.scheme = scheme;
        o.seed = 77;
        o.threads = 1;
        const auto a = run_bootstrap(f, d, o);
        o.threads = 4;
        const auto b = run_bootstrap(f, d, o);
        REQUIRE(a.estimates.rows() == 40);
        CHECK(a.estimates.cols() == 8);
        CHECK(a.estimates == b.estimates);
        CHECK(a.replicate_ids == b.replicate_ids);
        CHECK(a.replicate_ids.front() == 1);
        // Replicate 17 does not depend on the others.
        std::optional<WildPrecomputation> pre;
        if (scheme == BootScheme::Wild) pre = wild_precompute(d, f.params.gamma);
        const auto single = bootstrap_replicate(f, d, o, 17, pre ? &*pre : nullptr);
        REQUIRE(single);
        CHECK(single->transpose() == a.estimates.row(16));
        o.seed = 78;
        CHECK(run_bootstrap(f, d, o).estimates != a.estimates);
    }
}

TEST_CASE("estimate matrix has one column per reported parameter", "[property]") {
    std::mt19937_64 gen(62);
    std::normal_distribution<double> z;
    const std::vector<std::string> formulas{"y ~ x + (1|g)", "y ~ x + (x|g)", "y ~ x * w + (1 + x + w|g)",
                                            "y ~ 0 + x + (0 + x|g)", "y ~ x + w + (0 + x + w|g)"};
    for (int i = 0; i < 1000; ++i) {
        const auto f = parse_formula(formulas[static_cast<std::size_t>(i) % formulas.size()]);
        std::vector<std::string> ids;
        std::vector<Eigen::VectorXd> ys;
        std::vector<Eigen::MatrixXd> covs;
        for (int c = 0; c < 8; ++c) {
            Eigen::MatrixXd cov(5, 2);
            Eigen::VectorXd y(5);
            const double b = z(gen);
            for (int j = 0; j < 5; ++j) {
                cov(j, 0) = j + 0.3 * z(gen);
                cov(j, 1) = z(gen);
                y(j) = 1.0 + 0.5 * cov(j, 0) + b + z(gen);
            }
            ids.push_back(std::to_string(c));
            ys.push_back(y);
            const auto names = f.covariates();
            covs.push_back(cov.leftCols(static_cast<Eigen::Index>(names.size())));
        }
        const auto d = make_dataset(f, ids, ys, covs);
        const auto fitted = fit(d, FitMethod::ML);
        BootstrapOptions o;
        o.replicates = 2;
        o.seed = static_cast<std::uint64_t>(i);
        o.scheme = i % 2 ? BootScheme::Wild : BootScheme::Parametric;
        o.max_failure_fraction = 1.0;
        const auto run = run_bootstrap(fitted, d, o);
        const auto p = d.p(), q = d.q();
        CHECK(run.estimates.cols() == p + q + q * (q - 1) / 2 + 1);
        CHECK(run.names.size() == static_cast<std::size_t>(run.estimates.cols()));
        CHECK(static_cast<std::size_t>(run.estimates.rows()) + run.n_failed == 2);
    }
}

TEST_CASE("jackknife rows are leave-one-cluster-out fits") {
    std::mt19937_64 gen(63);
    const auto d = oracle::random_slope_dataset(gen, 8, 3, 6, 1.0, 0.4, 0.8);
    const auto run = jackknife_run(d, Estimator{}, 2);
    REQUIRE_FALSE(run.failed);
    CHECK(run.estimates.rows() == 8);
    CHECK(run.estimates.cols() == 6);
    for (std::size_t i = 0; i < d.n(); i += 3) {
        const auto f = fit(d.without_cluster(i), FitMethod::ML);
        const Eigen::VectorXd v = reported_values(f.params);
        for (Eigen::Index k = 0; k < 4; ++k) {
            CHECK_THAT(run.estimates(static_cast<Eigen::Index>(i), k), WithinAbs(v(k), 1e-4 * (1.0 + std::abs(v(k)))));
        }
    }
    CHECK(run.mean_row.isApprox(run.estimates.colwise().mean(), 1e-14));
    CHECK_THROWS_AS(jackknife_run(d.without_cluster(0).without_cluster(0).without_cluster(0).without_cluster(0)
                                      .without_cluster(0).without_cluster(0),
                                  Estimator{}, 1),
                    DataError);
}
