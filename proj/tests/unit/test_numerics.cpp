#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <vector>

#include "lmmci/error.hpp"
#include "lmmci/numerics.hpp"
#include "lmmci/random.hpp"

using namespace lmmci;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

// Known answers for Philox4x64-10 from numpy's implementation; numpy bumps
// its counter before each block, so its counter c is our counter c + 1.
TEST_CASE("philox block matches reference outputs") {
    using B = RandomStream::Block;
    CHECK(RandomStream::philox({1, 0, 0, 0}, {0, 0}) ==
          B{0x02f4ba6408e4d89bULL, 0x3dd62b0b9ca8c5b2ULL, 0x1c8667a55d902e79ULL, 0x907d7a052fd5b4dcULL});
    CHECK(RandomStream::philox({2, 0, 0, 0}, {0, 0}) ==
          B{0x809bf322883987c3ULL, 0x471128b9e807f7ddULL, 0xf250ba0dbec065b7ULL, 0xfc6ed66767a457bcULL});
    CHECK(RandomStream::philox({5, 3, 0, 0}, {42, 7}) ==
          B{0x084603dbfe56117eULL, 0x12ddef8ea477848dULL, 0x34c3e6fabab2c0faULL, 0xe62efc84c4ef97adULL});
    CHECK(RandomStream::philox({0, 1, 0, 0}, {0, 0}) ==
          B{0xe85facf8b3b067d6ULL, 0xfdbc6a61c123b5f8ULL, 0x349bde9a4b8d60c1ULL, 0x39212690df8b178aULL});
}

TEST_CASE("stream output is the block sequence for its substream") {
    RandomStream s(42, 7, 3);
    for (std::uint64_t block = 0; block < 6; ++block) {
        const auto expect = RandomStream::philox({block, 3, 0, 0}, {42, 7});
        for (int i = 0; i < 4; ++i) CHECK(s() == expect[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("uniform draws stay strictly inside (0, 1)") {
    RandomStream s(9, 1);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
    CHECK_THAT(sum / n, WithinAbs(0.5, 0.005));
}

TEST_CASE("distinct streams and seeds differ") {
    RandomStream a(1, 1), b(1, 2), c(2, 1), d(1, 1, 1);
    const auto x = a();
    CHECK(x != b());
    CHECK(x != c());
    CHECK(x != d());
}

// Reference values computed with mpmath at 30 digits.
TEST_CASE("normal cdf and quantile reference values") {
    CHECK_THAT(norm_quantile(0.975), WithinRel(1.95996398454005423552, 1e-14));
    CHECK_THAT(norm_quantile(0.75), WithinRel(0.674489750196081743, 1e-14));
    CHECK_THAT(norm_quantile(0.025), WithinRel(-1.95996398454005423552, 1e-14));
    CHECK(norm_quantile(0.5) == 0.0);
    CHECK_THAT(norm_cdf(1.0), WithinRel(0.841344746068542948585, 1e-14));
    CHECK_THAT(norm_cdf(-3.0), WithinRel(0.0013498980316300945266, 1e-13));
    CHECK_THAT(norm_cdf(-7.5), WithinRel(3.19089167291089622777e-14, 1e-12));
    CHECK(norm_quantile(0.0) == -std::numeric_limits<double>::infinity());
    CHECK(norm_quantile(1.0) == std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(norm_quantile(1.5), std::domain_error);
}

TEST_CASE("quantile inverts the cdf", "[property]") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
    for (int i = 0; i < 5000; ++i) {
        const double p = u(gen);
        const double x = norm_quantile(p);
        CHECK_THAT(norm_cdf(x), WithinRel(p, 1e-12) || WithinAbs(p, 1e-15));
    }
}

TEST_CASE("cholesky of a small matrix") {
    Eigen::Matrix2d m;
    m << 4, 2, 2, 5;
    const auto f = cholesky(m);
    Eigen::Matrix2d expect;
    expect << 2, 0, 1, 2;
    CHECK(f.lower.isApprox(expect, 1e-15));
    CHECK_FALSE(f.semidefinite);
    CHECK_THAT(f.log_determinant(), WithinRel(std::log(16.0), 1e-14));
}

TEST_CASE("cholesky flags semidefinite and rejects bad input") {
    Eigen::Matrix2d psd;
    psd << 1, 1, 1, 1;
    const auto f = cholesky(psd);
    CHECK(f.semidefinite);
    CHECK((f.lower * f.lower.transpose()).isApprox(psd, 1e-12));
    Eigen::Matrix2d neg;
    neg << 1, 2, 2, 1;
    CHECK_THROWS_AS(cholesky(neg), NumericalError);
    Eigen::Matrix2d asym;
    asym << 1, 0.5, 0, 1;
    CHECK_THROWS_AS(cholesky(asym), NumericalError);
}

TEST_CASE("cholesky reconstructs random covariance matrices", "[property]") {
    std::mt19937_64 gen(12);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> dim(1, 6);
    for (int i = 0; i < 1000; ++i) {
        const int d = dim(gen);
        Eigen::MatrixXd a(d, d + 2);
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = z(gen);
        const Eigen::MatrixXd m = a * a.transpose();
        const auto f = cholesky(m);
        CHECK((f.lower * f.lower.transpose() - m).cwiseAbs().maxCoeff() <= 1e-10 * m.cwiseAbs().maxCoeff());
        CHECK(f.lower.isLowerTriangular());
        CHECK((f.lower.diagonal().array() >= 0.0).all());
    }
}

TEST_CASE("type 7 quantiles") {
    std::vector<double> v(1000);
    for (int i = 0; i < 1000; ++i) v[static_cast<std::size_t>(i)] = 1000 - i;
    CHECK_THAT(empirical_quantile(v, 0.025), WithinRel(25.975, 1e-14));
    CHECK_THAT(empirical_quantile(v, 0.975), WithinRel(975.025, 1e-14));
    const std::vector<double> w{3.0, 1.0, 2.0};
    CHECK(empirical_quantile(w, 0.0) == 1.0);
    CHECK(empirical_quantile(w, 1.0) == 3.0);
    CHECK(empirical_quantile(w, 0.5) == 2.0);
    CHECK(empirical_quantile(w, 0.25) == 1.5);
}

TEST_CASE("quantiles are monotone in p and bounded by the sample", "[property]") {
    std::mt19937_64 gen(13);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> size(1, 60);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(static_cast<std::size_t>(size(gen)));
        for (auto& x : v) x = z(gen);
        double p1 = u(gen), p2 = u(gen);
        if (p1 > p2) std::swap(p1, p2);
        const double q1 = empirical_quantile(v, p1), q2 = empirical_quantile(v, p2);
        CHECK(q1 <= q2);
        CHECK(q1 >= *std::min_element(v.begin(), v.end()));
        CHECK(q2 <= *std::max_element(v.begin(), v.end()));
    }
}

TEST_CASE("multivariate normal draws have the requested moments") {
    Eigen::Matrix2d cov;
    cov << 4.0, -1.2, -1.2, 1.0;
    const Eigen::Vector2d mean(1.0, -2.0);
    RandomStream rng(5, 0);
    const int n = 200000;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    Eigen::Matrix2d outer = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd x = mvnormal_draw(rng, mean, cov);
        sum += x;
        outer += (x - mean) * (x - mean).transpose();
    }
    CHECK(((sum / n) - mean).cwiseAbs().maxCoeff() < 0.02);
    CHECK(((outer / n) - cov).cwiseAbs().maxCoeff() < 0.05);
}
