#pragma once

// Reference computations that share no code with the library: full N x N
// covariance assembly for the likelihood, and a closed-form one-way
// random-intercept likelihood searched by grid and golden section.

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmmci/data.hpp"
#include "lmmci/formula.hpp"

namespace oracle {

inline constexpr double kLog2Pi = 1.8378770664093454836;

struct Stacked {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    Eigen::MatrixXd V;
};

inline Stacked stack(const lmmci::LongitudinalDataset& data, const Eigen::MatrixXd& sigma, double sigma_e) {
    Eigen::Index rows = 0;
    for (const auto& c : data.clusters) rows += c.y.size();
    Stacked s;
    s.X = Eigen::MatrixXd::Zero(rows, data.p());
    s.y = Eigen::VectorXd::Zero(rows);
    s.V = Eigen::MatrixXd::Zero(rows, rows);
    Eigen::Index at = 0;
    for (const auto& c : data.clusters) {
        const Eigen::Index J = c.y.size();
        s.X.middleRows(at, J) = c.X;
        s.y.segment(at, J) = c.y;
        for (Eigen::Index a = 0; a < J; ++a) {
            for (Eigen::Index b = 0; b < J; ++b) {
                double v = 0.0;
                for (Eigen::Index k = 0; k < c.Z.cols(); ++k)
                    for (Eigen::Index l = 0; l < c.Z.cols(); ++l) v += c.Z(a, k) * sigma(k, l) * c.Z(b, l);
                s.V(at + a, at + b) = v + (a == b ? sigma_e * sigma_e : 0.0);
            }
        }
        at += J;
    }
    return s;
}

// Gaussian log density of the stacked response, optionally restricted.
inline double loglik(const lmmci::ParameterSet& ps, const lmmci::LongitudinalDataset& data, bool restricted) {
    const Stacked s = stack(data, ps.sigma, ps.sigma_e);
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(s.V);
    const double logdet = std::log(std::abs(lu.determinant()));
    const Eigen::VectorXd r = s.y - s.X * ps.gamma;
    const double N = static_cast<double>(s.y.size());
    double ll = -0.5 * (N * kLog2Pi + logdet + r.dot(lu.solve(r)));
    if (restricted) {
        const Eigen::MatrixXd info = s.X.transpose() * lu.solve(s.X);
        ll += -0.5 * std::log(info.determinant()) + 0.5 * static_cast<double>(s.X.cols()) * kLog2Pi;
    }
    return ll;
}

inline Eigen::VectorXd gls(const lmmci::LongitudinalDataset& data, const Eigen::MatrixXd& sigma, double sigma_e) {
    const Stacked s = stack(data, sigma, sigma_e);
    const Eigen::MatrixXd Vinv = s.V.inverse();
    return (s.X.transpose() * Vinv * s.X).inverse() * (s.X.transpose() * Vinv * s.y);
}

inline double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d; d = c; fd = fc;
            c = b - g * (b - a); fc = f(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + g * (b - a); fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

struct OneWayFit {
    double mean;
    double sd_between;
    double sd_within;
};

// Balanced one-way layout: y[i][j], n clusters of J observations each.
// -2 log L depends on the data only through the within and between sums of
// squares; the mean is the grand mean for every variance pair.
inline double oneway_neg2ll(const std::vector<std::vector<double>>& y, double sd_b, double sd_e) {
    const double n = static_cast<double>(y.size());
    const double J = static_cast<double>(y.front().size());
    double grand = 0.0;
    for (const auto& row : y) for (double v : row) grand += v;
    grand /= n * J;
    double ssw = 0.0, ssb = 0.0;
    for (const auto& row : y) {
        double m = 0.0;
        for (double v : row) m += v;
        m /= J;
        for (double v : row) ssw += (v - m) * (v - m);
        ssb += J * (m - grand) * (m - grand);
    }
    const double s2 = sd_e * sd_e;
    const double lambda = s2 + J * sd_b * sd_b;
    return n * J * kLog2Pi + n * (J - 1.0) * std::log(s2) + n * std::log(lambda) + ssw / s2 + ssb / lambda;
}

inline OneWayFit oneway_ml(const std::vector<std::vector<double>>& y) {
    double grand = 0.0, count = 0.0, sq = 0.0;
    for (const auto& row : y) for (double v : row) { grand += v; count += 1.0; }
    grand /= count;
    for (const auto& row : y) for (double v : row) sq += (v - grand) * (v - grand);
    const double scale = std::sqrt(sq / count);

    // Coarse grid, then alternating golden-section refinements.
    double best = std::numeric_limits<double>::infinity();
    double sb = 0.0, se = scale;
    const int steps = 200;
    for (int i = 0; i <= steps; ++i) {
        for (int j = 1; j <= steps; ++j) {
            const double b = 2.0 * scale * i / steps;
            const double e = 2.0 * scale * j / steps;
            const double v = oneway_neg2ll(y, b, e);
            if (v < best) { best = v; sb = b; se = e; }
        }
    }
    const double width = 2.0 * scale / steps;
    double lo_b = std::max(0.0, sb - 2 * width), hi_b = sb + 2 * width;
    double lo_e = std::max(1e-12, se - 2 * width), hi_e = se + 2 * width;
    for (int sweep = 0; sweep < 200; ++sweep) {
        const double pb = sb, pe = se;
        sb = golden_section([&](double b) { return oneway_neg2ll(y, b, se); }, lo_b, hi_b, 1e-13 * scale);
        se = golden_section([&](double e) { return oneway_neg2ll(y, sb, e); }, lo_e, hi_e, 1e-13 * scale);
        if (std::abs(pb - sb) < 1e-12 * scale && std::abs(pe - se) < 1e-12 * scale) break;
    }
    return {grand, sb, se};
}

inline lmmci::LongitudinalDataset oneway_dataset(const std::vector<std::vector<double>>& y) {
    std::vector<std::string> ids;
    std::vector<Eigen::VectorXd> responses;
    std::vector<Eigen::MatrixXd> covariates;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ids.push_back("c" + std::to_string(i + 1));
        responses.push_back(Eigen::Map<const Eigen::VectorXd>(y[i].data(), static_cast<Eigen::Index>(y[i].size())));
        covariates.emplace_back(static_cast<Eigen::Index>(y[i].size()), 0);
    }
    return lmmci::make_dataset(lmmci::parse_formula("y ~ 1 + (1 | g)"), ids, responses, covariates);
}

// The 6 x 4 toy layout used by the recovery checks.
inline std::vector<std::vector<double>> oneway_toy() {
    return {{9.8, 11.2, 10.4, 12.1}, {14.9, 13.2, 15.8, 14.1}, {7.1, 8.9, 6.4, 8.2},
            {12.2, 10.9, 11.7, 13.5}, {10.1, 9.4, 11.8, 10.6}, {16.3, 15.1, 17.4, 15.9}};
}

// Random-slope dataset y ~ 1 + x + (1 + x | g) with uneven cluster sizes.
inline lmmci::LongitudinalDataset random_slope_dataset(std::mt19937_64& gen, std::size_t n, int min_j, int max_j,
                                                       double sd_b0, double sd_b1, double sd_e) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_int_distribution<int> size(min_j, max_j);
    std::vector<std::string> ids;
    std::vector<Eigen::VectorXd> responses;
    std::vector<Eigen::MatrixXd> covariates;
    for (std::size_t i = 0; i < n; ++i) {
        const int J = size(gen);
        const double b0 = sd_b0 * z(gen), b1 = sd_b1 * z(gen);
        Eigen::VectorXd y(J);
        Eigen::MatrixXd cov(J, 1);
        for (int j = 0; j < J; ++j) {
            const double x = j + 0.5 * z(gen);
            cov(j, 0) = x;
            y(j) = 2.0 + 0.7 * x + b0 + b1 * x + sd_e * z(gen);
        }
        ids.push_back(std::to_string(i + 1));
        responses.push_back(y);
        covariates.push_back(cov);
    }
    return lmmci::make_dataset(lmmci::parse_formula("y ~ x + (x | g)"), ids, responses, covariates);
}

}  // namespace oracle
