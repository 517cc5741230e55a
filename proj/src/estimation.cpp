#include "lmmci/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lmmci/error.hpp"
#include "lmmci/numerics.hpp"
#include "lmmci/optimize.hpp"

namespace lmmci {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kBoundaryTol = 1e-8;

Eigen::Index theta_size(Eigen::Index q) { return q * (q + 1) / 2; }

bool is_diagonal_index(Eigen::Index index, Eigen::Index q) {
    Eigen::Index k = 0;
    for (Eigen::Index col = 0; col < q; ++col) {
        if (index == k) {
            return true;
        }
        k += q - col;
    }
    return false;
}

}  // namespace

std::string to_string(FitMethod method) {
    switch (method) {
        case FitMethod::ML: return "ML";
        case FitMethod::REML: return "REML";
        case FitMethod::Robust: return "ROBUST";
    }
    return "?";
}

FitMethod parse_fit_method(const std::string& text) {
    std::string lower;
    for (char c : text) {
        lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (lower == "ml") return FitMethod::ML;
    if (lower == "reml") return FitMethod::REML;
    if (lower == "robust") return FitMethod::Robust;
    throw DataError("unknown estimator '" + text + "' (expected ml, reml or robust)");
}

ParameterNames ParameterNames::of(const LongitudinalDataset& data) {
    return {data.fixed_names, data.random_names, data.cluster_var};
}

std::size_t ParameterNames::count() const noexcept {
    const std::size_t q = random.size();
    return fixed.size() + q + q * (q - 1) / 2 + 1;
}

std::vector<std::string> ParameterNames::labels() const {
    std::vector<std::string> out = fixed;
    for (const auto& r : random) {
        out.push_back("Sigma " + cluster + " " + r);
    }
    for (std::size_t i = 0; i < random.size(); ++i) {
        for (std::size_t j = i + 1; j < random.size(); ++j) {
            out.push_back("Sigma " + cluster + " " + random[i] + " " + random[j]);
        }
    }
    out.emplace_back("Sigma Residual");
    return out;
}

std::vector<ParameterKind> ParameterNames::kinds() const {
    const std::size_t q = random.size();
    std::vector<ParameterKind> out(fixed.size(), ParameterKind::Fixed);
    out.insert(out.end(), q, ParameterKind::StdDev);
    out.insert(out.end(), q * (q - 1) / 2, ParameterKind::Correlation);
    out.push_back(ParameterKind::Residual);
    return out;
}

Eigen::VectorXd reported_values(const ParameterSet& params) {
    const Eigen::Index p = params.gamma.size();
    const Eigen::Index q = params.sigma.rows();
    Eigen::VectorXd out(p + q + q * (q - 1) / 2 + 1);
    out.head(p) = params.gamma;
    Eigen::VectorXd sd(q);
    for (Eigen::Index j = 0; j < q; ++j) {
        sd(j) = std::sqrt(std::max(params.sigma(j, j), 0.0));
        out(p + j) = sd(j);
    }
    Eigen::Index k = p + q;
    for (Eigen::Index i = 0; i < q; ++i) {
        for (Eigen::Index j = i + 1; j < q; ++j) {
            const double denom = sd(i) * sd(j);
            out(k++) = denom > 0.0 ? std::clamp(params.sigma(i, j) / denom, -1.0, 1.0) : 0.0;
        }
    }
    out(k) = params.sigma_e;
    return out;
}

ReportedParameters to_reported(const ParameterSet& params, const ParameterNames& names) {
    const Eigen::VectorXd v = reported_values(params);
    ReportedParameters r;
    r.names = names.labels();
    r.kinds = names.kinds();
    r.values.assign(v.data(), v.data() + v.size());
    if (r.values.size() != r.names.size()) {
        throw std::invalid_argument("to_reported: parameter dimensions do not match names");
    }
    return r;
}

ParameterSet from_reported(const Eigen::VectorXd& values, Eigen::Index p, Eigen::Index q) {
    if (values.size() != p + q + q * (q - 1) / 2 + 1) {
        throw std::invalid_argument("from_reported: wrong vector length");
    }
    ParameterSet params;
    params.gamma = values.head(p);
    params.sigma.resize(q, q);
    const Eigen::VectorXd sd = values.segment(p, q);
    for (Eigen::Index j = 0; j < q; ++j) {
        params.sigma(j, j) = sd(j) * sd(j);
    }
    Eigen::Index k = p + q;
    for (Eigen::Index i = 0; i < q; ++i) {
        for (Eigen::Index j = i + 1; j < q; ++j) {
            params.sigma(i, j) = params.sigma(j, i) = values(k++) * sd(i) * sd(j);
        }
    }
    params.sigma_e = values(k);
    return params;
}

Eigen::MatrixXd marginal_covariance(const ClusterBlock& block, const ParameterSet& params) {
    if (block.Z.cols() != params.sigma.rows() || params.sigma.rows() != params.sigma.cols()) {
        throw std::invalid_argument("marginal_covariance: dimension mismatch");
    }
    Eigen::MatrixXd V = block.Z * params.sigma * block.Z.transpose();
    V.diagonal().array() += params.sigma_e * params.sigma_e;
    return 0.5 * (V + V.transpose());
}

double log_likelihood(const ParameterSet& params, const LongitudinalDataset& data, bool restricted) {
    const Eigen::Index p = data.p();
    double ll = 0.0;
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    for (const auto& c : data.clusters) {
        const Eigen::LLT<Eigen::MatrixXd> llt(marginal_covariance(c, params));
        if (llt.info() != Eigen::Success) {
            throw NumericalError("log_likelihood: singular marginal covariance in cluster '" + c.id + "'");
        }
        const Eigen::VectorXd r = c.y - c.X * params.gamma;
        const Eigen::VectorXd u = llt.matrixL().solve(r);
        const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        ll -= 0.5 * (static_cast<double>(c.size()) * kLog2Pi + logdet + u.squaredNorm());
        if (restricted) {
            const Eigen::MatrixXd W = llt.matrixL().solve(c.X);
            info += W.transpose() * W;
        }
    }
    if (restricted) {
        const Eigen::LLT<Eigen::MatrixXd> llt(info);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("log_likelihood: singular fixed-effects information");
        }
        ll += -0.5 * 2.0 * llt.matrixLLT().diagonal().array().log().sum() +
              0.5 * static_cast<double>(p) * kLog2Pi;
    }
    return ll;
}

GlsResult gls_fixed_effects(const LongitudinalDataset& data, const ParameterSet& variance) {
    const Eigen::Index p = data.p();
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd score = Eigen::VectorXd::Zero(p);
    for (const auto& c : data.clusters) {
        const Eigen::LLT<Eigen::MatrixXd> llt(marginal_covariance(c, variance));
        if (llt.info() != Eigen::Success) {
            throw NumericalError("gls: singular marginal covariance in cluster '" + c.id + "'");
        }
        info += c.X.transpose() * llt.solve(c.X);
        score += c.X.transpose() * llt.solve(c.y);
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (info + info.transpose()));
    if (llt.info() != Eigen::Success) {
        throw NumericalError("gls: rank-deficient fixed-effects design");
    }
    GlsResult out;
    out.gamma = llt.solve(score);
    out.cov_gamma = llt.solve(Eigen::MatrixXd::Identity(p, p));
    return out;
}

Eigen::MatrixXd relative_factor(const Eigen::VectorXd& theta, Eigen::Index q) {
    if (theta.size() != theta_size(q)) {
        throw std::invalid_argument("relative_factor: theta has the wrong length");
    }
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(q, q);
    Eigen::Index k = 0;
    for (Eigen::Index col = 0; col < q; ++col) {
        for (Eigen::Index row = col; row < q; ++row) {
            C(row, col) = theta(k++);
        }
    }
    return C;
}

Eigen::VectorXd theta_of(const ParameterSet& params) {
    const Eigen::Index q = params.sigma.rows();
    if (!(params.sigma_e > 0.0)) {
        throw NumericalError("theta_of: residual standard deviation must be positive");
    }
    const CholeskyFactor factor = cholesky(params.sigma / (params.sigma_e * params.sigma_e));
    Eigen::VectorXd theta(theta_size(q));
    Eigen::Index k = 0;
    for (Eigen::Index col = 0; col < q; ++col) {
        for (Eigen::Index row = col; row < q; ++row) {
            theta(k++) = factor.lower(row, col);
        }
    }
    return theta;
}

namespace detail {

ProfiledDeviance::ProfiledDeviance(const LongitudinalDataset& data, bool restricted,
                                   const std::vector<double>* weights)
    : p_(data.p()), q_(data.q()), restricted_(restricted) {
    if (weights != nullptr && weights->size() != data.n()) {
        throw std::invalid_argument("ProfiledDeviance: one weight per cluster required");
    }
    xtx_ = Eigen::MatrixXd::Zero(p_, p_);
    xty_ = Eigen::VectorXd::Zero(p_);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto& c = data.clusters[i];
        const double w = weights ? (*weights)[i] : 1.0;
        if (w == 0.0) {
            continue;
        }
        const Eigen::MatrixXd ztz = c.Z.transpose() * c.Z;
        const Eigen::MatrixXd ztx = c.Z.transpose() * c.X;
        const Eigen::VectorXd zty = c.Z.transpose() * c.y;
        xtx_ += w * c.X.transpose() * c.X;
        xty_ += w * c.X.transpose() * c.y;
        yty_ += w * c.y.squaredNorm();
        n_weighted_ += w * static_cast<double>(c.size());

        auto it = std::find_if(groups_.begin(), groups_.end(),
                               [&ztz](const Group& g) { return g.ztz == ztz; });
        if (it == groups_.end()) {
            Group g;
            g.ztz = ztz;
            g.xx.assign(static_cast<std::size_t>(q_ * q_), Eigen::MatrixXd::Zero(p_, p_));
            g.xy.assign(static_cast<std::size_t>(q_ * q_), Eigen::VectorXd::Zero(p_));
            g.yy = Eigen::MatrixXd::Zero(q_, q_);
            groups_.push_back(std::move(g));
            it = std::prev(groups_.end());
        }
        it->weight += w;
        for (Eigen::Index a = 0; a < q_; ++a) {
            for (Eigen::Index b = 0; b < q_; ++b) {
                const auto idx = static_cast<std::size_t>(a * q_ + b);
                it->xx[idx] += w * ztx.row(a).transpose() * ztx.row(b);
                it->xy[idx] += w * ztx.row(a).transpose() * zty(b);
            }
        }
        it->yy += w * zty * zty.transpose();
    }
}

ProfiledDeviance::Evaluation ProfiledDeviance::evaluate(const Eigen::VectorXd& theta) const {
    const Eigen::MatrixXd C = relative_factor(theta, q_);
    Eigen::MatrixXd A = xtx_;
    Eigen::VectorXd b = xty_;
    double c = yty_;
    double logdet = 0.0;
    for (const auto& g : groups_) {
        Eigen::MatrixXd M = C.transpose() * g.ztz * C;
        M.diagonal().array() += 1.0;
        const Eigen::LLT<Eigen::MatrixXd> llt(M);
        // K = C M^-1 C'
        const Eigen::MatrixXd W = llt.matrixL().solve(C.transpose());
        const Eigen::MatrixXd K = W.transpose() * W;
        logdet += g.weight * 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        for (Eigen::Index a = 0; a < q_; ++a) {
            for (Eigen::Index bb = 0; bb < q_; ++bb) {
                const double k = K(a, bb);
                if (k == 0.0) {
                    continue;
                }
                const auto idx = static_cast<std::size_t>(a * q_ + bb);
                A.noalias() -= k * g.xx[idx];
                b.noalias() -= k * g.xy[idx];
                c -= k * g.yy(a, bb);
            }
        }
    }
    A = 0.5 * (A + A.transpose());
    const Eigen::LLT<Eigen::MatrixXd> allt(A);
    Evaluation out;
    if (allt.info() != Eigen::Success) {
        out.deviance = std::numeric_limits<double>::infinity();
        out.sigma2 = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.gamma = allt.solve(b);
    const double rss = std::max(c - b.dot(out.gamma), 0.0);
    const double dof = restricted_ ? n_weighted_ - static_cast<double>(p_) : n_weighted_;
    out.sigma2 = rss / dof;
    out.deviance = dof * (1.0 + kLog2Pi + std::log(out.sigma2)) + logdet;
    if (restricted_) {
        out.deviance += 2.0 * allt.matrixLLT().diagonal().array().log().sum();
    }
    out.information = std::move(A);
    return out;
}

}  // namespace detail

namespace {

Eigen::VectorXd default_theta(Eigen::Index q) {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(theta_size(q));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        if (is_diagonal_index(i, q)) {
            t(i) = 1.0;
        }
    }
    return t;
}

// Covariance of per-cluster least-squares random-effect coefficients over
// pooled within-cluster residual variance.
Eigen::VectorXd starting_theta(const LongitudinalDataset& data) {
    const Eigen::Index q = data.q();
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.stacked_X());
    const Eigen::VectorXd gamma = qr.solve(data.stacked_y());

    std::vector<Eigen::VectorXd> coefs;
    double ss = 0.0;
    double df = 0.0;
    for (const auto& c : data.clusters) {
        if (c.size() <= q) {
            continue;
        }
        const Eigen::VectorXd r = c.y - c.X * gamma;
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> zqr(c.Z);
        if (zqr.rank() < q) {
            continue;
        }
        const Eigen::VectorXd b = zqr.solve(r);
        ss += (r - c.Z * b).squaredNorm();
        df += static_cast<double>(c.size() - q);
        coefs.push_back(b);
    }
    if (coefs.size() < 2 || !(ss > 0.0)) {
        return default_theta(q);
    }
    const double sigma2 = ss / df;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(q);
    for (const auto& b : coefs) {
        mean += b;
    }
    mean /= static_cast<double>(coefs.size());
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(q, q);
    for (const auto& b : coefs) {
        cov += (b - mean) * (b - mean).transpose();
    }
    cov /= static_cast<double>(coefs.size() - 1) * sigma2;
    cov.diagonal().array() += 1e-4;
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success || !cov.allFinite()) {
        return default_theta(q);
    }
    ParameterSet rel{Eigen::VectorXd(), cov, 1.0};
    return theta_of(rel);
}

FitResult degenerate_fit(const LongitudinalDataset& data, const Eigen::VectorXd& gamma, FitMethod method) {
    const Eigen::Index p = data.p();
    const Eigen::Index q = data.q();
    FitResult r;
    r.params.gamma = gamma;
    r.params.sigma = Eigen::MatrixXd::Zero(q, q);
    r.params.sigma_e = 0.0;
    r.names = ParameterNames::of(data);
    r.se_gamma = Eigen::VectorXd::Zero(p);
    r.cov_gamma = Eigen::MatrixXd::Zero(p, p);
    r.loglik = std::numeric_limits<double>::infinity();
    r.deviance = -std::numeric_limits<double>::infinity();
    r.method = method;
    r.converged = true;
    r.boundary = true;
    return r;
}

}  // namespace

namespace detail {

FitResult fit_profiled(const LongitudinalDataset& data, const FitOptions& options,
                       const std::vector<double>* weights) {
    if (data.n() < 2) {
        throw DataError("fit: at least 2 clusters are required");
    }
    const Eigen::Index p = data.p();
    const Eigen::Index q = data.q();
    const bool restricted = options.method == FitMethod::REML;

    const Eigen::MatrixXd X = data.stacked_X();
    const Eigen::VectorXd y = data.stacked_y();
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p) {
        throw DataError("fit: fixed-effects design is rank deficient");
    }
    if (static_cast<Eigen::Index>(data.total_rows()) <= p) {
        throw DataError("fit: not enough observations for the fixed effects");
    }
    const Eigen::VectorXd gamma_ols = qr.solve(y);
    const double rss_ols = (y - X * gamma_ols).squaredNorm();
    if (rss_ols <= 1e-24 * y.squaredNorm()) {
        return degenerate_fit(data, gamma_ols, options.method);
    }

    const ProfiledDeviance objective(data, restricted, weights);
    Eigen::VectorXd theta = options.start_theta.size() == theta_size(q) && options.start_theta.allFinite()
                                ? options.start_theta
                                : starting_theta(data);
    auto project = [q](Eigen::VectorXd& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            if (is_diagonal_index(i, q) && t(i) < 0.0) {
                t(i) = 0.0;
            }
        }
    };
    project(theta);

    NelderMeadOptions nm;
    nm.max_iter = options.max_iter;
    auto f = [&objective](const Eigen::VectorXd& t) { return objective(t); };
    NelderMeadResult best = nelder_mead(f, theta, nm, project);
    int iterations = best.iterations;
    bool converged = best.converged;
    for (int r = 0; r < options.restarts; ++r) {
        const NelderMeadResult next = nelder_mead(f, best.x, nm, project);
        iterations += next.iterations;
        const double gain = best.value - next.value;
        if (next.value <= best.value) {
            best = next;
        }
        converged = next.converged;
        if (gain <= 1e-10 * std::abs(best.value)) {
            break;
        }
    }

    bool boundary = false;
    for (Eigen::Index i = 0; i < best.x.size(); ++i) {
        if (is_diagonal_index(i, q) && best.x(i) < kBoundaryTol) {
            best.x(i) = 0.0;
            boundary = true;
        }
    }
    const ProfiledDeviance::Evaluation at = objective.evaluate(best.x);
    if (!std::isfinite(at.deviance) || !(at.sigma2 > 0.0)) {
        throw NumericalError("fit: deviance is not finite at the optimum");
    }

    FitResult result;
    const Eigen::MatrixXd C = relative_factor(best.x, q);
    result.params.gamma = at.gamma;
    result.params.sigma = at.sigma2 * C * C.transpose();
    result.params.sigma_e = std::sqrt(at.sigma2);
    result.names = ParameterNames::of(data);
    result.cov_gamma = at.sigma2 * at.information.llt().solve(Eigen::MatrixXd::Identity(p, p));
    result.se_gamma = result.cov_gamma.diagonal().cwiseMax(0.0).cwiseSqrt();
    result.method = options.method;
    result.converged = converged;
    result.boundary = boundary;
    result.n_iter = iterations;
    if (weights == nullptr && options.method == FitMethod::ML) {
        result.loglik = -0.5 * at.deviance;
        result.deviance = at.deviance;
    } else {
        result.loglik = log_likelihood(result.params, data, restricted);
        result.deviance = restricted ? -2.0 * log_likelihood(result.params, data, false) : -2.0 * result.loglik;
    }
    return result;
}

}  // namespace detail

FitResult fit(const LongitudinalDataset& data, const FitOptions& options) {
    if (options.method == FitMethod::Robust) {
        throw std::invalid_argument("fit: use fit_robust for the robust estimator");
    }
    return detail::fit_profiled(data, options, nullptr);
}

FitResult fit(const LongitudinalDataset& data, FitMethod method) {
    FitOptions options;
    options.method = method;
    return fit(data, options);
}

}  // namespace lmmci
