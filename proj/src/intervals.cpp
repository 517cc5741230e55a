#include "lmmci/intervals.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "lmmci/error.hpp"
#include "lmmci/numerics.hpp"

namespace lmmci {

std::string to_string(CiMethod method) {
    switch (method) {
        case CiMethod::Wald: return "Wald";
        case CiMethod::Boot: return "boot";
        case CiMethod::BCa: return "BCa";
    }
    return "?";
}

CiMethod parse_ci_method(const std::string& text) {
    std::string lower;
    for (char c : text) {
        lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (lower == "wald") return CiMethod::Wald;
    if (lower == "boot") return CiMethod::Boot;
    if (lower == "bca") return CiMethod::BCa;
    throw DataError("unknown interval method '" + text + "' (expected wald, boot or bca)");
}

std::vector<ParamSelector> parse_parm_list(const std::string& text) {
    std::vector<ParamSelector> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        item = b == std::string::npos ? std::string() : item.substr(b, e - b + 1);
        if (item.empty()) {
            throw DataError("parm: empty selector in '" + text + "'");
        }
        if (std::all_of(item.begin(), item.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            out.emplace_back(static_cast<std::size_t>(std::stoull(item)));
        } else {
            out.emplace_back(item);
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

std::vector<std::size_t> resolve_parm(const std::vector<ParamSelector>& selectors,
                                      const std::vector<std::string>& names) {
    std::vector<std::size_t> out;
    for (const auto& sel : selectors) {
        if (const auto* index = std::get_if<std::size_t>(&sel)) {
            if (*index < 1 || *index > names.size()) {
                throw DataError("parm: index " + std::to_string(*index) + " outside 1.." +
                                std::to_string(names.size()));
            }
            out.push_back(*index - 1);
            continue;
        }
        const auto& name = std::get<std::string>(sel);
        const auto count = std::count(names.begin(), names.end(), name);
        if (count != 1) {
            throw DataError("parm: unknown parameter '" + name + "'");
        }
        out.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin()));
    }
    return out;
}

std::pair<std::string, std::string> bound_labels(double level) {
    const double alpha = 1.0 - level;
    auto fmt = [](double pct) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g %%", pct);
        return std::string(buf);
    };
    return {fmt(100.0 * alpha / 2.0), fmt(100.0 * (1.0 - alpha / 2.0))};
}

namespace {

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw DataError("level must lie strictly between 0 and 1");
    }
}

double bca_alpha(double z0, double a, double tail) {
    if (z0 == 0.0 && a == 0.0) {
        return tail;
    }
    const double z = norm_quantile(tail);
    const double shifted = z0 + z;
    const double denom = 1.0 - a * shifted;
    if (denom <= 0.0) {
        return shifted > 0.0 ? 1.0 : 0.0;
    }
    return norm_cdf(z0 + shifted / denom);
}

}  // namespace

Interval percentile_ci(std::span<const double> samples, double level) {
    check_level(level);
    if (samples.empty()) {
        throw DataError("percentile interval: no bootstrap samples");
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double alpha = 1.0 - level;
    return {empirical_quantile_sorted(sorted, alpha / 2.0), empirical_quantile_sorted(sorted, 1.0 - alpha / 2.0)};
}

BcaComponents bca_components(std::span<const double> samples, double point_estimate,
                             std::span<const double> jackknife, double level) {
    check_level(level);
    if (samples.empty()) {
        throw DataError("BCa: no bootstrap samples");
    }
    if (jackknife.size() < 3) {
        throw DataError("BCa: the jackknife needs at least 3 clusters");
    }
    BcaComponents out;
    const auto B = static_cast<double>(samples.size());
    const auto below = static_cast<double>(
        std::count_if(samples.begin(), samples.end(), [point_estimate](double s) { return s < point_estimate; }));
    double prop = below / B;
    if (below == 0.0) {
        prop = 1.0 / (2.0 * B);
        out.clamped = true;
    } else if (below == B) {
        prop = 1.0 - 1.0 / (2.0 * B);
        out.clamped = true;
    }
    out.z0 = norm_quantile(prop);

    double mean = 0.0;
    for (double v : jackknife) {
        mean += v;
    }
    mean /= static_cast<double>(jackknife.size());
    double num = 0.0;
    double den = 0.0;
    for (double v : jackknife) {
        const double d = mean - v;
        num += d * d * d;
        den += d * d;
    }
    out.a = den > 0.0 ? num / (6.0 * std::pow(den, 1.5)) : 0.0;

    const double alpha = 1.0 - level;
    out.alpha1 = bca_alpha(out.z0, out.a, alpha / 2.0);
    out.alpha2 = bca_alpha(out.z0, out.a, 1.0 - alpha / 2.0);
    return out;
}

Interval bca_ci(std::span<const double> samples, const BcaComponents& components) {
    if (samples.empty()) {
        throw DataError("BCa: no bootstrap samples");
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return {empirical_quantile_sorted(sorted, std::clamp(components.alpha1, 0.0, 1.0)),
            empirical_quantile_sorted(sorted, std::clamp(components.alpha2, 0.0, 1.0))};
}

CiTable wald_ci(const FitResult& fit, double level) {
    check_level(level);
    CiTable table;
    table.level = level;
    table.method = CiMethod::Wald;
    const double z = norm_quantile(1.0 - (1.0 - level) / 2.0);
    for (std::size_t j = 0; j < fit.names.fixed.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double est = fit.params.gamma(jj);
        const double half = z * fit.se_gamma(jj);
        table.rows.push_back({fit.names.fixed[j], est - half, est + half});
    }
    return table;
}

namespace {

void clamp_to_parameter_space(std::vector<CiRow>& rows, const std::vector<ParameterKind>& kinds) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (kinds[k] == ParameterKind::Correlation) {
            rows[k].lower = std::clamp(rows[k].lower, -1.0, 1.0);
            rows[k].upper = std::clamp(rows[k].upper, -1.0, 1.0);
        } else if (kinds[k] == ParameterKind::StdDev || kinds[k] == ParameterKind::Residual) {
            rows[k].lower = std::max(rows[k].lower, 0.0);
            rows[k].upper = std::max(rows[k].upper, 0.0);
        }
    }
}

}  // namespace

CiTable confint(const FitResult& fit, const LongitudinalDataset& data, const CiOptions& options) {
    check_level(options.level);
    const std::vector<std::string> names = fit.names.labels();
    const std::vector<ParameterKind> kinds = fit.names.kinds();

    if (options.method == CiMethod::Wald) {
        const auto selected = resolve_parm(options.parm, names);
        for (std::size_t idx : selected) {
            if (kinds[idx] != ParameterKind::Fixed) {
                throw DataError("Wald intervals are available only for fixed effects; '" + names[idx] +
                                "' is a variance component");
            }
        }
        CiTable table = wald_ci(fit, options.level);
        if (!options.parm.empty()) {
            std::vector<CiRow> rows;
            for (std::size_t idx : selected) {
                rows.push_back(table.rows[idx]);
            }
            table.rows = std::move(rows);
        }
        return table;
    }

    if (options.method == CiMethod::BCa) {
        if (!options.cluster_id) {
            throw DataError("clusterID (--cluster-id) is required with method BCa");
        }
        if (*options.cluster_id != data.cluster_var) {
            throw DataError("cluster id '" + *options.cluster_id + "' is not the model's cluster variable '" +
                            data.cluster_var + "'");
        }
    }
    if (options.nsim < 1) {
        throw DataError("nsim must be at least 1");
    }
    const auto selected = resolve_parm(options.parm, names);

    BootstrapOptions bopts;
    bopts.replicates = options.nsim;
    bopts.scheme = options.boot_type;
    bopts.seed = options.seed;
    bopts.threads = options.threads;

    CiTable table;
    table.level = options.level;
    table.method = options.method;
    table.boot_type = options.boot_type;
    table.nsim = options.nsim;
    table.seed = options.seed;

    FullResults full;
    full.bootstrap = run_bootstrap(fit, data, bopts);
    if (full.bootstrap.n_failed > 0) {
        table.warnings.push_back(std::to_string(full.bootstrap.n_failed) + " of " + std::to_string(options.nsim) +
                                 " bootstrap replicates failed and were dropped");
    }
    const Eigen::MatrixXd& est = full.bootstrap.estimates;
    const auto K = static_cast<std::size_t>(est.cols());
    const Eigen::VectorXd point = reported_values(fit.params);

    auto column = [&est](std::size_t k) {
        const Eigen::VectorXd col = est.col(static_cast<Eigen::Index>(k));
        return std::vector<double>(col.data(), col.data() + col.size());
    };

    for (std::size_t k = 0; k < K; ++k) {
        const auto samples = column(k);
        const Interval iv = percentile_ci(samples, options.level);
        full.percentile.push_back({names[k], iv.lower, iv.upper});
    }
    clamp_to_parameter_space(full.percentile, kinds);

    std::vector<CiRow> rows = full.percentile;
    if (options.method == CiMethod::BCa) {
        Estimator estimator;
        estimator.method = fit.method;
        estimator.robust = options.robust;
        const Eigen::VectorXd start = fit.params.sigma_e > 0.0 ? theta_of(fit.params) : Eigen::VectorXd();
        JackknifeRun jack = jackknife_run(data, estimator, options.threads, start);
        if (jack.failed) {
            throw NumericalError("BCa unavailable: the jackknife refit without cluster '" +
                                 data.clusters[*jack.failed_cluster].id + "' failed");
        }
        for (std::size_t k = 0; k < K; ++k) {
            const auto samples = column(k);
            const Eigen::VectorXd jc = jack.estimates.col(static_cast<Eigen::Index>(k));
            const BcaComponents comp = bca_components(samples, point(static_cast<Eigen::Index>(k)),
                                                      std::span<const double>(jc.data(), static_cast<std::size_t>(jc.size())),
                                                      options.level);
            if (comp.clamped) {
                table.warnings.push_back("BCa: every bootstrap estimate of '" + names[k] +
                                         "' lies on one side of the point estimate; bias correction clamped");
            }
            const Interval iv = bca_ci(samples, comp);
            rows[k] = {names[k], iv.lower, iv.upper};
            full.bca.push_back(comp);
        }
        clamp_to_parameter_space(rows, kinds);
        full.jackknife = std::move(jack);
    }

    if (options.parm.empty()) {
        table.rows = std::move(rows);
    } else {
        for (std::size_t idx : selected) {
            table.rows.push_back(rows[idx]);
        }
    }
    table.full_results = std::move(full);
    return table;
}

}  // namespace lmmci
