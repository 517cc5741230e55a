#include "lmmci/serialize.hpp"

#include <cmath>
#include <sstream>

#include "lmmci/error.hpp"

namespace lmmci {

namespace {

Json number(double v) {
    return std::isfinite(v) ? Json(v) : Json(nullptr);
}

const char* kind_name(ParameterKind kind) {
    switch (kind) {
        case ParameterKind::Fixed: return "fixed";
        case ParameterKind::StdDev: return "sd";
        case ParameterKind::Correlation: return "correlation";
        case ParameterKind::Residual: return "residual";
    }
    return "?";
}

Json matrix_rows(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(number(m(i, j)));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Json vector_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(number(v(i)));
    }
    return out;
}

Json rows_json(const std::vector<CiRow>& rows) {
    Json out = Json::array();
    for (const auto& r : rows) {
        out.push_back({{"name", r.name}, {"lower", number(r.lower)}, {"upper", number(r.upper)}});
    }
    return out;
}

}  // namespace

Json fit_to_json(const FitResult& fit, const LongitudinalDataset& data) {
    Json j;
    j["method"] = to_string(fit.method);
    j["formula"] = to_string(data.formula);
    j["n_clusters"] = data.n();
    j["n_obs"] = data.total_rows();
    j["dropped_rows"] = data.dropped_rows;
    j["converged"] = fit.converged;
    j["boundary"] = fit.boundary;
    j["iterations"] = fit.n_iter;
    j["loglik"] = number(fit.loglik);
    j["deviance"] = number(fit.deviance);

    const ReportedParameters rep = fit.reported();
    Json params = Json::array();
    for (std::size_t k = 0; k < rep.names.size(); ++k) {
        Json row{{"name", rep.names[k]}, {"kind", kind_name(rep.kinds[k])}, {"estimate", number(rep.values[k])}};
        if (rep.kinds[k] == ParameterKind::Fixed) {
            row["std_error"] = number(fit.se_gamma(static_cast<Eigen::Index>(k)));
        }
        params.push_back(std::move(row));
    }
    j["parameters"] = std::move(params);
    j["gamma"] = vector_json(fit.params.gamma);
    j["sigma"] = matrix_rows(fit.params.sigma);
    j["sigma_e"] = number(fit.params.sigma_e);
    j["cov_gamma"] = matrix_rows(fit.cov_gamma);
    if (fit.weights) {
        Json w = Json::array();
        for (std::size_t i = 0; i < fit.weights->size(); ++i) {
            w.push_back({{"cluster", data.clusters[i].id}, {"weight", number((*fit.weights)[i])}});
        }
        j["weights"] = std::move(w);
    }
    return j;
}

Json bootstrap_to_json(const BootstrapRun& run) {
    return Json{{"scheme", to_string(run.scheme)},
                {"refit_method", to_string(run.refit_method)},
                {"requested", run.requested},
                {"n_failed", run.n_failed},
                {"seed", run.seed},
                {"names", run.names},
                {"replicates", run.replicate_ids},
                {"values", matrix_rows(run.estimates)}};
}

Json full_results_to_json(const FullResults& full, const std::vector<std::string>& names) {
    Json j;
    j["Percentile"] = rows_json(full.percentile);
    j["bootstrap_estimates"] = bootstrap_to_json(full.bootstrap);
    if (!full.bca.empty()) {
        Json bca = Json::array();
        for (std::size_t k = 0; k < full.bca.size(); ++k) {
            const auto& c = full.bca[k];
            bca.push_back({{"name", names[k]},
                           {"z0", number(c.z0)},
                           {"a", number(c.a)},
                           {"alpha1", number(c.alpha1)},
                           {"alpha2", number(c.alpha2)},
                           {"clamped", c.clamped}});
        }
        j["BCa"] = std::move(bca);
    }
    if (full.jackknife) {
        j["jackknife"] = {{"values", matrix_rows(full.jackknife->estimates)},
                          {"mean_row", vector_json(full.jackknife->mean_row.transpose())}};
    }
    return j;
}

Json ci_table_to_json(const CiTable& table) {
    const auto [lo, hi] = bound_labels(table.level);
    Json j;
    j["method"] = to_string(table.method);
    if (table.boot_type) {
        j["boot_type"] = to_string(*table.boot_type);
        j["nsim"] = table.nsim;
        j["seed"] = table.seed;
    }
    j["level"] = table.level;
    j["labels"] = {lo, hi};
    j["rows"] = rows_json(table.rows);
    j["warnings"] = table.warnings;
    return j;
}

std::string bootstrap_to_csv(const BootstrapRun& run) {
    std::ostringstream out;
    out.precision(17);
    out << "replicate";
    for (const auto& n : run.names) {
        out << ",\"" << n << '"';
    }
    out << '\n';
    for (Eigen::Index i = 0; i < run.estimates.rows(); ++i) {
        out << run.replicate_ids[static_cast<std::size_t>(i)];
        for (Eigen::Index k = 0; k < run.estimates.cols(); ++k) {
            out << ',' << run.estimates(i, k);
        }
        out << '\n';
    }
    return out.str();
}

SimulationSpec simulation_from_json(const Json& doc) {
    try {
        SimulationSpec spec;
        auto& d = spec.design;
        d.n = doc.at("n").get<std::size_t>();
        d.times = doc.at("times").get<std::vector<double>>();
        if (doc.contains("treat")) {
            d.treat = doc.at("treat").get<std::vector<int>>();
        } else if (doc.contains("treat_fraction")) {
            d.treat = treatment_split(d.n, doc.at("treat_fraction").get<double>());
        } else {
            throw DataError("simulation design needs 'treat' or 'treat_fraction'");
        }
        const auto gamma = doc.at("gamma").get<std::vector<double>>();
        d.truth.gamma = Eigen::Map<const Eigen::VectorXd>(gamma.data(), static_cast<Eigen::Index>(gamma.size()));
        const auto sigma = doc.at("sigma").get<std::vector<std::vector<double>>>();
        const auto q = static_cast<Eigen::Index>(sigma.size());
        d.truth.sigma.resize(q, q);
        for (Eigen::Index i = 0; i < q; ++i) {
            if (static_cast<Eigen::Index>(sigma[static_cast<std::size_t>(i)].size()) != q) {
                throw DataError("simulation design: sigma must be square");
            }
            for (Eigen::Index k = 0; k < q; ++k) {
                d.truth.sigma(i, k) = sigma[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
            }
        }
        const double sigma_e2 = doc.at("sigma_e2").get<double>();
        if (!(sigma_e2 >= 0.0)) {
            throw DataError("simulation design: sigma_e2 must be non-negative");
        }
        d.truth.sigma_e = std::sqrt(sigma_e2);
        spec.seed = doc.value("seed", std::uint64_t{0});
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("simulation design: ") + e.what());
    }
}

Json simulation_to_json(const SimulationSpec& spec) {
    const auto& d = spec.design;
    std::vector<double> gamma(d.truth.gamma.data(), d.truth.gamma.data() + d.truth.gamma.size());
    return Json{{"n", d.n},
                {"times", d.times},
                {"treat", d.treat},
                {"gamma", gamma},
                {"sigma", matrix_rows(d.truth.sigma)},
                {"sigma_e2", d.truth.sigma_e * d.truth.sigma_e},
                {"seed", spec.seed}};
}

}  // namespace lmmci
