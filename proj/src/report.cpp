#include "lmmci/report.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace lmmci {

std::string format_number(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

namespace {

std::string pad_right(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string method_title(FitMethod m) {
    switch (m) {
        case FitMethod::ML: return "maximum likelihood";
        case FitMethod::REML: return "restricted maximum likelihood";
        case FitMethod::Robust: return "cluster-weighted robust likelihood";
    }
    return "?";
}

}  // namespace

std::string format_fit(const FitResult& fit, const LongitudinalDataset& data) {
    std::ostringstream out;
    const ReportedParameters rep = fit.reported();
    out << "Linear mixed model fit by " << method_title(fit.method) << '\n';
    out << "Formula: " << to_string(data.formula) << '\n';
    out << "Clusters: " << data.n() << "  Observations: " << data.total_rows()
        << "  Dropped rows: " << data.dropped_rows << "\n\n";

    std::size_t width = 14;
    for (const auto& n : rep.names) {
        width = std::max(width, n.size() + 2);
    }
    out << "Coefficients:\n";
    out << pad_right("", width) << pad_left("Estimate", 12) << pad_left("Std. Error", 12) << '\n';
    const std::size_t p = fit.names.fixed.size();
    for (std::size_t k = 0; k < p; ++k) {
        out << pad_right(rep.names[k], width) << pad_left(format_number(rep.values[k]), 12)
            << pad_left(format_number(fit.se_gamma(static_cast<Eigen::Index>(k))), 12) << '\n';
    }
    out << "\nVariance components (standard deviations and correlations):\n";
    for (std::size_t k = p; k < rep.names.size(); ++k) {
        out << pad_right(rep.names[k], width) << pad_left(format_number(rep.values[k]), 12) << '\n';
    }
    out << "\ndeviance: " << format_number(fit.deviance) << "  log-likelihood: " << format_number(fit.loglik)
        << '\n';
    out << "converged: " << (fit.converged ? "yes" : "no") << "  iterations: " << fit.n_iter
        << "  boundary: " << (fit.boundary ? "yes" : "no") << '\n';

    if (fit.weights) {
        const auto& w = *fit.weights;
        std::vector<std::size_t> order(w.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&w](std::size_t a, std::size_t b) { return w[a] < w[b]; });
        out << "\nRobustness weights (ascending):\n";
        out << pad_right(data.cluster_var, 12) << pad_left("weight", 12) << '\n';
        for (std::size_t i : order) {
            out << pad_right(data.clusters[i].id, 12) << pad_left(format_number(w[i]), 12) << '\n';
        }
    }
    return out.str();
}

std::string format_ci_table(const CiTable& table) {
    const auto [lo, hi] = bound_labels(table.level);
    std::size_t width = 10;
    for (const auto& r : table.rows) {
        width = std::max(width, r.name.size() + 2);
    }
    std::ostringstream out;
    out << pad_right("", width) << pad_left(lo, 14) << pad_left(hi, 14) << '\n';
    for (const auto& r : table.rows) {
        out << pad_right(r.name, width) << pad_left(format_number(r.lower), 14)
            << pad_left(format_number(r.upper), 14) << '\n';
    }
    if (table.full_results) {
        out << "attr(,\"fullResults\")\n  Full results, a list with components:\n   \"Percentile\", "
               "\"bootstrap_estimates\"";
        if (!table.full_results->bca.empty()) {
            out << ", \"BCa\", \"jackknife\"";
        }
        out << '\n';
    }
    for (const auto& w : table.warnings) {
        out << "warning: " << w << '\n';
    }
    return out.str();
}

std::string format_compare(const std::string& label_a, const FitResult& a, const std::string& label_b,
                           const FitResult& b, const CiTable* ci_a, const CiTable* ci_b) {
    const ReportedParameters ra = a.reported();
    const ReportedParameters rb = b.reported();
    std::size_t width = 28;
    for (const auto& n : ra.names) {
        width = std::max(width, n.size() + 2);
    }
    constexpr std::size_t col = 24;
    auto cell = [](double est, double se) { return format_number(est) + " (" + format_number(se) + ")"; };

    std::ostringstream out;
    out << pad_right("", width) << pad_left(label_a, col) << pad_left(label_b, col) << '\n';
    out << "Coefficients (Std. Error)\n";
    const std::size_t p = a.names.fixed.size();
    for (std::size_t k = 0; k < p; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        out << pad_right("  " + ra.names[k], width) << pad_left(cell(ra.values[k], a.se_gamma(kk)), col)
            << pad_left(cell(rb.values[k], b.se_gamma(kk)), col) << '\n';
    }
    out << "Variance components\n";
    for (std::size_t k = p; k < ra.names.size(); ++k) {
        out << pad_right("  " + ra.names[k], width) << pad_left(format_number(ra.values[k]), col)
            << pad_left(format_number(rb.values[k]), col) << '\n';
    }
    out << pad_right("deviance", width) << pad_left(format_number(a.deviance), col)
        << pad_left(format_number(b.deviance), col) << '\n';

    if (ci_a != nullptr && ci_b != nullptr) {
        const auto [lo, hi] = bound_labels(ci_a->level);
        out << "\nConfidence intervals (" << to_string(ci_a->method) << ", " << lo << " - " << hi << ")\n";
        for (std::size_t k = 0; k < ci_a->rows.size(); ++k) {
            const auto& x = ci_a->rows[k];
            const auto& y = ci_b->rows[k];
            out << pad_right("  " + x.name, width)
                << pad_left("[" + format_number(x.lower) + ", " + format_number(x.upper) + "]", col)
                << pad_left("[" + format_number(y.lower) + ", " + format_number(y.upper) + "]", col) << '\n';
        }
    }
    return out.str();
}

}  // namespace lmmci
