#include "lmmci/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace lmmci {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& start, const NelderMeadOptions& options,
                             const std::function<void(Eigen::VectorXd&)>& project) {
    constexpr double kReflect = 1.0;
    constexpr double kExpand = 2.0;
    constexpr double kContract = 0.5;
    constexpr double kShrink = 0.5;

    const Eigen::Index n = start.size();
    auto feasible = [&project](Eigen::VectorXd x) {
        if (project) {
            project(x);
        }
        return x;
    };
    auto eval = [&objective](const Eigen::VectorXd& x) {
        const double f = objective(x);
        return std::isnan(f) ? std::numeric_limits<double>::infinity() : f;
    };

    NelderMeadResult result;
    if (n == 0) {
        result.x = start;
        result.value = eval(start);
        result.converged = true;
        return result;
    }

    std::vector<Eigen::VectorXd> vertex(static_cast<std::size_t>(n + 1));
    std::vector<double> value(static_cast<std::size_t>(n + 1));
    vertex[0] = feasible(start);
    value[0] = eval(vertex[0]);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd v = vertex[0];
        v(i) += options.initial_step_rel * std::abs(v(i)) + options.initial_step_abs;
        vertex[static_cast<std::size_t>(i + 1)] = feasible(v);
        value[static_cast<std::size_t>(i + 1)] = eval(vertex[static_cast<std::size_t>(i + 1)]);
    }

    std::vector<std::size_t> order(vertex.size());
    int iter = 0;
    for (;; ++iter) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&value](std::size_t a, std::size_t b) { return value[a] < value[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second_worst = order[order.size() - 2];

        double spread = 0.0;
        for (const auto& v : vertex) {
            spread = std::max(spread, (v - vertex[best]).cwiseAbs().maxCoeff());
        }
        const double fspread = value[worst] - value[best];
        const bool fconv = std::isfinite(value[best]) &&
                           fspread <= options.ftol_rel * std::abs(value[best]) + 1e-300;
        if (fconv && spread <= options.xtol_abs) {
            result.converged = true;
            break;
        }
        if (iter >= options.max_iter) {
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
            centroid += vertex[order[k]];
        }
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd reflected = feasible(centroid + kReflect * (centroid - vertex[worst]));
        const double f_reflected = eval(reflected);
        if (f_reflected < value[best]) {
            const Eigen::VectorXd expanded = feasible(centroid + kExpand * (reflected - centroid));
            const double f_expanded = eval(expanded);
            if (f_expanded < f_reflected) {
                vertex[worst] = expanded;
                value[worst] = f_expanded;
            } else {
                vertex[worst] = reflected;
                value[worst] = f_reflected;
            }
            continue;
        }
        if (f_reflected < value[second_worst]) {
            vertex[worst] = reflected;
            value[worst] = f_reflected;
            continue;
        }
        const bool outside = f_reflected < value[worst];
        const Eigen::VectorXd contracted =
            outside ? feasible(centroid + kContract * (reflected - centroid))
                    : feasible(centroid + kContract * (vertex[worst] - centroid));
        const double f_contracted = eval(contracted);
        if (f_contracted < (outside ? f_reflected : value[worst])) {
            vertex[worst] = contracted;
            value[worst] = f_contracted;
            continue;
        }
        for (std::size_t k = 1; k < order.size(); ++k) {
            const std::size_t idx = order[k];
            vertex[idx] = feasible(vertex[best] + kShrink * (vertex[idx] - vertex[best]));
            value[idx] = eval(vertex[idx]);
        }
    }

    const auto best_it = std::min_element(value.begin(), value.end());
    const auto best = static_cast<std::size_t>(best_it - value.begin());
    result.x = vertex[best];
    result.value = value[best];
    result.iterations = iter;
    return result;
}

}  // namespace lmmci
