#pragma once

#include <functional>

#include <Eigen/Dense>

namespace lmmci {

struct NelderMeadOptions {
    int max_iter = 2000;
    double ftol_rel = 1e-8;  // relative spread of function values in the simplex
    double xtol_abs = 1e-7;  // max distance of any vertex from the best one
    double initial_step_rel = 0.1;
    double initial_step_abs = 0.05;
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Nelder-Mead simplex minimization.  `project` maps every trial point onto
// the feasible set (e.g. clamps coordinates at a bound); it may be empty.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& start, const NelderMeadOptions& options,
                             const std::function<void(Eigen::VectorXd&)>& project = {});

}  // namespace lmmci
