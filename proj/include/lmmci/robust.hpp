#pragma once

#include "lmmci/estimation.hpp"

namespace lmmci {

struct RobustConfig {
    double k = 1.345;
    int max_iter = 50;
    double tol = 1e-6;  // max absolute change in any cluster weight
};

// Standardized outlyingness sqrt(r' V^-1 r) with r = y - X gamma.
double cluster_distance(const ClusterBlock& block, const ParameterSet& params);

// min(1, c / d) with cutoff c = sqrt(J) + k sqrt(2), roughly the mean plus k
// standard deviations of a chi distribution with J degrees of freedom.
double huber_weight(double distance, Eigen::Index cluster_size, double k);

// Cluster-weighted likelihood fit: alternates between maximizing
// sum_i w_i l_i(params) and recomputing w_i from the current fit.
// The weights are reported in dataset cluster order.
FitResult fit_robust(const LongitudinalDataset& data, const RobustConfig& config = {});

}  // namespace lmmci
