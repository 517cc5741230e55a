#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmmci/formula.hpp"
#include "lmmci/random.hpp"

namespace lmmci {

struct ClusterBlock {
    std::string id;
    Eigen::VectorXd y;
    Eigen::MatrixXd X;  // J x p fixed-effects design
    Eigen::MatrixXd Z;  // J x q random-effects design
    // J x (number of covariates) raw column values, in ModelFormula::covariates() order.
    Eigen::MatrixXd covariates;
    std::vector<std::size_t> row_ids;  // zero-based data rows in the source file

    Eigen::Index size() const noexcept { return y.size(); }
};

struct LongitudinalDataset {
    ModelFormula formula;
    std::vector<ClusterBlock> clusters;
    std::vector<std::string> fixed_names;
    std::vector<std::string> random_names;
    std::vector<std::string> covariate_names;
    std::string cluster_var;
    std::size_t dropped_rows = 0;

    std::size_t n() const noexcept { return clusters.size(); }
    std::size_t total_rows() const noexcept;
    Eigen::Index p() const noexcept { return static_cast<Eigen::Index>(fixed_names.size()); }
    Eigen::Index q() const noexcept { return static_cast<Eigen::Index>(random_names.size()); }

    // Copy with each cluster's response replaced.
    LongitudinalDataset with_responses(const std::vector<Eigen::VectorXd>& y) const;
    LongitudinalDataset without_cluster(std::size_t index) const;

    // Row-stacked fixed design and response.
    Eigen::MatrixXd stacked_X() const;
    Eigen::VectorXd stacked_y() const;
};

// Builds the X and Z rows of one observation from its covariate values.
void design_rows(const ModelFormula& formula, const std::vector<std::string>& covariate_names,
                 const Eigen::Ref<const Eigen::RowVectorXd>& values, Eigen::Ref<Eigen::RowVectorXd> x,
                 Eigen::Ref<Eigen::RowVectorXd> z);

// Assembles a dataset from per-cluster raw columns; X and Z are derived from
// the formula.  Validates the dataset invariants.
LongitudinalDataset make_dataset(const ModelFormula& formula,
                                 std::vector<std::string> cluster_ids,
                                 std::vector<Eigen::VectorXd> responses,
                                 std::vector<Eigen::MatrixXd> covariates);

LongitudinalDataset read_csv(const std::filesystem::path& path, const ModelFormula& formula);
LongitudinalDataset read_csv_text(const std::string& text, const ModelFormula& formula);

// Long format: cluster column, response, covariates.  Values are written in
// shortest round-trip form, so read_csv reproduces them bit-for-bit.
void write_csv(const LongitudinalDataset& dataset, const std::filesystem::path& path);
std::string write_csv_text(const LongitudinalDataset& dataset);

struct ParameterSet {
    Eigen::VectorXd gamma;
    Eigen::MatrixXd sigma;  // random-effects covariance
    double sigma_e = 0.0;   // residual standard deviation
};

// Two-arm longitudinal design with X = [1, treat, time, treat*time] and
// Z = [1, time], formula "pos ~ treat * time + (time | id)".
struct SimulationDesign {
    std::size_t n = 0;
    std::vector<double> times;
    std::vector<int> treat;  // per cluster, 0 or 1
    ParameterSet truth;
};

// Controls first, then round(fraction * n) treated clusters.
std::vector<int> treatment_split(std::size_t n, double treated_fraction);

// The simulated example used throughout: 60 clusters measured at 0, 3, ..., 18,
// half of them treated.
SimulationDesign medsim_design();

LongitudinalDataset simulate_dataset(const SimulationDesign& design, RandomStream& rng);

// Relabels `count` treated clusters as controls without touching their
// responses.  The relabelled clusters are the treated ones with the steepest
// least-squares slopes over time.  Returns their indices.
std::vector<std::size_t> swap_treatment_labels(LongitudinalDataset& dataset, std::size_t count);

}  // namespace lmmci
