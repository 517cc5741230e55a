#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lmmci/bootstrap.hpp"

namespace lmmci {

enum class CiMethod { Wald, Boot, BCa };

std::string to_string(CiMethod method);
CiMethod parse_ci_method(const std::string& text);

// A parameter selector: a 1-based row index or an exact row name.
using ParamSelector = std::variant<std::size_t, std::string>;

// Splits "treat,Sigma id time,2" into selectors; all-digit items are indices.
std::vector<ParamSelector> parse_parm_list(const std::string& text);

struct CiOptions {
    CiMethod method = CiMethod::Boot;
    BootScheme boot_type = BootScheme::Wild;
    std::size_t nsim = 5000;
    double level = 0.95;
    std::vector<ParamSelector> parm;
    std::optional<std::string> cluster_id;  // required for BCa
    std::uint64_t seed = 0;
    unsigned threads = 1;
    RobustConfig robust;  // jackknife estimator settings for robust fits
};

struct Interval {
    double lower;
    double upper;
};

struct CiRow {
    std::string name;
    double lower;
    double upper;
};

struct BcaComponents {
    double z0 = 0.0;
    double a = 0.0;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    bool clamped = false;  // every bootstrap estimate fell on one side of the point estimate
};

struct FullResults {
    std::vector<CiRow> percentile;
    BootstrapRun bootstrap;
    std::optional<JackknifeRun> jackknife;
    std::vector<BcaComponents> bca;  // one per parameter, BCa only
};

struct CiTable {
    std::vector<CiRow> rows;
    double level = 0.95;
    CiMethod method = CiMethod::Boot;
    std::optional<BootScheme> boot_type;
    std::size_t nsim = 0;
    std::uint64_t seed = 0;
    std::optional<FullResults> full_results;
    std::vector<std::string> warnings;
};

// "2.5 %" / "97.5 %" style column labels for a confidence level.
std::pair<std::string, std::string> bound_labels(double level);

Interval percentile_ci(std::span<const double> samples, double level);

BcaComponents bca_components(std::span<const double> samples, double point_estimate,
                             std::span<const double> jackknife, double level);

Interval bca_ci(std::span<const double> samples, const BcaComponents& components);

// Normal-quantile intervals for the fixed effects only.
CiTable wald_ci(const FitResult& fit, double level);

CiTable confint(const FitResult& fit, const LongitudinalDataset& data, const CiOptions& options);

// Resolves selectors against the full row-name list; returns 0-based indices
// in request order.
std::vector<std::size_t> resolve_parm(const std::vector<ParamSelector>& selectors,
                                      const std::vector<std::string>& names);

}  // namespace lmmci
