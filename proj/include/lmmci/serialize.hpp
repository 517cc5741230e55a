#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "lmmci/data.hpp"
#include "lmmci/estimation.hpp"
#include "lmmci/intervals.hpp"

namespace lmmci {

using Json = nlohmann::ordered_json;

// Full-precision JSON; non-finite numbers become null.
Json fit_to_json(const FitResult& fit, const LongitudinalDataset& data);
Json ci_table_to_json(const CiTable& table);
Json full_results_to_json(const FullResults& full, const std::vector<std::string>& names);
Json bootstrap_to_json(const BootstrapRun& run);

// Bootstrap estimate matrix as CSV with a header of parameter names.
std::string bootstrap_to_csv(const BootstrapRun& run);

struct SimulationSpec {
    SimulationDesign design;
    std::uint64_t seed = 0;
};

// {n, times[], treat_fraction | treat[], gamma[], sigma[[..]], sigma_e2, seed}
SimulationSpec simulation_from_json(const Json& doc);
Json simulation_to_json(const SimulationSpec& spec);

}  // namespace lmmci
