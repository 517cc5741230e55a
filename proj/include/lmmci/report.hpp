#pragma once

#include <optional>
#include <string>

#include "lmmci/data.hpp"
#include "lmmci/estimation.hpp"
#include "lmmci/intervals.hpp"

namespace lmmci {

// Six significant digits, the precision used by every text table.
std::string format_number(double v);

std::string format_fit(const FitResult& fit, const LongitudinalDataset& data);

// Name column followed by two bound columns labelled from the level.
std::string format_ci_table(const CiTable& table);

std::string format_compare(const std::string& label_a, const FitResult& a, const std::string& label_b,
                           const FitResult& b, const CiTable* ci_a = nullptr, const CiTable* ci_b = nullptr);

}  // namespace lmmci
