#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lmmci {

// A fixed-effect term: the product of the listed columns.  The empty term is
// the intercept.  Terms compare as sets; `factors` keeps the written order,
// which is used for display ("treat:time").
struct Term {
    std::vector<std::string> factors;

    bool is_intercept() const noexcept { return factors.empty(); }
    std::string label() const;

    friend bool operator==(const Term& a, const Term& b);
};

// Parsed `response ~ fixed + (random | cluster)` model description.
struct ModelFormula {
    std::string response;
    std::vector<Term> fixed_terms;
    bool random_intercept = true;
    std::vector<std::string> random_slopes;
    std::string cluster;

    bool has_intercept() const noexcept {
        return !fixed_terms.empty() && fixed_terms.front().is_intercept();
    }

    // Distinct covariate columns referenced by the fixed and random parts, in
    // order of first use.  Excludes the response and the cluster column.
    std::vector<std::string> covariates() const;

    std::vector<std::string> fixed_labels() const;
    std::vector<std::string> random_labels() const;

    friend bool operator==(const ModelFormula&, const ModelFormula&) = default;
};

// Throws ParseError (position-annotated) on any input outside the grammar.
ModelFormula parse_formula(std::string_view text);

// Canonical text that parses back to the same structure, e.g.
// "pos ~ 1 + treat + time + treat:time + (1 + time | id)".
std::string to_string(const ModelFormula& formula);

}  // namespace lmmci
