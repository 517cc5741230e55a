#include "lmmci/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "lmmci/error.hpp"
#include "lmmci/numerics.hpp"

namespace lmmci {

std::size_t LongitudinalDataset::total_rows() const noexcept {
    std::size_t total = 0;
    for (const auto& c : clusters) {
        total += static_cast<std::size_t>(c.size());
    }
    return total;
}

LongitudinalDataset LongitudinalDataset::with_responses(const std::vector<Eigen::VectorXd>& y) const {
    if (y.size() != clusters.size()) {
        throw std::invalid_argument("with_responses: cluster count mismatch");
    }
    LongitudinalDataset copy = *this;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        if (y[i].size() != clusters[i].size()) {
            throw std::invalid_argument("with_responses: cluster size mismatch");
        }
        copy.clusters[i].y = y[i];
    }
    return copy;
}

LongitudinalDataset LongitudinalDataset::without_cluster(std::size_t index) const {
    LongitudinalDataset copy = *this;
    copy.clusters.erase(copy.clusters.begin() + static_cast<std::ptrdiff_t>(index));
    return copy;
}

Eigen::MatrixXd LongitudinalDataset::stacked_X() const {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(total_rows()), p());
    Eigen::Index row = 0;
    for (const auto& c : clusters) {
        X.middleRows(row, c.size()) = c.X;
        row += c.size();
    }
    return X;
}

Eigen::VectorXd LongitudinalDataset::stacked_y() const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(total_rows()));
    Eigen::Index row = 0;
    for (const auto& c : clusters) {
        y.segment(row, c.size()) = c.y;
        row += c.size();
    }
    return y;
}

void design_rows(const ModelFormula& formula, const std::vector<std::string>& covariate_names,
                 const Eigen::Ref<const Eigen::RowVectorXd>& values, Eigen::Ref<Eigen::RowVectorXd> x,
                 Eigen::Ref<Eigen::RowVectorXd> z) {
    auto value_of = [&](const std::string& name) {
        const auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
        return values(static_cast<Eigen::Index>(it - covariate_names.begin()));
    };
    Eigen::Index col = 0;
    for (const auto& term : formula.fixed_terms) {
        double v = 1.0;
        for (const auto& f : term.factors) {
            v *= value_of(f);
        }
        x(col++) = v;
    }
    col = 0;
    if (formula.random_intercept) {
        z(col++) = 1.0;
    }
    for (const auto& s : formula.random_slopes) {
        z(col++) = value_of(s);
    }
}

LongitudinalDataset make_dataset(const ModelFormula& formula, std::vector<std::string> cluster_ids,
                                 std::vector<Eigen::VectorXd> responses,
                                 std::vector<Eigen::MatrixXd> covariates) {
    LongitudinalDataset ds;
    ds.formula = formula;
    ds.fixed_names = formula.fixed_labels();
    ds.random_names = formula.random_labels();
    ds.covariate_names = formula.covariates();
    ds.cluster_var = formula.cluster;

    if (cluster_ids.size() < 2) {
        throw DataError("dataset needs at least 2 clusters, found " + std::to_string(cluster_ids.size()));
    }
    const auto p = ds.p();
    const auto q = ds.q();
    const auto v = static_cast<Eigen::Index>(ds.covariate_names.size());
    std::size_t row_offset = 0;
    for (std::size_t i = 0; i < cluster_ids.size(); ++i) {
        ClusterBlock block;
        block.id = std::move(cluster_ids[i]);
        block.y = std::move(responses[i]);
        block.covariates = std::move(covariates[i]);
        const Eigen::Index J = block.y.size();
        if (J < 1 || block.covariates.rows() != J || block.covariates.cols() != v) {
            throw DataError("cluster '" + block.id + "' has inconsistent dimensions");
        }
        block.X.resize(J, p);
        block.Z.resize(J, q);
        for (Eigen::Index j = 0; j < J; ++j) {
            Eigen::RowVectorXd xr(p), zr(q);
            design_rows(formula, ds.covariate_names, block.covariates.row(j), xr, zr);
            block.X.row(j) = xr;
            block.Z.row(j) = zr;
        }
        if (!block.y.allFinite() || !block.X.allFinite() || !block.Z.allFinite()) {
            throw DataError("cluster '" + block.id + "' contains non-finite values");
        }
        block.row_ids.resize(static_cast<std::size_t>(J));
        std::iota(block.row_ids.begin(), block.row_ids.end(), row_offset);
        row_offset += static_cast<std::size_t>(J);
        ds.clusters.push_back(std::move(block));
    }
    return ds;
}

namespace {

// One CSV record; fields may be double-quoted with "" as an escaped quote.
// Returns false at end of input.
bool next_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r') {
                field.pop_back();
            }
            fields.push_back(std::move(field));
            return true;
        } else {
            field += c;
        }
    }
    if (in_quotes) {
        throw DataError("csv: unterminated quoted field");
    }
    if (!any) {
        return false;
    }
    if (!field.empty() && field.back() == '\r') {
        field.pop_back();
    }
    fields.push_back(std::move(field));
    return true;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& raw, double& out) {
    const std::string s = trim(raw);
    if (s.empty() || s == "NA") {
        return false;
    }
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

LongitudinalDataset read_stream(std::istream& in, const ModelFormula& formula) {
    std::vector<std::string> header;
    if (!next_record(in, header)) {
        throw DataError("csv: empty file");
    }
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) {
        header[0].erase(0, 3);
    }
    for (auto& h : header) {
        h = trim(h);
    }
    auto column = [&header](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw DataError("csv: missing column '" + name + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t cluster_col = column(formula.cluster);
    const std::size_t response_col = column(formula.response);
    const auto covariate_names = formula.covariates();
    std::vector<std::size_t> covariate_cols;
    for (const auto& name : covariate_names) {
        covariate_cols.push_back(column(name));
    }

    struct Rows {
        std::vector<double> y;
        std::vector<std::vector<double>> cov;
        std::vector<std::size_t> ids;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, Rows> by_cluster;
    std::size_t dropped = 0;
    std::size_t row_index = 0;
    std::vector<std::string> fields;
    while (next_record(in, fields)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) {
            continue;  // blank line
        }
        if (fields.size() != header.size()) {
            throw DataError("csv: row " + std::to_string(row_index + 1) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(header.size()));
        }
        const std::size_t this_row = row_index++;
        const std::string label = trim(fields[cluster_col]);
        auto [it, inserted] = by_cluster.try_emplace(label);
        if (inserted) {
            order.push_back(label);
        }
        double y = 0.0;
        std::vector<double> cov(covariate_cols.size());
        bool ok = !label.empty() && label != "NA" && parse_number(fields[response_col], y);
        for (std::size_t k = 0; ok && k < covariate_cols.size(); ++k) {
            ok = parse_number(fields[covariate_cols[k]], cov[k]);
        }
        if (!ok) {
            ++dropped;
            continue;
        }
        it->second.y.push_back(y);
        it->second.cov.push_back(std::move(cov));
        it->second.ids.push_back(this_row);
    }

    std::vector<std::string> ids;
    std::vector<Eigen::VectorXd> responses;
    std::vector<Eigen::MatrixXd> covariates;
    std::vector<std::vector<std::size_t>> row_ids;
    std::size_t kept = 0;
    for (const auto& label : order) {
        const Rows& rows = by_cluster.at(label);
        if (label.empty() || label == "NA") {
            continue;  // rows with a missing cluster label were dropped above
        }
        if (rows.y.empty()) {
            throw DataError("csv: every row of cluster '" + label + "' was dropped");
        }
        const auto J = static_cast<Eigen::Index>(rows.y.size());
        Eigen::MatrixXd cov(J, static_cast<Eigen::Index>(covariate_cols.size()));
        for (Eigen::Index j = 0; j < J; ++j) {
            for (Eigen::Index k = 0; k < cov.cols(); ++k) {
                cov(j, k) = rows.cov[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
            }
        }
        ids.push_back(label);
        responses.emplace_back(Eigen::Map<const Eigen::VectorXd>(rows.y.data(), J));
        covariates.push_back(std::move(cov));
        row_ids.push_back(rows.ids);
        kept += rows.y.size();
    }
    if (kept == 0) {
        throw DataError("csv: no usable rows");
    }
    LongitudinalDataset ds = make_dataset(formula, std::move(ids), std::move(responses), std::move(covariates));
    for (std::size_t i = 0; i < ds.clusters.size(); ++i) {
        ds.clusters[i].row_ids = std::move(row_ids[i]);
    }
    ds.dropped_rows = dropped;
    return ds;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + '"';
}

}  // namespace

LongitudinalDataset read_csv_text(const std::string& text, const ModelFormula& formula) {
    std::istringstream in(text);
    return read_stream(in, formula);
}

LongitudinalDataset read_csv(const std::filesystem::path& path, const ModelFormula& formula) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open data file '" + path.string() + "'");
    }
    return read_stream(in, formula);
}

std::string write_csv_text(const LongitudinalDataset& dataset) {
    std::string out = quote_if_needed(dataset.cluster_var) + "," + quote_if_needed(dataset.formula.response);
    for (const auto& name : dataset.covariate_names) {
        out += "," + quote_if_needed(name);
    }
    out += '\n';
    for (const auto& c : dataset.clusters) {
        const std::string label = quote_if_needed(c.id);
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            out += label;
            out += ',';
            out += format_double(c.y(j));
            for (Eigen::Index k = 0; k < c.covariates.cols(); ++k) {
                out += ',';
                out += format_double(c.covariates(j, k));
            }
            out += '\n';
        }
    }
    return out;
}

void write_csv(const LongitudinalDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    out << write_csv_text(dataset);
    if (!out) {
        throw DataError("write failed for '" + path.string() + "'");
    }
}

std::vector<int> treatment_split(std::size_t n, double treated_fraction) {
    if (!(treated_fraction >= 0.0 && treated_fraction <= 1.0)) {
        throw DataError("treat_fraction must lie in [0, 1]");
    }
    const auto treated = static_cast<std::size_t>(std::llround(treated_fraction * static_cast<double>(n)));
    std::vector<int> labels(n, 0);
    std::fill(labels.end() - static_cast<std::ptrdiff_t>(treated), labels.end(), 1);
    return labels;
}

SimulationDesign medsim_design() {
    SimulationDesign d;
    d.n = 60;
    d.times = {0, 3, 6, 9, 12, 15, 18};
    d.treat = treatment_split(d.n, 0.5);
    d.truth.gamma = Eigen::Vector4d(167.46, -3.11, -2.42, 4.00);
    d.truth.sigma.resize(2, 2);
    d.truth.sigma << 2111.54, -121.63, -121.63, 63.74;
    d.truth.sigma_e = std::sqrt(1229.93);
    return d;
}

LongitudinalDataset simulate_dataset(const SimulationDesign& design, RandomStream& rng) {
    static const ModelFormula formula = parse_formula("pos ~ treat * time + (time | id)");
    if (design.times.empty()) {
        throw DataError("simulation design needs at least one time point");
    }
    if (design.treat.size() != design.n) {
        throw DataError("simulation design: treat labels must have one entry per cluster");
    }
    if (design.truth.gamma.size() != 4 || design.truth.sigma.rows() != 2 || design.truth.sigma.cols() != 2) {
        throw DataError("simulation design: gamma must have 4 entries and sigma must be 2x2");
    }
    if (!(design.truth.sigma_e >= 0.0)) {
        throw DataError("simulation design: residual variance must be non-negative");
    }
    const CholeskyFactor sigma_factor = cholesky(design.truth.sigma);

    const auto J = static_cast<Eigen::Index>(design.times.size());
    // Covariates in formula order: treat, time.
    std::vector<std::string> ids;
    std::vector<Eigen::VectorXd> responses;
    std::vector<Eigen::MatrixXd> covariates;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    for (std::size_t i = 0; i < design.n; ++i) {
        const int t = design.treat[i];
        if (t != 0 && t != 1) {
            throw DataError("simulation design: treat labels must be 0 or 1");
        }
        Eigen::MatrixXd cov(J, 2);
        Eigen::MatrixXd X(J, 4), Z(J, 2);
        for (Eigen::Index j = 0; j < J; ++j) {
            const double time = design.times[static_cast<std::size_t>(j)];
            cov(j, 0) = t;
            cov(j, 1) = time;
            X.row(j) << 1.0, t, time, t * time;
            Z.row(j) << 1.0, time;
        }
        const Eigen::VectorXd b = mvnormal_draw(rng, zero, sigma_factor);
        Eigen::VectorXd y = X * design.truth.gamma + Z * b;
        for (Eigen::Index j = 0; j < J; ++j) {
            y(j) += normal_draw(rng, 0.0, design.truth.sigma_e);
        }
        ids.push_back(std::to_string(i + 1));
        responses.push_back(std::move(y));
        covariates.push_back(std::move(cov));
    }
    return make_dataset(formula, std::move(ids), std::move(responses), std::move(covariates));
}

std::vector<std::size_t> swap_treatment_labels(LongitudinalDataset& dataset, std::size_t count) {
    const auto& names = dataset.covariate_names;
    const auto treat_it = std::find(names.begin(), names.end(), "treat");
    const auto time_it = std::find(names.begin(), names.end(), "time");
    if (treat_it == names.end() || time_it == names.end()) {
        throw DataError("label swap needs 'treat' and 'time' columns");
    }
    const auto treat_col = static_cast<Eigen::Index>(treat_it - names.begin());
    const auto time_col = static_cast<Eigen::Index>(time_it - names.begin());

    std::vector<std::pair<double, std::size_t>> slopes;
    for (std::size_t i = 0; i < dataset.clusters.size(); ++i) {
        const auto& c = dataset.clusters[i];
        if (c.covariates(0, treat_col) != 1.0 || c.size() < 2) {
            continue;
        }
        const Eigen::VectorXd t = c.covariates.col(time_col);
        const Eigen::VectorXd tc = t.array() - t.mean();
        const double sxx = tc.squaredNorm();
        if (sxx <= 0.0) {
            continue;
        }
        slopes.emplace_back(tc.dot(c.y) / sxx, i);
    }
    if (slopes.size() < count) {
        throw DataError("not enough treated clusters to relabel");
    }
    std::stable_sort(slopes.begin(), slopes.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> swapped;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = slopes[k].second;
        auto& c = dataset.clusters[i];
        c.covariates.col(treat_col).setZero();
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            Eigen::RowVectorXd xr(dataset.p()), zr(dataset.q());
            design_rows(dataset.formula, names, c.covariates.row(j), xr, zr);
            c.X.row(j) = xr;
            c.Z.row(j) = zr;
        }
        swapped.push_back(i);
    }
    std::sort(swapped.begin(), swapped.end());
    return swapped;
}

}  // namespace lmmci
