#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "lmmci/bootstrap.hpp"
#include "lmmci/data.hpp"
#include "lmmci/error.hpp"
#include "lmmci/estimation.hpp"
#include "lmmci/formula.hpp"
#include "lmmci/intervals.hpp"
#include "lmmci/parallel.hpp"
#include "lmmci/random.hpp"
#include "lmmci/report.hpp"
#include "lmmci/robust.hpp"
#include "lmmci/serialize.hpp"

namespace lmmci {

namespace {

struct Settings {
    std::string data;
    std::string formula;
    std::string method;
    std::string estimator = "ml";
    std::string boot_type = "wild";
    std::size_t nsim = 5000;
    double level = 0.95;
    std::string parm;
    std::string cluster_id;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string output = "text";
    std::string out;
    std::string design;
    std::string methods = "ml,robust";
    std::string confint;
    double k = 1.345;
    std::string verify;
    std::string estimates_csv;
    bool provenance = false;
};

// A numerical failure that is not an exception from the library, such as a
// fit that stops without converging.
struct Failure {
    std::string message;
};

unsigned threads_from_environment() {
    if (const char* env = std::getenv("LMMCI_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) {
                return static_cast<unsigned>(v);
            }
        } catch (const std::exception&) {
        }
    }
    return default_thread_count();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Json parse_json_file(const std::string& path) {
    try {
        return Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw DataError("'" + path + "' is not valid JSON: " + e.what());
    }
}

// Config keys are flag names without the leading dashes; either '-' or '_'
// may separate words. Flags given on the command line win because they come
// later and every option keeps its last value.
std::vector<std::string> config_arguments(const std::string& path) {
    const Json doc = parse_json_file(path);
    if (!doc.is_object()) {
        throw DataError("config '" + path + "' must be a JSON object");
    }
    std::vector<std::string> out;
    for (const auto& [key, value] : doc.items()) {
        std::string flag = "--" + key;
        std::replace(flag.begin() + 2, flag.end(), '_', '-');
        if (value.is_boolean()) {
            if (value.get<bool>()) {
                out.push_back(flag);
            }
            continue;
        }
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_array()) {
            for (const auto& item : value) {
                if (!text.empty()) {
                    text += ',';
                }
                text += item.is_string() ? item.get<std::string>() : item.dump();
            }
        } else if (value.is_number()) {
            text = value.dump();
        } else {
            throw DataError("config key '" + key + "' has an unsupported value");
        }
        out.push_back(flag);
        out.push_back(text);
    }
    return out;
}

std::vector<std::string> expand_config(std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (path.empty() || args.empty()) {
        return args;
    }
    const auto extra = config_arguments(path);
    args.insert(args.begin() + 1, extra.begin(), extra.end());
    return args;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream s(text);
    std::string item;
    while (std::getline(s, item, ',')) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b != std::string::npos) {
            out.push_back(item.substr(b, e - b + 1));
        }
    }
    return out;
}

void require(const std::string& value, const std::string& flag) {
    if (value.empty()) {
        throw DataError(flag + " is required");
    }
}

LongitudinalDataset load_data(const Settings& s) {
    require(s.data, "--data");
    require(s.formula, "--formula");
    return read_csv(s.data, parse_formula(s.formula));
}

void check_output(const Settings& s) {
    if (s.output != "text" && s.output != "json" && s.output != "csv") {
        throw DataError("--output must be text, json or csv");
    }
}

void emit(const Settings& s, const std::string& text, std::ostream& out) {
    if (s.out.empty()) {
        out << text;
        return;
    }
    std::ofstream file(s.out, std::ios::binary);
    if (!file) {
        throw DataError("cannot write '" + s.out + "'");
    }
    file << text;
}

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n") == std::string::npos) {
        return text;
    }
    std::string quoted = "\"";
    for (char c : text) {
        if (c == '"') {
            quoted += '"';
        }
        quoted += c;
    }
    return quoted + '"';
}

std::string full_number(double v) {
    return Json(v).dump();
}

FitResult fit_checked(const LongitudinalDataset& data, const Estimator& estimator) {
    FitResult result = fit_with(data, estimator);
    if (!result.converged) {
        throw Failure{to_string(estimator.method) + " fit did not converge after " + std::to_string(result.n_iter) +
                      " iterations"};
    }
    return result;
}

Estimator estimator_of(const std::string& name, double k) {
    Estimator e;
    e.method = parse_fit_method(name);
    e.robust.k = k;
    return e;
}

Json base_config(const std::string& command, const Settings& s) {
    Json c;
    if (command != "simulate") {
        c["data"] = s.data;
        c["formula"] = s.formula;
    }
    return c;
}

void add_provenance(Json& doc, const Settings& s, std::chrono::steady_clock::time_point start) {
    if (!s.provenance) {
        return;
    }
    doc["config"]["threads"] = s.threads;
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    doc["timing"] = Json{{"seconds", elapsed.count()}};
}

CiOptions ci_options(const Settings& s, const std::string& method) {
    CiOptions o;
    o.method = parse_ci_method(method);
    o.boot_type = parse_boot_scheme(s.boot_type);
    o.nsim = s.nsim;
    o.level = s.level;
    if (!s.parm.empty()) {
        o.parm = parse_parm_list(s.parm);
    }
    if (!s.cluster_id.empty()) {
        o.cluster_id = s.cluster_id;
    }
    if (o.method == CiMethod::BCa && !o.cluster_id) {
        throw DataError("--cluster-id is required with --method bca (it names the cluster variable for the jackknife)");
    }
    if (!(s.level > 0.0 && s.level < 1.0)) {
        throw DataError("--level must lie strictly between 0 and 1");
    }
    if (o.method != CiMethod::Wald && s.nsim < 2) {
        throw DataError("--nsim must be at least 2");
    }
    o.seed = s.seed;
    o.threads = std::max(1u, s.threads);
    o.robust.k = s.k;
    return o;
}

Json ci_config(const Settings& s, const std::string& method) {
    Json c;
    c["method"] = method;
    if (parse_ci_method(method) != CiMethod::Wald) {
        c["boot_type"] = s.boot_type;
        c["nsim"] = s.nsim;
        c["seed"] = s.seed;
    }
    c["level"] = s.level;
    if (!s.parm.empty()) {
        c["parm"] = s.parm;
    }
    if (!s.cluster_id.empty()) {
        c["cluster_id"] = s.cluster_id;
    }
    return c;
}

int cmd_fit(const Settings& s, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    check_output(s);
    const std::string method = s.method.empty() ? "ml" : s.method;
    const LongitudinalDataset data = load_data(s);
    const FitResult result = fit_checked(data, estimator_of(method, s.k));

    if (s.output == "json") {
        Json doc;
        doc["command"] = "fit";
        doc["config"] = base_config("fit", s);
        doc["config"]["method"] = method;
        doc["fit"] = fit_to_json(result, data);
        add_provenance(doc, s, start);
        emit(s, doc.dump(2) + "\n", out);
    } else if (s.output == "csv") {
        std::string text = "parameter,estimate,std_error\n";
        const auto rep = result.reported();
        for (std::size_t k = 0; k < rep.names.size(); ++k) {
            text += csv_field(rep.names[k]) + "," + full_number(rep.values[k]) + ",";
            if (k < result.names.fixed.size()) {
                text += full_number(result.se_gamma(static_cast<Eigen::Index>(k)));
            }
            text += "\n";
        }
        emit(s, text, out);
    } else {
        emit(s, format_fit(result, data), out);
    }
    return 0;
}

bool verify_against(const std::string& path, const Json& current, std::ostream& err) {
    const Json saved = parse_json_file(path);
    bool ok = true;
    for (const char* key : {"fit", "ci_table"}) {
        if (!current.contains(key)) {
            continue;
        }
        const Json& now = current[key];
        const char* field = std::string(key) == "fit" ? "parameters" : "rows";
        if (!saved.contains(key) || !saved[key].contains(field) || saved[key][field] != now[field]) {
            err << "verify: " << key << "." << field << " differs from '" << path << "'\n";
            ok = false;
        }
    }
    return ok;
}

int cmd_confint(const Settings& s, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    check_output(s);
    const std::string method = s.method.empty() ? "boot" : s.method;
    const CiOptions options = ci_options(s, method);
    const LongitudinalDataset data = load_data(s);
    const FitResult result = fit_checked(data, estimator_of(s.estimator, s.k));
    const CiTable table = confint(result, data, options);

    Json doc;
    doc["command"] = "confint";
    doc["config"] = base_config("confint", s);
    doc["config"]["estimator"] = s.estimator;
    doc["config"].update(ci_config(s, method));
    doc["fit"] = fit_to_json(result, data);
    doc["ci_table"] = ci_table_to_json(table);
    if (table.full_results) {
        doc["full_results"] = full_results_to_json(*table.full_results, result.names.labels());
    }

    if (!s.estimates_csv.empty() && table.full_results) {
        std::ofstream file(s.estimates_csv, std::ios::binary);
        if (!file) {
            throw DataError("cannot write '" + s.estimates_csv + "'");
        }
        file << bootstrap_to_csv(table.full_results->bootstrap);
    }

    for (const auto& w : table.warnings) {
        err << "warning: " << w << '\n';
    }
    if (s.output == "json") {
        add_provenance(doc, s, start);
        emit(s, doc.dump(2) + "\n", out);
    } else if (s.output == "csv") {
        const auto [lo, hi] = bound_labels(table.level);
        std::string text = "parameter," + csv_field(lo) + "," + csv_field(hi) + "\n";
        for (const auto& r : table.rows) {
            text += csv_field(r.name) + "," + full_number(r.lower) + "," + full_number(r.upper) + "\n";
        }
        emit(s, text, out);
    } else {
        emit(s, format_ci_table(table), out);
    }

    if (!s.verify.empty() && !verify_against(s.verify, doc, err)) {
        return 3;
    }
    return 0;
}

int cmd_simulate(const Settings& s, std::ostream& out, const std::vector<std::string>& given) {
    check_output(s);
    require(s.out, "--out");
    SimulationSpec spec;
    if (s.design.empty()) {
        spec.design = medsim_design();
        spec.seed = s.seed;
    } else {
        spec = simulation_from_json(parse_json_file(s.design));
    }
    if (std::find(given.begin(), given.end(), "seed") != given.end()) {
        spec.seed = s.seed;
    }
    RandomStream rng(spec.seed, 0);
    const LongitudinalDataset data = simulate_dataset(spec.design, rng);
    write_csv(data, s.out);

    const ReportedParameters truth = to_reported(spec.design.truth, ParameterNames::of(data));
    if (s.output == "json") {
        Json doc;
        doc["command"] = "simulate";
        doc["config"] = simulation_to_json(spec);
        doc["config"]["out"] = s.out;
        doc["rows"] = data.total_rows();
        Json rows = Json::array();
        for (std::size_t k = 0; k < truth.names.size(); ++k) {
            rows.push_back(Json{{"name", truth.names[k]}, {"value", truth.values[k]}});
        }
        doc["truth"] = rows;
        out << doc.dump(2) << "\n";
    } else {
        std::ostringstream text;
        text << "Wrote " << data.total_rows() << " rows for " << data.n() << " clusters to " << s.out << "\n";
        text << "True parameters:\n";
        std::size_t width = 0;
        for (const auto& n : truth.names) {
            width = std::max(width, n.size());
        }
        for (std::size_t k = 0; k < truth.names.size(); ++k) {
            text << "  " << truth.names[k] << std::string(width - truth.names[k].size() + 2, ' ')
                 << format_number(truth.values[k]) << "\n";
        }
        out << text.str();
    }
    return 0;
}

int cmd_compare(const Settings& s, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    check_output(s);
    if (s.output == "csv") {
        throw DataError("compare supports --output text or json");
    }
    const auto names = split_list(s.methods);
    if (names.size() != 2) {
        throw DataError("--methods needs exactly two estimators, for example ml,robust");
    }
    const LongitudinalDataset data = load_data(s);
    std::optional<CiOptions> options;
    if (!s.confint.empty()) {
        options = ci_options(s, s.confint);
    }

    std::vector<FitResult> fits;
    std::vector<CiTable> tables;
    for (const auto& name : names) {
        fits.push_back(fit_checked(data, estimator_of(name, s.k)));
        if (options) {
            tables.push_back(confint(fits.back(), data, *options));
        }
    }

    const std::string label_a = "model." + to_string(fits[0].method);
    const std::string label_b = "model." + to_string(fits[1].method);
    if (s.output == "json") {
        Json doc;
        doc["command"] = "compare";
        doc["config"] = base_config("compare", s);
        doc["config"]["methods"] = names;
        if (options) {
            doc["config"]["confint"] = ci_config(s, s.confint);
        }
        doc["fits"] = Json::array();
        for (const auto& f : fits) {
            doc["fits"].push_back(fit_to_json(f, data));
        }
        if (options) {
            doc["ci_tables"] = Json::array();
            for (const auto& t : tables) {
                doc["ci_tables"].push_back(ci_table_to_json(t));
            }
        }
        add_provenance(doc, s, start);
        emit(s, doc.dump(2) + "\n", out);
    } else {
        emit(s,
             format_compare(label_a, fits[0], label_b, fits[1], options ? &tables[0] : nullptr,
                            options ? &tables[1] : nullptr),
             out);
    }
    return 0;
}

void add_data_flags(CLI::App* cmd, Settings& s) {
    cmd->add_option("--data", s.data, "CSV file with one row per observation");
    cmd->add_option("--formula", s.formula, "model formula, e.g. \"pos ~ treat * time + (time | id)\"");
    cmd->add_option("--k", s.k, "Huber tuning constant for robust fits")->check(CLI::PositiveNumber);
}

void add_output_flags(CLI::App* cmd, Settings& s) {
    cmd->add_option("--output", s.output, "text, json or csv");
    cmd->add_option("--out", s.out, "write the result to this file instead of stdout");
    cmd->add_flag("--provenance", s.provenance, "record thread count and timing in JSON output");
}

void add_ci_flags(CLI::App* cmd, Settings& s) {
    cmd->add_option("--boot-type", s.boot_type, "wild or parametric");
    cmd->add_option("--nsim", s.nsim, "number of bootstrap replicates");
    cmd->add_option("--level", s.level, "confidence level");
    cmd->add_option("--parm", s.parm, "comma-separated parameter names or 1-based indices");
    cmd->add_option("--cluster-id", s.cluster_id, "cluster variable, needed for bca");
    cmd->add_option("--seed", s.seed, "random seed");
    cmd->add_option("--threads", s.threads, "worker threads (default: LMMCI_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    Settings s;
    s.threads = threads_from_environment();

    CLI::App app{"Linear mixed models with bootstrap confidence intervals", "lmmci"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_version_flag("--version", "lmmci 1.0.0");

    auto* fit_cmd = app.add_subcommand("fit", "fit a model and print estimates");
    add_data_flags(fit_cmd, s);
    fit_cmd->add_option("--method", s.method, "ml, reml or robust");
    add_output_flags(fit_cmd, s);

    auto* ci_cmd = app.add_subcommand("confint", "confidence intervals for model parameters");
    add_data_flags(ci_cmd, s);
    ci_cmd->add_option("--method", s.method, "wald, boot or bca");
    ci_cmd->add_option("--estimator", s.estimator, "ml, reml or robust");
    add_ci_flags(ci_cmd, s);
    add_output_flags(ci_cmd, s);
    ci_cmd->add_option("--verify", s.verify, "compare estimates and intervals with a saved JSON result");
    ci_cmd->add_option("--estimates-csv", s.estimates_csv, "write the bootstrap estimate matrix to this file");

    auto* sim_cmd = app.add_subcommand("simulate", "simulate a longitudinal dataset");
    sim_cmd->add_option("--design", s.design, "design JSON (default: the medsim design)");
    sim_cmd->add_option("--seed", s.seed, "random seed");
    sim_cmd->add_option("--out", s.out, "output CSV file");
    sim_cmd->add_option("--output", s.output, "text or json summary");

    auto* cmp_cmd = app.add_subcommand("compare", "fit two estimators side by side");
    add_data_flags(cmp_cmd, s);
    cmp_cmd->add_option("--methods", s.methods, "two estimators, e.g. ml,robust");
    cmp_cmd->add_option("--confint", s.confint, "also compare intervals: wald, boot or bca");
    add_ci_flags(cmp_cmd, s);
    add_output_flags(cmp_cmd, s);

    try {
        std::vector<std::string> args = expand_config(raw_args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (fit_cmd->parsed()) {
            return cmd_fit(s, out);
        }
        if (ci_cmd->parsed()) {
            return cmd_confint(s, out, err);
        }
        if (sim_cmd->parsed()) {
            std::vector<std::string> given;
            if (sim_cmd->count("--seed") > 0) {
                given.emplace_back("seed");
            }
            return cmd_simulate(s, out, given);
        }
        return cmd_compare(s, out);
    } catch (const Failure& f) {
        err << "error: " << f.message << '\n';
        return 3;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace lmmci
