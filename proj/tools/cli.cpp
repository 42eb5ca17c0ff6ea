#include "cli.hpp"

#include "mr2/dataset.hpp"
#include "mr2/diagnostics.hpp"
#include "mr2/errors.hpp"
#include "mr2/estimator.hpp"
#include "mr2/instruments.hpp"
#include "mr2/montecarlo.hpp"
#include "mr2/report.hpp"
#include "mr2/subsets.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

namespace mr2::cli {

namespace {

constexpr const char* kWeakGuidance =
    "Inspect the first-stage F statistic: a small value means the generated instruments "
    "barely predict the exposure. Consider a smaller k_dagger, more instruments or a "
    "larger sample.";

struct EstimateArgs {
    std::string data;
    std::string outcome;
    std::string exposure;
    std::string instruments;
    std::string covariates;
    std::vector<int> kdag{1};
    std::string variance = "sandwich";
    std::string method = "mr2";
    std::string valid;
    bool weighted = false;
    double smoothing = 0.0;
    bool hausman = false;
    std::string output;
};

struct SimulateArgs {
    std::string preset;
    std::string scenario;
    std::optional<std::size_t> reps;
    std::optional<std::uint64_t> seed;
    std::optional<long long> n;
    std::optional<int> kdag;
    std::optional<std::string> variance;
    std::string methods = "mr2,oracle,naive";
    unsigned threads = 0;
    std::string json;
    std::string table;
};

struct InstrumentArgs {
    std::string data;
    std::string instruments;
    std::string covariates;
    int kdag = 1;
    bool weighted = false;
    double smoothing = 0.0;
    bool partial_id = false;
    int k_total = 0;
    std::string output;
};

std::string trim(std::string s)
{
    auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

// "G1..G5" -> G1, G2, ..., G5; anything else is returned as is.
std::vector<std::string> expand_token(const std::string& token)
{
    const auto dots = token.find("..");
    if (dots == std::string::npos)
        return {token};
    const std::string lo = token.substr(0, dots);
    const std::string hi = token.substr(dots + 2);
    auto split = [](const std::string& s) {
        std::size_t d = s.size();
        while (d > 0 && std::isdigit(static_cast<unsigned char>(s[d - 1])))
            --d;
        return std::pair<std::string, std::string>{s.substr(0, d), s.substr(d)};
    };
    const auto [prefix_lo, num_lo] = split(lo);
    const auto [prefix_hi, num_hi] = split(hi);
    if (num_lo.empty() || num_hi.empty() || (!prefix_hi.empty() && prefix_hi != prefix_lo))
        throw ParameterError("cannot expand column range '" + token + "'");
    const int from = std::stoi(num_lo);
    const int to = std::stoi(num_hi);
    if (to < from)
        throw ParameterError("column range '" + token + "' is descending");
    std::vector<std::string> out;
    for (int i = from; i <= to; ++i)
        out.push_back(prefix_lo + std::to_string(i));
    return out;
}

std::vector<int> parse_indices(const std::string& spec)
{
    std::vector<int> out;
    for (const auto& name : expand_columns(spec)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(name, &used));
            if (used != name.size())
                throw std::invalid_argument(name);
        } catch (const std::exception&) {
            throw ParameterError("'" + name + "' is not an instrument index");
        }
    }
    return out;
}

void check_kdag(int kd, int k)
{
    if (kd < 1 || kd > k)
        throw ParameterError("k_dagger = " + std::to_string(kd) + " is out of range: it must lie in [1, " +
                             std::to_string(k) + "] for K = " + std::to_string(k) + " instruments");
}

// Runs `body` with either the named file or the fallback stream.
template <typename F>
void with_output(const std::string& path, std::ostream& fallback, F&& body)
{
    if (path.empty()) {
        body(fallback);
        return;
    }
    std::ofstream file(path);
    if (!file)
        throw DataError("cannot open '" + path + "' for writing");
    body(file);
    if (!file)
        throw DataError("failed writing '" + path + "'");
}

InstrumentMatrix make_instruments(const Dataset& d, int kd, bool weighted, double smoothing,
                                  bool covariates)
{
    const auto family = enumerate_family(d.k(), kd);
    if (weighted) {
        WeightOptions wo;
        wo.smoothing = smoothing;
        return build_weighted_instruments(d, family, estimate_weights(d, wo));
    }
    BuildOptions bo;
    bo.adjust_for_covariates = covariates;
    return build_instruments(d, family, bo);
}

int cmd_estimate(const EstimateArgs& a, std::ostream& out)
{
    const auto method = method_from_string(a.method);
    const auto mode = variance_mode_from_string(a.variance);
    CsvColumns cols{a.outcome, a.exposure, expand_columns(a.instruments),
                    a.covariates.empty() ? std::vector<std::string>{} : expand_columns(a.covariates)};
    if (cols.instruments.empty())
        throw ParameterError("at least one instrument column is required");
    const bool covariates = !cols.covariates.empty();
    if (a.weighted && covariates)
        throw ParameterError("--weighted and --covariates cannot be combined");
    if (method != Method::Mr2 && (covariates || a.weighted))
        throw ParameterError("--covariates and --weighted apply to the mr2 method only");
    if (method != Method::Mr2 && a.kdag.size() > 1)
        throw ParameterError("several --kdag values apply to the mr2 method only");
    if (a.hausman && a.kdag.size() < 2)
        throw ParameterError("--hausman needs at least two --kdag values");
    if (method == Method::Oracle && a.valid.empty())
        throw ParameterError("--method oracle needs --valid");

    const Dataset d = load_csv(a.data, cols);

    auto annotate = [&](const FitResult& fit) {
        auto j = to_json(fit);
        j["variance_mode"] = to_string(mode);
        j["se"] = std::sqrt(fit.variance(mode));
        return j;
    };

    std::vector<FitResult> fits;
    switch (method) {
    case Method::Mr2:
        for (int kd : a.kdag)
            check_kdag(kd, d.k());
        for (int kd : a.kdag) {
            const auto z = make_instruments(d, kd, a.weighted, a.smoothing, covariates);
            FitOptions fo;
            fo.include_covariates = covariates;
            fits.push_back(fit_2sls(d, z, fo));
        }
        break;
    case Method::Oracle:
        fits.push_back(fit_oracle_2sls(d, parse_indices(a.valid)));
        break;
    case Method::Naive:
        fits.push_back(fit_naive_2sls(d));
        break;
    case Method::Ratio:
        fits.push_back(fit_ratio(d));
        break;
    }

    nlohmann::ordered_json result;
    if (fits.size() == 1) {
        result = annotate(fits.front());
    } else {
        result["fits"] = nlohmann::ordered_json::array();
        for (const auto& f : fits)
            result["fits"].push_back(annotate(f));
        if (a.hausman) {
            // the smallest k_dagger is the most robust reference
            const auto ref = std::min_element(fits.begin(), fits.end(), [](const auto& x, const auto& y) {
                return x.k_dagger < y.k_dagger;
            });
            result["hausman"] = nlohmann::ordered_json::array();
            for (const auto& f : fits)
                if (&f != &*ref)
                    result["hausman"].push_back(to_json(hausman_test(*ref, f, mode)));
        }
    }
    with_output(a.output, out, [&](std::ostream& o) { o << result.dump(2) << '\n'; });
    return kOk;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err)
{
    if (a.preset.empty() == a.scenario.empty())
        throw ParameterError("give exactly one of --preset or --scenario");
    McScenario s = a.preset.empty() ? load_scenario(a.scenario) : preset(a.preset);
    if (a.reps)
        s.reps = *a.reps;
    if (a.seed)
        s.seed = *a.seed;
    if (a.n)
        s.n = static_cast<Eigen::Index>(*a.n);
    if (a.kdag) {
        check_kdag(*a.kdag, s.K);
        s.k_dagger = *a.kdag;
    }
    if (a.variance)
        s.variance = variance_mode_from_string(*a.variance);
    s.validate();

    std::vector<Method> methods;
    for (const auto& name : expand_columns(a.methods)) {
        const auto m = method_from_string(name);
        if (m == Method::Oracle && s.valid_indices().empty()) {
            err << "note: no valid instrument in the design, oracle 2SLS skipped\n";
            continue;
        }
        methods.push_back(m);
    }

    const auto report = run(s, methods, a.threads);
    with_output(a.json, out, [&](std::ostream& o) { o << to_json(report).dump(2) << '\n'; });
    std::ostream& table_fallback = a.json.empty() ? err : out;
    with_output(a.table, table_fallback, [&](std::ostream& o) { o << format_table(report); });
    return kOk;
}

int cmd_instruments(const InstrumentArgs& a, std::ostream& out)
{
    if (a.partial_id) {
        if (a.k_total < 1)
            throw ParameterError("--partial-id needs --K >= 1");
        check_kdag(a.kdag, a.k_total);
        const auto sets = partial_id_interactions(a.k_total, a.kdag);
        with_output(a.output, out, [&](std::ostream& o) {
            o << "order,set\n";
            for (const auto& s : sets) {
                o << s.size() << ',';
                for (std::size_t i = 0; i < s.size(); ++i)
                    o << (i ? " " : "") << s[i];
                o << '\n';
            }
        });
        return kOk;
    }

    if (a.data.empty())
        throw ParameterError("--data is required unless --partial-id is given");
    CsvColumns cols{"", "", a.instruments.empty() ? std::vector<std::string>{} : expand_columns(a.instruments),
                    a.covariates.empty() ? std::vector<std::string>{} : expand_columns(a.covariates)};
    if (cols.instruments.empty())
        throw ParameterError("at least one instrument column is required");
    const bool covariates = !cols.covariates.empty();
    if (a.weighted && covariates)
        throw ParameterError("--weighted and --covariates cannot be combined");
    const Dataset d = load_csv(a.data, cols);
    check_kdag(a.kdag, d.k());
    const auto z = make_instruments(d, a.kdag, a.weighted, a.smoothing, covariates);

    with_output(a.output, out, [&](std::ostream& o) {
        const auto names = z.column_names();
        for (std::size_t j = 0; j < names.size(); ++j)
            o << (j ? "," : "") << names[j];
        if (z.row_weights)
            o << ",weight";
        o << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
        for (Eigen::Index i = 0; i < z.z.rows(); ++i) {
            for (Eigen::Index j = 0; j < z.z.cols(); ++j)
                o << (j ? "," : "") << z.z(i, j);
            if (z.row_weights)
                o << ',' << (*z.row_weights)(i);
            o << '\n';
        }
    });
    return kOk;
}

}  // namespace

std::vector<std::string> expand_columns(const std::string& spec)
{
    std::vector<std::string> out;
    std::stringstream ss(spec);
    std::string token;
    while (std::getline(ss, token, ',')) {
        token = trim(token);
        if (token.empty())
            continue;
        for (auto& name : expand_token(token))
            out.push_back(std::move(name));
    }
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Multiply robust instrumental-variable estimation with many candidate instruments"};
    app.name("mr2");
    app.require_subcommand(1);

    EstimateArgs ea;
    auto* est = app.add_subcommand("estimate", "Fit the effect of an exposure on an outcome and print JSON");
    est->add_option("--data", ea.data, "CSV file with a header row")->required();
    est->add_option("--outcome", ea.outcome, "Outcome column")->required();
    est->add_option("--exposure", ea.exposure, "Exposure column")->required();
    est->add_option("--instruments", ea.instruments,
                    "Candidate instrument columns, comma separated; ranges like G1..G5 expand")
        ->required();
    est->add_option("--covariates", ea.covariates,
                    "Covariate columns; instruments are centered on linear fits in them");
    est->add_option("--kdag", ea.kdag, "Assumed minimum number of valid instruments; a comma list fits each")
        ->delimiter(',')
        ->capture_default_str();
    est->add_option("--variance", ea.variance, "Variance used for 'se': sandwich or homoskedastic")
        ->capture_default_str();
    est->add_option("--method", ea.method, "mr2, oracle, naive or ratio")->capture_default_str();
    est->add_option("--valid", ea.valid, "1-based indices of the valid instruments (oracle method)");
    est->add_flag("--weighted", ea.weighted, "Density-ratio weighting for correlated binary instruments");
    est->add_option("--smoothing", ea.smoothing, "Additive cell count for the weighting pmf")
        ->capture_default_str();
    est->add_flag("--hausman", ea.hausman, "Compare the smallest k_dagger fit with each other fit");
    est->add_option("--output", ea.output, "Write JSON here instead of stdout");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo design and report bias, spread and coverage");
    auto* preset_opt = sim->add_option("--preset", sa.preset, "Built-in design: table1-block1 ... table4-block3");
    auto* scen_opt = sim->add_option("--scenario", sa.scenario, "Scenario file of 'key = value' lines");
    preset_opt->excludes(scen_opt);
    sim->add_option("--reps", sa.reps, "Override the replication count");
    sim->add_option("--seed", sa.seed, "Override the master seed");
    sim->add_option("--n", sa.n, "Override the sample size");
    sim->add_option("--kdag", sa.kdag, "Override k_dagger of the MR2 estimator");
    sim->add_option("--variance", sa.variance, "sandwich or homoskedastic");
    sim->add_option("--methods", sa.methods, "Estimators to run")->capture_default_str();
    sim->add_option("--threads", sa.threads, "Worker threads (0 = all cores)")
        ->envname("MR2_THREADS")
        ->capture_default_str();
    sim->add_option("--json", sa.json, "Write the JSON report here instead of stdout");
    sim->add_option("--table", sa.table,
                    "Write the text table here (default: stderr, or stdout when --json names a file)");

    InstrumentArgs ia;
    auto* ins = app.add_subcommand("instruments", "Export generated instruments or interaction index sets as CSV");
    ins->add_option("--data", ia.data, "CSV file with a header row");
    ins->add_option("--instruments", ia.instruments, "Candidate instrument columns; ranges like G1..G5 expand");
    ins->add_option("--covariates", ia.covariates, "Covariate columns used for centering");
    ins->add_option("--kdag", ia.kdag, "Assumed minimum number of valid instruments")->capture_default_str();
    ins->add_flag("--weighted", ia.weighted, "Weighted centering; adds a weight column");
    ins->add_option("--smoothing", ia.smoothing, "Additive cell count for the weighting pmf")
        ->capture_default_str();
    ins->add_flag("--partial-id", ia.partial_id,
                  "List the interaction sets whose coefficients stay identified");
    ins->add_option("--K", ia.k_total, "Instrument count for --partial-id");
    ins->add_option("--output", ia.output, "Write CSV here instead of stdout");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (est->parsed())
            return cmd_estimate(ea, out);
        if (sim->parsed())
            return cmd_simulate(sa, out, err);
        return cmd_instruments(ia, out);
    } catch (const WeakIdentificationError& e) {
        err << "error: weak identification: " << e.what() << '\n' << kWeakGuidance << '\n';
        return kWeakIdentification;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const CapacityError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const AggregationError& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace mr2::cli
