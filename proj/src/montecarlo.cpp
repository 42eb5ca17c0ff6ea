#include "mr2/montecarlo.hpp"

#include "mr2/errors.hpp"
#include "mr2/instruments.hpp"
#include "mr2/subsets.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

namespace mr2 {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& key, const std::string& value)
{
    std::vector<double> out;
    std::string cell;
    std::string cleaned = value;
    std::replace(cleaned.begin(), cleaned.end(), '(', ' ');
    std::replace(cleaned.begin(), cleaned.end(), ')', ' ');
    std::stringstream ss(cleaned);
    while (std::getline(ss, cell, ',')) {
        cell = trim(cell);
        if (cell.empty())
            continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
            if (used != cell.size())
                throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw ParameterError("scenario key '" + key + "': cannot parse '" + cell + "'");
        }
    }
    return out;
}

double parse_number(const std::string& key, const std::string& value)
{
    const auto v = parse_list(key, value);
    if (v.size() != 1)
        throw ParameterError("scenario key '" + key + "' expects a single number");
    return v.front();
}

bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes")
        return true;
    if (value == "false" || value == "0" || value == "no")
        return false;
    throw ParameterError("scenario key '" + key + "' expects true/false");
}

std::vector<std::uint64_t> masks_of_order(int k, int order)
{
    std::vector<std::uint64_t> out;
    for (std::uint64_t m = 1; m < (std::uint64_t{1} << k); ++m)
        if (std::popcount(m) == order)
            out.push_back(m);
    return out;
}

void sample_into(std::vector<std::uint64_t> pool, double gamma, std::mt19937_64& rng,
                 std::vector<std::uint64_t>& out)
{
    const auto take = static_cast<std::size_t>(std::lround(gamma * static_cast<double>(pool.size())));
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        out.push_back(pool[i]);
    }
}

McScenario identity_block(const std::string& name, std::vector<double> beta)
{
    McScenario s;
    s.name = name;
    s.link = Link::IdentityFull;
    s.C = 0.6;
    s.beta_direct = std::move(beta);
    return s;
}

const std::vector<double> kHolds{0, 0, 0, 0.2, 0.2};
const std::vector<double> kPlurality{0, 0, 0.1, 0.2, 0.3};
const std::vector<double> kBothViolated{0, 0, 0.2, 0.2, 0.2};

const std::map<std::string, McScenario>& presets()
{
    static const std::map<std::string, McScenario> table = [] {
        std::map<std::string, McScenario> t;
        auto add = [&](McScenario s) { t.emplace(s.name, std::move(s)); };

        add(identity_block("table1-block1", kHolds));
        add(identity_block("table1-block2", kPlurality));
        add(identity_block("table1-block3", kBothViolated));

        auto sparse = [&](const std::string& name, std::vector<double> beta, double gamma) {
            McScenario s = identity_block(name, std::move(beta));
            s.link = Link::IdentitySparse;
            s.gamma = gamma;
            add(s);
        };
        sparse("table2-block1", kHolds, 0.3);
        sparse("table2-block2", kHolds, 0.6);
        sparse("table2-block3", kBothViolated, 0.3);
        sparse("table2-block4", kBothViolated, 0.6);

        auto single_index = [&](const std::string& prefix, Link link) {
            const std::vector<double>* betas[] = {&kHolds, &kPlurality, &kBothViolated};
            for (int b = 0; b < 3; ++b) {
                McScenario s = identity_block(prefix + "-block" + std::to_string(b + 1), *betas[b]);
                s.link = link;
                s.C = 1.0;
                add(s);
            }
        };
        single_index("table3", Link::Log);
        single_index("table4", Link::Probit);
        return t;
    }();
    return table;
}

}  // namespace

std::string to_string(Link link)
{
    switch (link) {
    case Link::IdentityFull: return "identity_full_interactions";
    case Link::IdentitySparse: return "identity_sparse";
    case Link::Log: return "log_main_effects";
    case Link::Probit: return "probit_threshold";
    }
    return "unknown";
}

Link link_from_string(const std::string& s)
{
    if (s == "identity_full_interactions" || s == "identity")
        return Link::IdentityFull;
    if (s == "identity_sparse" || s == "sparse")
        return Link::IdentitySparse;
    if (s == "log_main_effects" || s == "log")
        return Link::Log;
    if (s == "probit_threshold" || s == "probit")
        return Link::Probit;
    throw ParameterError("unknown link '" + s +
                         "' (expected identity_full_interactions, identity_sparse, "
                         "log_main_effects or probit_threshold)");
}

void McScenario::validate() const
{
    if (n < 2)
        throw ParameterError("scenario n must be at least 2");
    if (K < 1 || K > 20)
        throw ParameterError("scenario K must lie in [1, 20]");
    if (!(p > 0.0 && p < 1.0))
        throw ParameterError("allele frequency p must lie strictly between 0 and 1");
    if (static_cast<int>(beta_direct.size()) != K)
        throw ParameterError("beta_direct has " + std::to_string(beta_direct.size()) +
                             " entries, expected K = " + std::to_string(K));
    if (reps < 1)
        throw ParameterError("reps must be at least 1");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw ParameterError("gamma must lie in [0, 1]");
    if (k_dagger < 1 || k_dagger > K)
        throw ParameterError("k_dagger must lie in [1, K]");
    if (!error_cov.allFinite() || std::abs(error_cov(0, 1) - error_cov(1, 0)) > 0.0 ||
        !(error_cov(0, 0) > 0.0) ||
        !(error_cov.determinant() > 0.0))
        throw ParameterError("error_cov must be symmetric positive definite");
    for (double b : beta_direct)
        if (!std::isfinite(b))
            throw ParameterError("beta_direct entries must be finite");
}

IndexTuple McScenario::valid_indices() const
{
    IndexTuple out;
    for (std::size_t s = 0; s < beta_direct.size(); ++s)
        if (beta_direct[s] == 0.0)
            out.push_back(static_cast<int>(s) + 1);
    return out;
}

std::vector<std::string> preset_names()
{
    std::vector<std::string> out;
    for (const auto& [name, _] : presets())
        out.push_back(name);
    return out;
}

McScenario preset(const std::string& name)
{
    const auto& t = presets();
    auto it = t.find(name);
    if (it == t.end()) {
        std::string list;
        for (const auto& n : preset_names())
            list += (list.empty() ? "" : ", ") + n;
        throw ParameterError("unknown preset '" + name + "'; available: " + list);
    }
    return it->second;
}

McScenario parse_scenario(std::istream& in)
{
    McScenario s;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParameterError("scenario line " + std::to_string(line_no) +
                                 ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "name")
            s.name = value;
        else if (key == "n")
            s.n = static_cast<Eigen::Index>(parse_number(key, value));
        else if (key == "K")
            s.K = static_cast<int>(parse_number(key, value));
        else if (key == "p")
            s.p = parse_number(key, value);
        else if (key == "beta_direct")
            s.beta_direct = parse_list(key, value);
        else if (key == "link")
            s.link = link_from_string(value);
        else if (key == "C")
            s.C = parse_number(key, value);
        else if (key == "gamma")
            s.gamma = parse_number(key, value);
        else if (key == "freeze_sparse_set")
            s.freeze_sparse_set = parse_bool(key, value);
        else if (key == "beta_a")
            s.beta_a = parse_number(key, value);
        else if (key == "error_cov") {
            const auto v = parse_list(key, value);
            if (v.size() != 3)
                throw ParameterError("error_cov expects 'var1, cov, var2'");
            s.error_cov << v[0], v[1], v[1], v[2];
        } else if (key == "reps")
            s.reps = static_cast<std::size_t>(parse_number(key, value));
        else if (key == "seed")
            s.seed = static_cast<std::uint64_t>(parse_number(key, value));
        else if (key == "k_dagger")
            s.k_dagger = static_cast<int>(parse_number(key, value));
        else if (key == "variance")
            s.variance = variance_mode_from_string(value);
        else
            throw ParameterError("scenario line " + std::to_string(line_no) + ": unknown key '" +
                                 key + "'");
    }
    s.validate();
    return s;
}

McScenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open scenario file '" + path.string() + "'");
    return parse_scenario(in);
}

std::string format_scenario(const McScenario& s)
{
    std::ostringstream out;
    out << std::setprecision(17);
    out << "name = " << s.name << '\n'
        << "n = " << s.n << '\n'
        << "K = " << s.K << '\n'
        << "p = " << s.p << '\n'
        << "beta_direct = ";
    for (std::size_t i = 0; i < s.beta_direct.size(); ++i)
        out << (i ? ", " : "") << s.beta_direct[i];
    out << '\n'
        << "link = " << to_string(s.link) << '\n'
        << "C = " << s.C << '\n'
        << "gamma = " << s.gamma << '\n'
        << "freeze_sparse_set = " << (s.freeze_sparse_set ? "true" : "false") << '\n'
        << "beta_a = " << s.beta_a << '\n'
        << "error_cov = " << s.error_cov(0, 0) << ", " << s.error_cov(0, 1) << ", "
        << s.error_cov(1, 1) << '\n'
        << "reps = " << s.reps << '\n'
        << "seed = " << s.seed << '\n'
        << "k_dagger = " << s.k_dagger << '\n'
        << "variance = " << to_string(s.variance) << '\n';
    return out.str();
}

std::uint64_t replication_seed(std::uint64_t master_seed, std::size_t rep_index)
{
    return splitmix64(splitmix64(master_seed) + static_cast<std::uint64_t>(rep_index));
}

std::vector<std::uint64_t> sparse_interactions(const McScenario& s, std::mt19937_64& rng)
{
    const int active = static_cast<int>(
        std::count_if(s.beta_direct.begin(), s.beta_direct.end(), [](double b) { return b != 0.0; }));
    std::vector<std::uint64_t> lower;
    std::vector<std::uint64_t> higher;
    for (int order = 2; order <= s.K; ++order) {
        auto masks = masks_of_order(s.K, order);
        auto& group = order <= active ? lower : higher;
        group.insert(group.end(), masks.begin(), masks.end());
    }
    std::vector<std::uint64_t> out;
    sample_into(std::move(lower), s.gamma, rng, out);
    sample_into(std::move(higher), s.gamma, rng, out);
    return out;
}

Dataset generate(const McScenario& s, std::size_t rep_index)
{
    std::mt19937_64 rng(replication_seed(s.seed, rep_index));

    std::vector<std::uint64_t> interactions;
    if (s.link == Link::IdentitySparse) {
        interactions = sparse_interactions(s, rng);
        if (s.freeze_sparse_set) {
            std::mt19937_64 first(replication_seed(s.seed, 1));
            interactions = sparse_interactions(s, first);
        }
    }

    const Eigen::Index n = s.n;
    const int k = s.K;
    const Eigen::Matrix2d chol = s.error_cov.llt().matrixL();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    Eigen::MatrixXd g(n, k);
    Eigen::VectorXd a(n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::uint64_t mask = 0;
        double allele_sum = 0.0;
        double direct = 0.0;
        for (int c = 0; c < k; ++c) {
            const double v = unif(rng) < s.p ? 1.0 : 0.0;
            g(i, c) = v;
            if (v == 1.0)
                mask |= std::uint64_t{1} << c;
            allele_sum += v;
            direct += s.beta_direct[static_cast<std::size_t>(c)] * v;
        }
        const double z1 = normal(rng);
        const double z2 = normal(rng);
        const double e1 = chol(0, 0) * z1;
        const double e2 = chol(1, 0) * z1 + chol(1, 1) * z2;

        double exposure = 0.0;
        switch (s.link) {
        case Link::IdentityFull:
            // sum over non-empty S of prod_{s in S} G_s = prod_s (1 + G_s) - 1
            exposure = s.C * (std::ldexp(1.0, std::popcount(mask)) - 1.0) + e2;
            break;
        case Link::IdentitySparse: {
            double terms = allele_sum;
            for (auto m : interactions)
                if ((mask & m) == m)
                    terms += 1.0;
            exposure = s.C * terms + e2;
            break;
        }
        case Link::Log:
            exposure = std::exp(s.C * allele_sum) + e2;
            break;
        case Link::Probit:
            exposure = (-3.0 + s.C * allele_sum + e2 > 0.0) ? 1.0 : 0.0;
            break;
        }
        a(i) = exposure;
        y(i) = s.beta_a * exposure + direct + e1;
    }
    return Dataset::create(std::move(y), std::move(a), std::move(g));
}

const EstimatorSummary& McReport::at(Method m) const
{
    for (const auto& e : estimators)
        if (e.method == m)
            return e;
    throw ParameterError("report has no estimator '" + to_string(m) + "'");
}

McReport run(const McScenario& s, const std::vector<Method>& methods, unsigned threads)
{
    s.validate();
    if (methods.empty())
        throw ParameterError("at least one estimator is required");

    std::optional<SubsetFamily> family;
    IndexTuple valid;
    for (auto m : methods) {
        if (m == Method::Mr2 && !family)
            family = enumerate_family(s.K, s.k_dagger);
        if (m == Method::Oracle) {
            valid = s.valid_indices();
            if (valid.empty())
                throw ParameterError("oracle 2SLS needs at least one zero entry in beta_direct");
        }
    }

    struct Outcome {
        bool ok = false;
        double beta = 0.0;
        double var = 0.0;
    };
    const std::size_t m_count = methods.size();
    std::vector<Outcome> outcomes(s.reps * m_count);

    auto replicate = [&](std::size_t r) {
        Outcome* row = &outcomes[r * m_count];
        std::optional<Dataset> d;
        try {
            d = generate(s, r + 1);
        } catch (const Error&) {
            return;
        }
        for (std::size_t j = 0; j < m_count; ++j) {
            try {
                FitResult fit;
                switch (methods[j]) {
                case Method::Mr2:
                    fit = fit_2sls(*d, build_instruments(*d, *family));
                    break;
                case Method::Oracle:
                    fit = fit_oracle_2sls(*d, valid);
                    break;
                case Method::Naive:
                    fit = fit_naive_2sls(*d);
                    break;
                case Method::Ratio:
                    fit = fit_ratio(*d);
                    break;
                }
                row[j] = {true, fit.beta_a, fit.variance(s.variance)};
            } catch (const Error&) {
                row[j].ok = false;
            }
        }
    };

    unsigned workers = threads == 0 ? std::max(1U, std::thread::hardware_concurrency()) : threads;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, s.reps));
    if (workers <= 1) {
        for (std::size_t r = 0; r < s.reps; ++r)
            replicate(r);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (std::size_t r = next++; r < s.reps; r = next++)
                    replicate(r);
            });
    }

    McReport report;
    report.scenario = s;
    for (std::size_t j = 0; j < m_count; ++j) {
        EstimatorSummary sum;
        sum.method = methods[j];
        double total = 0.0;
        double total_var = 0.0;
        for (std::size_t r = 0; r < s.reps; ++r) {
            const auto& o = outcomes[r * m_count + j];
            if (!o.ok) {
                ++sum.failures;
                continue;
            }
            ++sum.successes;
            total += o.beta;
            total_var += o.var;
        }
        if (sum.successes == 0)
            throw AggregationError("every replication failed for estimator '" +
                                   to_string(methods[j]) + "'");
        const double m = static_cast<double>(sum.successes);
        sum.mean_beta = total / m;
        sum.abs_bias = std::abs(sum.mean_beta - s.beta_a);
        sum.sqrt_evar = std::sqrt(total_var / m);

        double ss = 0.0;
        std::size_t covered = 0;
        for (std::size_t r = 0; r < s.reps; ++r) {
            const auto& o = outcomes[r * m_count + j];
            if (!o.ok)
                continue;
            ss += (o.beta - sum.mean_beta) * (o.beta - sum.mean_beta);
            if (std::abs(o.beta - s.beta_a) <= 1.96 * std::sqrt(o.var))
                ++covered;
        }
        sum.cov95 = static_cast<double>(covered) / m;
        if (sum.successes >= 2) {
            sum.sqrt_var = std::sqrt(ss / (m - 1.0));
            sum.mcse = *sum.sqrt_var / std::sqrt(m);
        }
        report.estimators.push_back(sum);
    }
    return report;
}

}  // namespace mr2
