#include "mr2/dataset.hpp"

#include "mr2/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace mr2 {

namespace {

std::vector<std::string> default_names(const std::string& prefix, Eigen::Index count)
{
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index j = 0; j < count; ++j)
        names.push_back(prefix + std::to_string(j + 1));
    return names;
}

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& x, const std::string& what)
{
    if (!x.allFinite())
        throw DataError(what + " contains NaN or infinite values");
}

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    s = s.substr(b, e - b + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        s = s.substr(1, s.size() - 2);
    return std::string(s);
}

std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        out.push_back(trim(std::string_view(line).substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

bool parse_double(const std::string& cell, double& value)
{
    if (cell.empty())
        return false;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (*first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    return ec == std::errc() && ptr == last && std::isfinite(value);
}

}  // namespace

double mean_of(const Eigen::VectorXd& v)
{
    return v.sum() / static_cast<double>(v.size());
}

Dataset Dataset::create(Eigen::VectorXd y, Eigen::VectorXd a, Eigen::MatrixXd g,
                        std::vector<std::string> g_names,
                        std::optional<Eigen::MatrixXd> m,
                        std::vector<std::string> m_names)
{
    const Eigen::Index n = y.size();
    if (n < 2)
        throw SampleSizeError("dataset needs at least 2 rows, got " + std::to_string(n));
    if (a.size() != n || g.rows() != n)
        throw DataError("outcome, exposure and instrument lengths differ");
    if (g.cols() < 1)
        throw DataError("dataset needs at least one instrument column");
    if (m && m->rows() != n)
        throw DataError("covariate matrix has " + std::to_string(m->rows()) +
                        " rows, expected " + std::to_string(n));

    if (g_names.empty())
        g_names = default_names("G", g.cols());
    if (static_cast<Eigen::Index>(g_names.size()) != g.cols())
        throw DataError("instrument name count does not match column count");
    if (m) {
        if (m_names.empty())
            m_names = default_names("M", m->cols());
        if (static_cast<Eigen::Index>(m_names.size()) != m->cols())
            throw DataError("covariate name count does not match column count");
    }

    require_finite(y, "outcome");
    require_finite(a, "exposure");
    require_finite(g, "instrument matrix");
    if (m)
        require_finite(*m, "covariate matrix");

    for (Eigen::Index j = 0; j < g.cols(); ++j) {
        const auto col = g.col(j);
        if ((col.array() == col(0)).all())
            throw DegenerateInstrumentError(
                "instrument column '" + g_names[static_cast<std::size_t>(j)] +
                    "' is constant (zero sample variance)",
                g_names[static_cast<std::size_t>(j)]);
    }

    Dataset d;
    d.y_ = std::move(y);
    d.a_ = std::move(a);
    d.g_ = std::move(g);
    d.m_ = std::move(m);
    d.g_names_ = std::move(g_names);
    d.m_names_ = std::move(m_names);
    return d;
}

bool Dataset::instruments_binary() const
{
    return (g_.array() == 0.0 || g_.array() == 1.0).all();
}

Dataset load_csv(const std::filesystem::path& path, const CsvColumns& columns)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line))
        throw DataError("'" + path.string() + "' is empty; a header row is required");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
        line.erase(0, 3);
    const auto header = split_fields(line);

    std::unordered_map<std::string, std::size_t> where;
    for (std::size_t j = 0; j < header.size(); ++j)
        where.emplace(header[j], j);

    auto locate = [&](const std::string& name) {
        auto it = where.find(name);
        if (it == where.end())
            throw DataError("column '" + name + "' not found in '" + path.string() + "'");
        return it->second;
    };

    if (columns.instruments.empty())
        throw ParameterError("at least one instrument column is required");

    std::vector<std::string> names;
    names.push_back(columns.outcome);
    names.push_back(columns.exposure);
    names.insert(names.end(), columns.instruments.begin(), columns.instruments.end());
    names.insert(names.end(), columns.covariates.begin(), columns.covariates.end());
    // an empty outcome or exposure name reads as a zero column
    std::vector<std::optional<std::size_t>> index;
    index.reserve(names.size());
    for (std::size_t c = 0; c < names.size(); ++c)
        index.push_back(c < 2 && names[c].empty() ? std::nullopt
                                                  : std::optional<std::size_t>(locate(names[c])));

    std::vector<std::vector<double>> values(names.size());
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            continue;
        ++row;
        const auto fields = split_fields(line);
        if (fields.size() != header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " +
                                 std::to_string(header.size()) + " fields, found " +
                                 std::to_string(fields.size()),
                             row, "");
        for (std::size_t c = 0; c < names.size(); ++c) {
            double v = 0.0;
            if (index[c] && !parse_double(fields[*index[c]], v))
                throw ParseError("row " + std::to_string(row) + ", column '" + names[c] +
                                     "': cannot parse '" + fields[*index[c]] + "' as a number",
                                 row, names[c]);
            values[c].push_back(v);
        }
    }

    const auto n = static_cast<Eigen::Index>(row);
    auto to_vector = [&](std::size_t c) {
        return Eigen::Map<const Eigen::VectorXd>(values[c].data(), n).eval();
    };
    auto to_matrix = [&](std::size_t first, std::size_t count) {
        Eigen::MatrixXd out(n, static_cast<Eigen::Index>(count));
        for (std::size_t j = 0; j < count; ++j)
            out.col(static_cast<Eigen::Index>(j)) = to_vector(first + j);
        return out;
    };

    const std::size_t k = columns.instruments.size();
    std::optional<Eigen::MatrixXd> m;
    if (!columns.covariates.empty())
        m = to_matrix(2 + k, columns.covariates.size());
    return Dataset::create(to_vector(0), to_vector(1), to_matrix(2, k), columns.instruments,
                           std::move(m), columns.covariates);
}

void write_csv(const Dataset& d, const std::filesystem::path& path,
               const std::string& outcome_name, const std::string& exposure_name)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);

    out << outcome_name << ',' << exposure_name;
    for (const auto& name : d.g_names())
        out << ',' << name;
    for (const auto& name : d.m_names())
        out << ',' << name;
    out << '\n';

    for (Eigen::Index i = 0; i < d.n(); ++i) {
        out << d.y()(i) << ',' << d.a()(i);
        for (Eigen::Index j = 0; j < d.k(); ++j)
            out << ',' << d.g()(i, j);
        if (d.m())
            for (Eigen::Index j = 0; j < d.m()->cols(); ++j)
                out << ',' << (*d.m())(i, j);
        out << '\n';
    }
}

Eigen::VectorXd column_means(const Dataset& d)
{
    Eigen::VectorXd means(d.k());
    for (Eigen::Index j = 0; j < d.k(); ++j)
        means(j) = mean_of(d.g().col(j));
    return means;
}

}  // namespace mr2
