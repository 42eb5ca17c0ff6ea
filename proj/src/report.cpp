#include "mr2/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace mr2 {

namespace {

nlohmann::ordered_json number_or_null(double x)
{
    if (!std::isfinite(x))
        return nullptr;
    return x;
}

nlohmann::ordered_json number_or_null(const std::optional<double>& x)
{
    return x ? number_or_null(*x) : nlohmann::ordered_json(nullptr);
}

std::string cell(const std::optional<double>& x)
{
    if (!x || !std::isfinite(*x))
        return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *x);
    return buf;
}

// counts UTF-8 lead bytes, enough for the table labels
std::size_t display_width(const std::string& s)
{
    std::size_t shown = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80)
            ++shown;
    return shown;
}

std::string pad(const std::string& s, std::size_t width)
{
    const auto shown = display_width(s);
    return shown >= width ? s : std::string(width - shown, ' ') + s;
}

}  // namespace

std::string display_name(Method m)
{
    switch (m) {
    case Method::Mr2: return "MR2";
    case Method::Oracle: return "Oracle 2SLS";
    case Method::Naive: return "Naive 2SLS";
    case Method::Ratio: return "Ratio";
    }
    return "?";
}

nlohmann::ordered_json to_json(const FitResult& fit)
{
    nlohmann::ordered_json j;
    j["method"] = to_string(fit.method);
    j["beta_a"] = number_or_null(fit.beta_a);
    j["beta_0"] = number_or_null(fit.beta_0);
    j["se_sandwich"] = number_or_null(std::sqrt(fit.var_sandwich));
    j["se_homoskedastic"] = number_or_null(std::sqrt(fit.var_homoskedastic));
    j["first_stage_F"] = number_or_null(fit.first_stage_F);
    j["first_stage_p"] = number_or_null(fit.first_stage_p);
    j["n"] = fit.n;
    j["K"] = fit.K;
    j["k_dagger"] = fit.k_dagger;
    j["J"] = fit.J;
    j["instrument_rank"] = fit.instrument_rank;
    return j;
}

nlohmann::ordered_json to_json(const HausmanResult& h)
{
    nlohmann::ordered_json j;
    j["ht"] = number_or_null(h.ht);
    j["p_value"] = number_or_null(h.p_value);
    j["k_ref"] = h.k_ref;
    j["k_alt"] = h.k_alt;
    j["status"] = to_string(h.status);
    return j;
}

nlohmann::ordered_json to_json(const McReport& report)
{
    const auto& s = report.scenario;
    nlohmann::ordered_json scen;
    scen["name"] = s.name;
    scen["n"] = s.n;
    scen["K"] = s.K;
    scen["p"] = s.p;
    scen["beta_direct"] = s.beta_direct;
    scen["link"] = to_string(s.link);
    scen["C"] = s.C;
    scen["gamma"] = s.gamma;
    scen["freeze_sparse_set"] = s.freeze_sparse_set;
    scen["beta_a"] = s.beta_a;
    scen["error_cov"] = {s.error_cov(0, 0), s.error_cov(0, 1), s.error_cov(1, 1)};
    scen["reps"] = s.reps;
    scen["seed"] = s.seed;
    scen["k_dagger"] = s.k_dagger;
    scen["variance"] = to_string(s.variance);

    nlohmann::ordered_json j;
    j["scenario"] = scen;
    j["reps"] = s.reps;
    nlohmann::ordered_json est = nlohmann::ordered_json::array();
    for (const auto& e : report.estimators) {
        nlohmann::ordered_json row;
        row["method"] = to_string(e.method);
        row["successes"] = e.successes;
        row["failures"] = e.failures;
        row["mean_beta"] = number_or_null(e.mean_beta);
        row["abs_bias"] = number_or_null(e.abs_bias);
        row["mcse"] = number_or_null(e.mcse);
        row["sqrt_var"] = number_or_null(e.sqrt_var);
        row["sqrt_evar"] = number_or_null(e.sqrt_evar);
        row["cov95"] = number_or_null(e.cov95);
        est.push_back(row);
    }
    j["estimators"] = est;
    return j;
}

std::string format_table(const McReport& report)
{
    constexpr std::size_t label_w = 8;
    constexpr std::size_t col_w = 13;
    std::ostringstream out;
    const auto& s = report.scenario;
    out << s.name << ": n=" << s.n << ", K=" << s.K << ", link=" << to_string(s.link)
        << ", k_dagger=" << s.k_dagger << ", reps=" << s.reps << '\n';
    out << pad("", label_w);
    for (const auto& e : report.estimators)
        out << pad(display_name(e.method), col_w);
    out << '\n';

    auto row = [&](const std::string& label, auto get) {
        out << label << std::string(label_w - display_width(label), ' ');
        for (const auto& e : report.estimators)
            out << pad(cell(get(e)), col_w);
        out << '\n';
    };
    row("|Bias|", [](const EstimatorSummary& e) { return std::optional<double>(e.abs_bias); });
    row("√Var", [](const EstimatorSummary& e) { return e.sqrt_var; });
    row("√EVar", [](const EstimatorSummary& e) { return std::optional<double>(e.sqrt_evar); });
    row("Cov95", [](const EstimatorSummary& e) { return std::optional<double>(e.cov95); });

    bool any_failed = false;
    for (const auto& e : report.estimators)
        any_failed = any_failed || e.failures > 0;
    if (any_failed) {
        out << "failed";
        out << std::string(label_w - 6, ' ');
        for (const auto& e : report.estimators)
            out << pad(std::to_string(e.failures), col_w);
        out << '\n';
    }
    return out.str();
}

}  // namespace mr2
