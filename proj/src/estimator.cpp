#include "mr2/estimator.hpp"

#include "mr2/diagnostics.hpp"
#include "mr2/errors.hpp"
#include "mr2/linalg.hpp"

#include <cmath>
#include <unordered_map>

namespace mr2 {

namespace {

struct TwoStageSpec {
    Eigen::MatrixXd instruments;
    std::vector<std::string> instrument_names;
    Eigen::MatrixXd stage1_exog;
    std::vector<std::string> stage1_names;
    Eigen::MatrixXd stage2_exog;
    std::vector<std::string> stage2_names;
    const Eigen::VectorXd* weights = nullptr;
    /// Generated instruments may span fewer directions than columns (the
    /// sum-H columns for k_dagger < K span rank K); raw columns may not.
    bool drop_aliased_instruments = false;
};

double weights_dot(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const Eigen::VectorXd* w)
{
    if (!w)
        return u.dot(v);
    return (w->array() * u.array() * v.array()).sum();
}

Eigen::MatrixXd with_intercept(std::initializer_list<const Eigen::MatrixXd*> blocks, Eigen::Index n)
{
    Eigen::Index cols = 1;
    for (const auto* b : blocks)
        cols += b->cols();
    Eigen::MatrixXd out(n, cols);
    out.col(0).setOnes();
    Eigen::Index at = 1;
    for (const auto* b : blocks) {
        out.middleCols(at, b->cols()) = *b;
        at += b->cols();
    }
    return out;
}

Eigen::MatrixXd intercept_and(const Eigen::MatrixXd& exog)
{
    return with_intercept({&exog}, exog.rows());
}

// Combination v with the other stage-2 regressors partialled out; the
// variance formulas below are all in terms of this vector.
Eigen::VectorXd isolate(const Eigen::VectorXd& v, const Eigen::MatrixXd& stage2_exog,
                        const Eigen::VectorXd* weights)
{
    if (stage2_exog.cols() == 0) {
        const double mean = weighted_mean(v, weights);
        return (v.array() - mean).matrix();
    }
    return partial_out(intercept_and(stage2_exog), v, weights).col(0);
}

double sandwich_from(const Eigen::VectorXd& v, const Eigen::VectorXd& eps,
                     const Eigen::VectorXd* weights)
{
    Eigen::ArrayXd wv = v.array();
    if (weights)
        wv *= weights->array();
    const double bread = (wv * v.array()).sum();
    if (!(bread > 0.0))
        throw WeakIdentificationError("identifying moment of the fitted exposure is zero", bread);
    const double meat = (wv * eps.array()).square().sum();
    return meat / (bread * bread);
}

double homoskedastic_from(const Eigen::VectorXd& v, const Eigen::VectorXd& eps,
                          const Eigen::VectorXd* weights)
{
    const Eigen::ArrayXd w = weights ? Eigen::ArrayXd(weights->array()) : Eigen::ArrayXd::Ones(v.size()).eval();
    const double bread = (w * v.array().square()).sum();
    if (!(bread > 0.0))
        throw WeakIdentificationError("identifying moment of the fitted exposure is zero", bread);
    const double sigma2 = (w * eps.array().square()).sum() / w.sum();
    return sigma2 / bread;
}

FitResult two_stage(const Eigen::VectorXd& y, const Eigen::VectorXd& a, const TwoStageSpec& spec)
{
    const Eigen::Index n = y.size();
    const Eigen::Index j = spec.instruments.cols();
    const Eigen::Index q1 = spec.stage1_exog.cols();
    const Eigen::Index q2 = spec.stage2_exog.cols();
    if (j < 1)
        throw ParameterError("two-stage least squares needs at least one instrument");
    if (n <= j + 2 + std::max(q1, q2))
        throw SampleSizeError("n = " + std::to_string(n) + " is too small for " +
                              std::to_string(j) + " instruments and " +
                              std::to_string(std::max(q1, q2)) + " extra regressors");

    const Eigen::MatrixXd w1 = with_intercept({&spec.stage1_exog, &spec.instruments}, n);
    std::vector<std::string> names1{"intercept"};
    names1.insert(names1.end(), spec.stage1_names.begin(), spec.stage1_names.end());
    names1.insert(names1.end(), spec.instrument_names.begin(), spec.instrument_names.end());
    // aliased instruments (e.g. the rank-K span of sum-H columns) are dropped
    // as regression software does; fitted values do not depend on the choice
    auto stage1 = least_squares(w1, a, names1, spec.weights,
                                spec.drop_aliased_instruments ? RankPolicy::DropAliased
                                                              : RankPolicy::Strict);
    for (Eigen::Index col : stage1.aliased)
        if (col < 1 + q1)
            throw CollinearityError("first-stage controls are collinear with the instruments: " +
                                    names1[static_cast<std::size_t>(col)]);
    const Eigen::Index j_eff = stage1.rank - 1 - q1;
    if (j_eff < 1)
        throw WeakIdentificationError(
            "the instruments are collinear with the intercept and first-stage controls", 0.0);

    FitResult fit;
    fit.n = n;
    fit.J = j;
    fit.instrument_rank = j_eff;
    fit.stage1_coef = std::move(stage1.coef);
    fit.fitted_exposure = std::move(stage1.fitted);
    fit.stage2_exog = spec.stage2_exog;
    if (spec.weights)
        fit.weights = *spec.weights;

    const Eigen::VectorXd a_centered = isolate(a, Eigen::MatrixXd(n, 0), spec.weights);
    const double rss1 = weights_dot(stage1.residual, stage1.residual, spec.weights);
    double rss0 = weights_dot(a_centered, a_centered, spec.weights);
    if (q1 > 0) {
        const auto restricted =
            least_squares(intercept_and(spec.stage1_exog), a, names1, spec.weights);
        rss0 = weights_dot(restricted.residual, restricted.residual, spec.weights);
    }
    const auto first = f_test_from_rss(rss0, rss1, j_eff, n - stage1.rank);
    fit.first_stage_F = first.f;
    fit.first_stage_p = first.p_value;

    const Eigen::VectorXd v = isolate(fit.fitted_exposure, spec.stage2_exog, spec.weights);
    const double strength = weights_dot(v, v, spec.weights);
    const double scale = weights_dot(a_centered, a_centered, spec.weights);
    if (!(scale > 0.0) || !(strength > kWeakIdentificationTolerance * scale))
        throw WeakIdentificationError(
            "first stage explains no exposure variation beyond the other regressors "
            "(first-stage F = " + std::to_string(first.f) + ")",
            strength);

    const Eigen::Index p2 = 2 + q2;
    Eigen::MatrixXd d2(n, p2);
    d2.col(0).setOnes();
    d2.col(1) = fit.fitted_exposure;
    d2.rightCols(q2) = spec.stage2_exog;
    std::vector<std::string> names2{"intercept", "fitted exposure"};
    names2.insert(names2.end(), spec.stage2_names.begin(), spec.stage2_names.end());
    auto stage2 = least_squares(d2, y, names2, spec.weights);

    fit.stage2_coef = stage2.coef;
    fit.beta_0 = stage2.coef(0);
    fit.beta_a = stage2.coef(1);
    Eigen::MatrixXd x2 = d2;
    x2.col(1) = a;
    fit.residual_eps = y - x2 * stage2.coef;

    fit.var_sandwich = sandwich_from(v, fit.residual_eps, spec.weights);
    fit.var_homoskedastic = homoskedastic_from(v, fit.residual_eps, spec.weights);
    return fit;
}

Eigen::VectorXd centered_product(const Dataset& d)
{
    const Eigen::VectorXd means = column_means(d);
    Eigen::VectorXd p = Eigen::VectorXd::Ones(d.n());
    for (Eigen::Index s = 0; s < d.k(); ++s)
        p.array() *= d.g().col(s).array() - means(s);
    return p;
}

}  // namespace

std::string to_string(Method m)
{
    switch (m) {
    case Method::Mr2: return "mr2";
    case Method::Oracle: return "oracle";
    case Method::Naive: return "naive";
    case Method::Ratio: return "ratio";
    }
    return "unknown";
}

Method method_from_string(const std::string& s)
{
    if (s == "mr2") return Method::Mr2;
    if (s == "oracle") return Method::Oracle;
    if (s == "naive") return Method::Naive;
    if (s == "ratio") return Method::Ratio;
    throw ParameterError("unknown method '" + s + "' (expected mr2, oracle, naive or ratio)");
}

std::string to_string(VarianceMode v)
{
    return v == VarianceMode::Sandwich ? "sandwich" : "homoskedastic";
}

VarianceMode variance_mode_from_string(const std::string& s)
{
    if (s == "sandwich") return VarianceMode::Sandwich;
    if (s == "homoskedastic") return VarianceMode::Homoskedastic;
    throw ParameterError("unknown variance mode '" + s + "' (expected sandwich or homoskedastic)");
}

double ratio_estimate(const Dataset& d)
{
    if (!d.instruments_binary())
        throw UnsupportedError("the ratio estimator requires binary (0/1) instruments");
    const Eigen::VectorXd p = centered_product(d);
    const double nn = static_cast<double>(d.n());
    const double num = d.y().dot(p) / nn;
    const double den = d.a().dot(p) / nn;
    const double scale = std::sqrt(d.a().squaredNorm() / nn * p.squaredNorm() / nn);
    if (!(std::abs(den) >= kWeakIdentificationTolerance * scale))
        throw WeakIdentificationError("E^[A prod(G - E^G)] = " + std::to_string(den) +
                                          " is numerically zero; the exposure does not depend on "
                                          "the full interaction",
                                      den);
    return num / den;
}

FitResult fit_ratio(const Dataset& d)
{
    FitResult fit;
    fit.method = Method::Ratio;
    fit.beta_a = ratio_estimate(d);
    fit.n = d.n();
    fit.K = static_cast<int>(d.k());
    fit.k_dagger = 1;
    fit.J = 1;
    fit.instrument_rank = 1;

    const Eigen::VectorXd p = centered_product(d);
    fit.beta_0 = mean_of(d.y()) - fit.beta_a * mean_of(d.a());
    fit.residual_eps = (d.y() - fit.beta_a * d.a()).array() - fit.beta_0;
    fit.stage2_exog.resize(d.n(), 0);

    const Eigen::MatrixXd pz = p;
    auto stage1 = least_squares(intercept_and(pz), d.a());
    fit.stage1_coef = stage1.coef;
    fit.fitted_exposure = stage1.fitted;
    fit.stage2_coef = Eigen::Vector2d(fit.beta_0, fit.beta_a);
    const auto first = first_stage_f(d.a(), pz);
    fit.first_stage_F = first.f;
    fit.first_stage_p = first.p_value;

    const double den = p.dot(d.a());
    fit.var_sandwich = (p.array() * fit.residual_eps.array()).square().sum() / (den * den);
    fit.var_homoskedastic =
        fit.residual_eps.squaredNorm() / static_cast<double>(d.n()) * p.squaredNorm() / (den * den);
    return fit;
}

FitResult fit_2sls(const Dataset& d, const InstrumentMatrix& z, const FitOptions& options)
{
    if (z.z.rows() != d.n())
        throw ParameterError("instrument matrix has " + std::to_string(z.z.rows()) +
                             " rows, dataset has " + std::to_string(d.n()));
    if (z.row_weights && options.include_covariates)
        throw ParameterError("weighted instruments and covariate adjustment cannot be combined");

    TwoStageSpec spec;
    spec.instruments = z.z;
    spec.instrument_names = z.column_names();
    spec.drop_aliased_instruments = true;
    spec.stage1_exog.resize(d.n(), 0);

    Eigen::Index q = 0;
    if (options.extra_regressors)
        q += options.extra_regressors->cols();
    if (options.include_covariates) {
        if (!d.m())
            throw ParameterError("include_covariates set but the dataset has no covariates");
        q += d.m()->cols();
    }
    spec.stage2_exog.resize(d.n(), q);
    Eigen::Index at = 0;
    if (options.extra_regressors) {
        const auto& x = *options.extra_regressors;
        if (x.rows() != d.n())
            throw ParameterError("extra regressors have the wrong number of rows");
        spec.stage2_exog.middleCols(at, x.cols()) = x;
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            spec.stage2_names.push_back("X" + std::to_string(c + 1));
        at += x.cols();
    }
    if (options.include_covariates) {
        spec.stage2_exog.middleCols(at, d.m()->cols()) = *d.m();
        spec.stage2_names.insert(spec.stage2_names.end(), d.m_names().begin(), d.m_names().end());
    }
    if (z.row_weights)
        spec.weights = &*z.row_weights;

    FitResult fit = two_stage(d.y(), d.a(), spec);
    fit.method = Method::Mr2;
    fit.K = static_cast<int>(d.k());
    fit.k_dagger = z.k_dagger;
    return fit;
}

double variance_sandwich(const FitResult& fit, const InstrumentMatrix& z)
{
    if (fit.J != z.cols() || fit.stage1_coef.size() < z.cols())
        throw ParameterError("fit and instrument matrix disagree on the number of instruments");
    const Eigen::VectorXd combo = z.z * fit.stage1_coef.tail(z.cols());
    const Eigen::VectorXd* w = z.row_weights ? &*z.row_weights : nullptr;
    return sandwich_from(isolate(combo, fit.stage2_exog, w), fit.residual_eps, w);
}

double variance_homoskedastic(const FitResult& fit, const InstrumentMatrix& z)
{
    if (fit.J != z.cols() || fit.stage1_coef.size() < z.cols())
        throw ParameterError("fit and instrument matrix disagree on the number of instruments");
    const Eigen::VectorXd combo = z.z * fit.stage1_coef.tail(z.cols());
    const Eigen::VectorXd* w = z.row_weights ? &*z.row_weights : nullptr;
    return homoskedastic_from(isolate(combo, fit.stage2_exog, w), fit.residual_eps, w);
}

HOptResult h_opt_combination(const Dataset& d, const InstrumentMatrix& basis,
                             const Eigen::VectorXd& residual, ResidualVarianceModel model)
{
    const Eigen::Index n = d.n();
    if (basis.z.rows() != n || residual.size() != n)
        throw ParameterError("basis, residual and dataset lengths differ");
    const double nn = static_cast<double>(n);

    const Eigen::MatrixXd h = basis.z.rowwise() - basis.z.colwise().mean();
    const Eigen::VectorXd a = (d.a().array() - d.a().mean()).matrix();
    const Eigen::VectorXd y = (d.y().array() - d.y().mean()).matrix();

    Eigen::VectorXd s2(n);
    if (model == ResidualVarianceModel::Constant) {
        s2.setConstant(residual.squaredNorm() / nn);
    } else {
        if (!d.instruments_binary())
            throw UnsupportedError("cell-based residual variance requires binary instruments");
        if (d.k() >= 63)
            throw CapacityError("too many instruments for cell indexing", static_cast<double>(d.k()));
        std::vector<std::uint64_t> cell(static_cast<std::size_t>(n), 0);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index s = 0; s < d.k(); ++s)
                if (d.g()(i, s) == 1.0)
                    cell[static_cast<std::size_t>(i)] |= std::uint64_t{1} << s;
        std::unordered_map<std::uint64_t, std::pair<double, double>> acc;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& [sum, count] = acc[cell[static_cast<std::size_t>(i)]];
            sum += residual(i) * residual(i);
            count += 1.0;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& [sum, count] = acc[cell[static_cast<std::size_t>(i)]];
            s2(i) = sum / count;
        }
    }

    const Eigen::VectorXd cross = h.transpose() * a / nn;
    HOptResult out;
    if (s2.maxCoeff() == 0.0) {
        // Zero residual variance: the weighting collapses, the bound is 0 and
        // the direction is the unweighted least-squares one.
        const Eigen::MatrixXd gram = h.transpose() * h / nn;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
        qr.setThreshold(kRankTolerance);
        if (qr.rank() < gram.cols())
            throw CollinearityError("interaction basis is rank deficient");
        out.theta = qr.solve(cross);
        out.variance = 0.0;
    } else {
        const Eigen::MatrixXd omega = h.transpose() * s2.asDiagonal() * h / nn;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(omega);
        qr.setThreshold(kRankTolerance);
        if (qr.rank() < omega.cols())
            throw CollinearityError("weighting matrix E^{s2(G) H H'} is singular (rank " +
                                    std::to_string(qr.rank()) + " of " +
                                    std::to_string(omega.cols()) + ")");
        out.theta = qr.solve(cross);
        const double info = cross.dot(out.theta);
        if (!(info > 0.0))
            throw WeakIdentificationError("basis carries no information about the exposure", info);
        out.variance = 1.0 / info / nn;
    }

    const Eigen::VectorXd hopt = h * out.theta;
    const double den = hopt.dot(a);
    if (!(std::abs(den) > 0.0))
        throw WeakIdentificationError("E^{h_opt A} is zero", den);
    out.beta_a = hopt.dot(y) / den;
    return out;
}

FitResult fit_oracle_2sls(const Dataset& d, const IndexTuple& valid_indices)
{
    if (valid_indices.empty())
        throw ParameterError("oracle 2SLS needs at least one valid instrument index");
    const int k = static_cast<int>(d.k());
    const IndexTuple invalid = complement(valid_indices, k);

    TwoStageSpec spec;
    spec.instruments.resize(d.n(), static_cast<Eigen::Index>(valid_indices.size()));
    for (std::size_t c = 0; c < valid_indices.size(); ++c) {
        spec.instruments.col(static_cast<Eigen::Index>(c)) = d.g().col(valid_indices[c] - 1);
        spec.instrument_names.push_back(d.g_names()[static_cast<std::size_t>(valid_indices[c] - 1)]);
    }
    spec.stage1_exog.resize(d.n(), static_cast<Eigen::Index>(invalid.size()));
    for (std::size_t c = 0; c < invalid.size(); ++c) {
        spec.stage1_exog.col(static_cast<Eigen::Index>(c)) = d.g().col(invalid[c] - 1);
        spec.stage1_names.push_back(d.g_names()[static_cast<std::size_t>(invalid[c] - 1)]);
    }
    spec.stage2_exog = spec.stage1_exog;
    spec.stage2_names = spec.stage1_names;

    FitResult fit = two_stage(d.y(), d.a(), spec);
    fit.method = Method::Oracle;
    fit.K = k;
    fit.k_dagger = static_cast<int>(valid_indices.size());
    return fit;
}

FitResult fit_naive_2sls(const Dataset& d)
{
    TwoStageSpec spec;
    spec.instruments = d.g();
    spec.instrument_names = d.g_names();
    spec.stage1_exog.resize(d.n(), 0);
    spec.stage2_exog.resize(d.n(), 0);

    FitResult fit = two_stage(d.y(), d.a(), spec);
    fit.method = Method::Naive;
    fit.K = static_cast<int>(d.k());
    fit.k_dagger = fit.K;
    return fit;
}

}  // namespace mr2
