#include "mr2/diagnostics.hpp"

#include "mr2/errors.hpp"
#include "mr2/linalg.hpp"

#include <boost/math/distributions/fisher_f.hpp>

#include <cmath>
#include <limits>

namespace mr2 {

double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

FirstStageTest f_test_from_rss(double rss0, double rss1, Eigen::Index df1, Eigen::Index df2)
{
    if (df1 < 1 || df2 < 1)
        throw SampleSizeError("F test needs positive degrees of freedom (got " +
                              std::to_string(df1) + ", " + std::to_string(df2) + ")");
    FirstStageTest out;
    out.df1 = df1;
    out.df2 = df2;
    const double explained = std::max(rss0 - rss1, 0.0);
    if (rss1 <= 0.0) {
        out.f = explained > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        out.p_value = explained > 0.0 ? 0.0 : 1.0;
        return out;
    }
    out.f = (explained / static_cast<double>(df1)) / (rss1 / static_cast<double>(df2));
    const boost::math::fisher_f dist(static_cast<double>(df1), static_cast<double>(df2));
    out.p_value = boost::math::cdf(boost::math::complement(dist, out.f));
    return out;
}

FirstStageTest first_stage_f(const Eigen::VectorXd& a, const Eigen::MatrixXd& instruments,
                             const Eigen::MatrixXd& controls, const Eigen::VectorXd* weights)
{
    const Eigen::Index n = a.size();
    const Eigen::Index j = instruments.cols();
    const Eigen::Index q = controls.size() == 0 ? 0 : controls.cols();
    if (instruments.rows() != n || (q > 0 && controls.rows() != n))
        throw ParameterError("first-stage F: row counts differ");
    if (n <= j + 1 + q)
        throw SampleSizeError("first-stage F needs n > J + 1 (n = " + std::to_string(n) +
                              ", J = " + std::to_string(j) + ")");

    Eigen::MatrixXd restricted(n, 1 + q);
    restricted.col(0).setOnes();
    if (q > 0)
        restricted.rightCols(q) = controls;
    Eigen::MatrixXd full(n, 1 + q + j);
    full.leftCols(1 + q) = restricted;
    full.rightCols(j) = instruments;

    auto rss = [&](const Eigen::VectorXd& r) {
        return weights ? (weights->array() * r.array().square()).sum() : r.squaredNorm();
    };
    const double rss0 = rss(least_squares(restricted, a, {}, weights).residual);
    const auto unrestricted = least_squares(full, a, {}, weights, RankPolicy::DropAliased);
    for (const auto idx : unrestricted.aliased)
        if (idx < 1 + q)
            throw CollinearityError("first-stage F: controls are collinear");
    const Eigen::Index rank = 1 + q + j - static_cast<Eigen::Index>(unrestricted.aliased.size());
    if (rank - 1 - q < 1)
        throw WeakIdentificationError("first-stage F: instruments are collinear with the controls", 0.0);
    return f_test_from_rss(rss0, rss(unrestricted.residual), rank - 1 - q, n - rank);
}

FirstStageTest first_stage_f(const Dataset& d, const InstrumentMatrix& z)
{
    if (z.z.rows() != d.n())
        throw ParameterError("instrument matrix and dataset row counts differ");
    return first_stage_f(d.a(), z.z, Eigen::MatrixXd(d.n(), 0),
                         z.row_weights ? &*z.row_weights : nullptr);
}

std::string to_string(HausmanStatus s)
{
    return s == HausmanStatus::Ok ? "ok" : "not_applicable";
}

HausmanResult hausman_test(double beta_ref, double var_ref, double beta_alt, double var_alt,
                           int k_ref, int k_alt)
{
    HausmanResult out;
    out.k_ref = k_ref;
    out.k_alt = k_alt;
    const double diff = var_ref - var_alt;
    if (!(diff > 0.0) || !std::isfinite(diff)) {
        out.status = HausmanStatus::NotApplicable;
        out.ht = std::numeric_limits<double>::quiet_NaN();
        out.p_value = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.status = HausmanStatus::Ok;
    out.ht = (beta_ref - beta_alt) / std::sqrt(diff);
    // 2 (1 - Phi(|ht|)) without cancellation in the tail
    out.p_value = std::erfc(std::abs(out.ht) / std::sqrt(2.0));
    return out;
}

HausmanResult hausman_test(const FitResult& fit_ref, const FitResult& fit_alt, VarianceMode mode)
{
    return hausman_test(fit_ref.beta_a, fit_ref.variance(mode), fit_alt.beta_a,
                        fit_alt.variance(mode), fit_ref.k_dagger, fit_alt.k_dagger);
}

}  // namespace mr2
