#include "mr2/linalg.hpp"

#include "mr2/errors.hpp"

#include <algorithm>

namespace mr2 {

namespace {

std::string column_name(const std::vector<std::string>& names, Eigen::Index j)
{
    if (j < static_cast<Eigen::Index>(names.size()))
        return names[static_cast<std::size_t>(j)];
    return "column " + std::to_string(j + 1);
}

}  // namespace

LeastSquaresFit least_squares(const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y,
                              const std::vector<std::string>& names,
                              const Eigen::VectorXd* weights, RankPolicy policy)
{
    if (x.rows() != y.size())
        throw ParameterError("least squares: design has " + std::to_string(x.rows()) +
                             " rows, response has " + std::to_string(y.size()));
    if (x.rows() < x.cols())
        throw SampleSizeError("least squares: " + std::to_string(x.rows()) +
                              " observations for " + std::to_string(x.cols()) + " coefficients");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    qr.setThreshold(kRankTolerance);
    Eigen::VectorXd rhs;
    if (weights) {
        const Eigen::VectorXd sw = weights->cwiseSqrt();
        qr.compute(sw.asDiagonal() * x);
        rhs = sw.cwiseProduct(y);
    } else {
        qr.compute(x);
        rhs = y;
    }

    if (qr.rank() < x.cols() && policy == RankPolicy::Strict) {
        std::string dropped;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < x.cols(); ++j) {
            if (!dropped.empty())
                dropped += ", ";
            dropped += column_name(names, perm(j));
        }
        throw CollinearityError("design matrix is rank deficient (rank " +
                                std::to_string(qr.rank()) + " of " + std::to_string(x.cols()) +
                                "); linearly dependent: " + dropped);
    }

    LeastSquaresFit fit;
    // solve() would back-substitute through every pivot above Eigen's internal
    // cutoff, including the negligible ones; truncate at the detected rank
    const Eigen::Index r = qr.rank();
    Eigen::VectorXd c = rhs;
    c.applyOnTheLeft(qr.householderQ().setLength(r).adjoint());
    qr.matrixR().topLeftCorner(r, r).triangularView<Eigen::Upper>().solveInPlace(c.head(r));
    fit.coef = Eigen::VectorXd::Zero(x.cols());
    for (Eigen::Index i = 0; i < r; ++i)
        fit.coef(qr.colsPermutation().indices()(i)) = c(i);
    fit.fitted = x * fit.coef;
    fit.residual = y - fit.fitted;
    fit.rank = qr.rank();
    // the basic solution zeroes the trailing pivoted columns
    for (Eigen::Index j = qr.rank(); j < x.cols(); ++j)
        fit.aliased.push_back(qr.colsPermutation().indices()(j));
    std::sort(fit.aliased.begin(), fit.aliased.end());
    return fit;
}

Eigen::MatrixXd partial_out(const Eigen::Ref<const Eigen::MatrixXd>& basis,
                            const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::VectorXd* weights)
{
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        out.col(j) = least_squares(basis, x.col(j), {}, weights).residual;
    return out;
}

double weighted_mean(const Eigen::VectorXd& v, const Eigen::VectorXd* weights)
{
    if (!weights)
        return v.sum() / static_cast<double>(v.size());
    return weights->dot(v) / weights->sum();
}

}  // namespace mr2
