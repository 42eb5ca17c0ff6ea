#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace mr2 {

inline constexpr double kRankTolerance = 1e-10;

struct LeastSquaresFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residual;
    Eigen::Index rank = 0;
    /// Columns found linearly dependent (coefficient fixed at zero).
    std::vector<Eigen::Index> aliased;
};

enum class RankPolicy {
    /// Rank loss raises CollinearityError.
    Strict,
    /// Dependent columns get coefficient zero; fitted values are unaffected.
    DropAliased,
};

/// Ordinary (or, with `weights`, weighted) least squares of y on x by
/// column-pivoting Householder QR. A pivot below kRankTolerance times the
/// largest pivot counts as rank loss and raises CollinearityError naming the
/// dropped columns via `names` (falls back to "column j"), unless `policy`
/// is DropAliased.
LeastSquaresFit least_squares(const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y,
                              const std::vector<std::string>& names = {},
                              const Eigen::VectorXd* weights = nullptr,
                              RankPolicy policy = RankPolicy::Strict);

/// Residual of each column of `x` after weighted projection on `basis`.
Eigen::MatrixXd partial_out(const Eigen::Ref<const Eigen::MatrixXd>& basis,
                            const Eigen::Ref<const Eigen::MatrixXd>& x,
                            const Eigen::VectorXd* weights = nullptr);

/// Weighted mean sum(w v) / sum(w); plain mean when `weights` is null.
double weighted_mean(const Eigen::VectorXd& v,
                     const Eigen::VectorXd* weights);

}  // namespace mr2
