#pragma once

#include "mr2/dataset.hpp"
#include "mr2/instruments.hpp"
#include "mr2/subsets.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>

namespace mr2 {

enum class Method { Mr2, Oracle, Naive, Ratio };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

enum class VarianceMode { Sandwich, Homoskedastic };

std::string to_string(VarianceMode v);
VarianceMode variance_mode_from_string(const std::string& s);

/// Relative size below which an identifying moment counts as zero.
inline constexpr double kWeakIdentificationTolerance = 1e-8;

struct FitResult {
    Method method = Method::Mr2;

    double beta_a = 0.0;
    double beta_0 = 0.0;
    /// Stage-1 coefficients on (1, stage-1 controls, instruments).
    Eigen::VectorXd stage1_coef;
    Eigen::VectorXd fitted_exposure;
    /// Stage-2 coefficients on (1, A-hat, extra regressors).
    Eigen::VectorXd stage2_coef;
    /// Y - beta_0 - beta_a A - extras * gamma, evaluated at the observed A.
    Eigen::VectorXd residual_eps;
    /// Extra stage-2 regressors (X, M); zero columns when none.
    Eigen::MatrixXd stage2_exog;
    std::optional<Eigen::VectorXd> weights;

    double var_sandwich = 0.0;
    double var_homoskedastic = 0.0;
    double first_stage_F = 0.0;
    double first_stage_p = 1.0;

    Eigen::Index n = 0;
    int K = 0;
    int k_dagger = 0;
    Eigen::Index J = 0;
    /// Linearly independent instrument columns (first-stage F numerator df).
    Eigen::Index instrument_rank = 0;

    double variance(VarianceMode mode) const noexcept
    {
        return mode == VarianceMode::Sandwich ? var_sandwich : var_homoskedastic;
    }
};

struct FitOptions {
    /// Eligible extra stage-2 regressors X (interactions of order <= K - k_dagger).
    std::optional<Eigen::MatrixXd> extra_regressors;
    /// Add the dataset's covariates M to the stage-2 regression.
    bool include_covariates = false;
};

/// Sample analogue of E[Y prod(G_k - E G_k)] / E[A prod(G_k - E G_k)] with
/// plug-in means. Binary instruments only.
double ratio_estimate(const Dataset& d);

/// ratio_estimate packaged as a fit, with moment-based variances.
FitResult fit_ratio(const Dataset& d);

/// Two-stage least squares of Y on A using the generated instruments:
/// A on (1, Z), then Y on (1, A-hat[, X, M]). Row weights carried by `z`
/// turn both stages into weighted least squares.
FitResult fit_2sls(const Dataset& d, const InstrumentMatrix& z, const FitOptions& options = {});

/// Moment sandwich for beta_a that ignores estimation of the centering
/// means, hence conservative:
///   E^{v A}^-2 E^{v^2 eps^2} / n,  v = alpha-hat' Z with the stage-2
/// regressors other than A-hat partialled out.
double variance_sandwich(const FitResult& fit, const InstrumentMatrix& z);

/// sigma-hat^2 [E^{A Z'} E^{Z Z'}^-1 E^{Z A}]^-1 / n with sigma-hat^2 the
/// mean squared stage-2 residual.
double variance_homoskedastic(const FitResult& fit, const InstrumentMatrix& z);

enum class ResidualVarianceModel {
    /// E(eps^2 | G) taken constant.
    Constant,
    /// E(eps^2 | G) estimated by cell means over the observed G patterns
    /// (saturated regression on cell indicators); binary G only.
    SaturatedCells,
};

struct HOptResult {
    /// Optimal combination weights over the basis columns.
    Eigen::VectorXd theta;
    /// Estimator built on h_opt = theta' H.
    double beta_a = 0.0;
    /// [E^{A H'} E^{s2(G) H H'}^-1 E^{H A}]^-1 / n.
    double variance = 0.0;
};

/// Efficient combination of a basis of valid instruments given residuals
/// from a preliminary consistent fit. Moments are taken about the sample
/// means, matching a regression with intercept.
HOptResult h_opt_combination(const Dataset& d, const InstrumentMatrix& basis,
                             const Eigen::VectorXd& residual,
                             ResidualVarianceModel model = ResidualVarianceModel::SaturatedCells);

/// 2SLS instrumented by the named raw columns, with the remaining columns
/// entered as exogenous regressors in both stages.
FitResult fit_oracle_2sls(const Dataset& d, const IndexTuple& valid_indices);

/// 2SLS instrumented by every raw column.
FitResult fit_naive_2sls(const Dataset& d);

}  // namespace mr2
