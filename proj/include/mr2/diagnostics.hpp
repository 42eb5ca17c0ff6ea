#pragma once

#include "mr2/dataset.hpp"
#include "mr2/estimator.hpp"
#include "mr2/instruments.hpp"

#include <Eigen/Dense>

#include <string>

namespace mr2 {

struct FirstStageTest {
    double f = 0.0;
    double p_value = 1.0;
    Eigen::Index df1 = 0;
    Eigen::Index df2 = 0;
};

/// Classical F test that every instrument coefficient is zero in the
/// regression of A on (1, controls, instruments):
///   F = [(RSS0 - RSS1) / J] / [RSS1 / (n - J - 1 - q)]
/// with its upper-tail probability under F(J, n - J - 1 - q).
FirstStageTest first_stage_f(const Eigen::VectorXd& a, const Eigen::MatrixXd& instruments,
                             const Eigen::MatrixXd& controls = {},
                             const Eigen::VectorXd* weights = nullptr);

FirstStageTest first_stage_f(const Dataset& d, const InstrumentMatrix& z);

/// F statistic and p-value from restricted/unrestricted residual sums of squares.
FirstStageTest f_test_from_rss(double rss0, double rss1, Eigen::Index df1, Eigen::Index df2);

enum class HausmanStatus { Ok, NotApplicable };

struct HausmanResult {
    HausmanStatus status = HausmanStatus::NotApplicable;
    double ht = 0.0;
    double p_value = 1.0;
    int k_ref = 0;
    int k_alt = 0;
};

std::string to_string(HausmanStatus s);

/// ht = (b_ref - b_alt) / sqrt(v_ref - v_alt), two-sided normal p-value.
/// NotApplicable (no statistic) unless v_ref > v_alt.
HausmanResult hausman_test(double beta_ref, double var_ref, double beta_alt, double var_alt,
                           int k_ref = 0, int k_alt = 0);

HausmanResult hausman_test(const FitResult& fit_ref, const FitResult& fit_alt,
                           VarianceMode mode = VarianceMode::Sandwich);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace mr2
