#pragma once

#include "mr2/dataset.hpp"
#include "mr2/subsets.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mr2 {

/// h_k(G_k): maps a subset and the data to one value per row. Any function of
/// the subset's own columns yields valid instruments.
using HFunction = std::function<Eigen::VectorXd(const IndexTuple&, const Dataset&)>;

/// Allele-count sum over the subset: H_k = sum_{s in k} G_s.
Eigen::VectorXd default_h(const IndexTuple& subset, const Dataset& d);

/// Generated instruments, one column per subset label.
///
/// Column for subset k is (H_k - E^[H_k]) * prod_{s not in k} (G_s - E^[G_s]),
/// the empty product being 1. E^[.] is a (possibly weighted) sample mean, or
/// with covariate adjustment the fitted value of a linear regression on
/// (1, M). The centering models are kept as coefficient matrices on that
/// design: intercept-only when unadjusted, so the first row is then the mean.
struct InstrumentMatrix {
    Eigen::MatrixXd z;
    std::vector<IndexTuple> labels;
    int k_total = 0;
    int k_dagger = 0;

    Eigen::MatrixXd g_centering;  // (1 + p) x K
    Eigen::MatrixXd h_centering;  // (1 + p) x J
    bool covariate_adjusted = false;

    /// Set for correlated-instrument weighting; the estimator then applies
    /// these weights row-wise to every cross-moment.
    std::optional<Eigen::VectorXd> row_weights;

    Eigen::Index cols() const noexcept { return z.cols(); }
    std::vector<std::string> column_names() const;
};

struct BuildOptions {
    HFunction h = default_h;
    /// Replace marginal means by linear-in-M conditional means. Requires
    /// covariates on the dataset.
    bool adjust_for_covariates = false;
};

InstrumentMatrix build_instruments(const Dataset& d, const SubsetFamily& fam,
                                   const BuildOptions& options = {});

/// Centered-product basis prod_{s in S}(G_s - mean G_s) over every
/// interaction S of order >= K - k_dagger + 1. Used as the full H(G) basis
/// for the optimal combination.
InstrumentMatrix build_interaction_basis(const Dataset& d, int k_dagger);

/// Density-ratio weights prod_k f_k(G_k) / g(G) for binary instruments.
struct WeightVector {
    Eigen::VectorXd w;
};

struct WeightOptions {
    /// Additive count added to every one of the 2^K joint cells.
    double smoothing = 0.0;
    std::size_t cell_cap = std::size_t{1} << 20;
};

WeightVector estimate_weights(const Eigen::Ref<const Eigen::MatrixXd>& g,
                              const WeightOptions& options = {});
WeightVector estimate_weights(const Dataset& d, const WeightOptions& options = {});

/// As build_instruments, but centering constants are w-weighted means and
/// the returned matrix carries `w` as row weights.
InstrumentMatrix build_weighted_instruments(const Dataset& d, const SubsetFamily& fam,
                                            const WeightVector& w,
                                            const HFunction& h = default_h);

}  // namespace mr2
