#pragma once

#include "mr2/dataset.hpp"
#include "mr2/estimator.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mr2 {

enum class Link {
    /// A = C * sum over every non-empty subset S of prod_{s in S} G_s + e2.
    IdentityFull,
    /// Main effects plus a random gamma-fraction of interactions, coefficient C.
    IdentitySparse,
    /// A = exp(C * sum_s G_s) + e2.
    Log,
    /// A = 1{-3 + C * sum_s G_s + e2 > 0}.
    Probit,
};

std::string to_string(Link link);
Link link_from_string(const std::string& s);

struct McScenario {
    std::string name = "custom";
    Eigen::Index n = 10000;
    int K = 5;
    double p = 0.8;
    std::vector<double> beta_direct{0, 0, 0, 0.2, 0.2};
    Link link = Link::IdentityFull;
    double C = 0.6;
    double gamma = 0.3;
    bool freeze_sparse_set = false;
    double beta_a = 1.0;
    Eigen::Matrix2d error_cov = (Eigen::Matrix2d() << 1.0, 0.25, 0.25, 1.0).finished();
    std::size_t reps = 1000;
    std::uint64_t seed = 1;
    /// k-dagger used by the MR2 estimator.
    int k_dagger = 2;
    VarianceMode variance = VarianceMode::Sandwich;

    /// Throws ParameterError when an invariant fails.
    void validate() const;

    /// 1-based indices with zero direct effect.
    IndexTuple valid_indices() const;
};

std::vector<std::string> preset_names();
/// Designs of the identity, sparse-interaction, log and probit studies:
/// table1-block1..3, table2-block1..4, table3-block1..3, table4-block1..3.
McScenario preset(const std::string& name);

/// `key = value` lines; `#` starts a comment. Keys mirror McScenario fields:
/// name, n, K, p, beta_direct (comma list), link, C, gamma, freeze_sparse_set,
/// beta_a, error_cov (var1, cov, var2), reps, seed, k_dagger, variance.
/// Unset keys keep their defaults.
McScenario parse_scenario(std::istream& in);
McScenario load_scenario(const std::filesystem::path& path);
std::string format_scenario(const McScenario& s);

/// Stream seed for one replication: splitmix64(splitmix64(seed) + rep).
/// Replications never share generator state.
std::uint64_t replication_seed(std::uint64_t master_seed, std::size_t rep_index);

/// Active interaction terms of the sparse design as instrument bitmasks
/// (bit s-1 set for G_s), main effects excluded.
std::vector<std::uint64_t> sparse_interactions(const McScenario& s, std::mt19937_64& rng);

/// One simulated sample; `rep_index` counts from 1.
Dataset generate(const McScenario& s, std::size_t rep_index);

struct EstimatorSummary {
    Method method = Method::Mr2;
    std::size_t successes = 0;
    std::size_t failures = 0;
    double mean_beta = 0.0;
    double abs_bias = 0.0;
    /// Monte Carlo standard error of the mean estimate.
    std::optional<double> mcse;
    std::optional<double> sqrt_var;
    double sqrt_evar = 0.0;
    double cov95 = 0.0;
};

struct McReport {
    McScenario scenario;
    std::vector<EstimatorSummary> estimators;

    const EstimatorSummary& at(Method m) const;
};

/// Runs every replication and aggregates in replication order, so the
/// report does not depend on `threads` (0 = hardware concurrency).
McReport run(const McScenario& s, const std::vector<Method>& methods, unsigned threads = 0);

}  // namespace mr2
