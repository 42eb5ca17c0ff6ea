#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mr2 {

/// The empirical sample (Y, A, G_1..G_K[, M]). Immutable once built; every
/// constructor path runs the same validation.
class Dataset {
public:
    /// Validates and takes ownership. Throws DataError (or a subclass) when
    /// an invariant fails: n < 2, K < 1, length mismatch, non-finite values,
    /// or a constant instrument column.
    static Dataset create(Eigen::VectorXd y, Eigen::VectorXd a, Eigen::MatrixXd g,
                          std::vector<std::string> g_names = {},
                          std::optional<Eigen::MatrixXd> m = std::nullopt,
                          std::vector<std::string> m_names = {});

    const Eigen::VectorXd& y() const noexcept { return y_; }
    const Eigen::VectorXd& a() const noexcept { return a_; }
    const Eigen::MatrixXd& g() const noexcept { return g_; }
    const std::optional<Eigen::MatrixXd>& m() const noexcept { return m_; }
    const std::vector<std::string>& g_names() const noexcept { return g_names_; }
    const std::vector<std::string>& m_names() const noexcept { return m_names_; }

    Eigen::Index n() const noexcept { return y_.size(); }
    Eigen::Index k() const noexcept { return g_.cols(); }
    bool has_covariates() const noexcept { return m_.has_value(); }

    /// True when every instrument entry is exactly 0 or 1.
    bool instruments_binary() const;

private:
    Dataset() = default;

    Eigen::VectorXd y_;
    Eigen::VectorXd a_;
    Eigen::MatrixXd g_;
    std::optional<Eigen::MatrixXd> m_;
    std::vector<std::string> g_names_;
    std::vector<std::string> m_names_;
};

/// Empty outcome or exposure names load as zero columns (instrument export).
struct CsvColumns {
    std::string outcome;
    std::string exposure;
    std::vector<std::string> instruments;
    std::vector<std::string> covariates;
};

Dataset load_csv(const std::filesystem::path& path, const CsvColumns& columns);

/// Writes Y, A, the instruments and covariates with 17 significant digits,
/// under the names stored in the dataset (outcome and exposure as "Y", "A"
/// unless overridden).
void write_csv(const Dataset& d, const std::filesystem::path& path,
               const std::string& outcome_name = "Y",
               const std::string& exposure_name = "A");

/// Per-instrument sample means (1/n) sum_i g[i,k].
Eigen::VectorXd column_means(const Dataset& d);

/// Plain column mean, shared by every centering path so identical inputs
/// give bit-identical means.
double mean_of(const Eigen::VectorXd& v);

}  // namespace mr2
