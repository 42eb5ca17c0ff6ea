#include "mr2/instruments.hpp"

#include "mr2/errors.hpp"
#include "mr2/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace mr2 {

namespace {

std::string subset_label(const IndexTuple& s)
{
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i)
            out += ',';
        out += std::to_string(s[i]);
    }
    return out + "}";
}

// Centering model: either a (weighted) mean or OLS on (1, M).
class Centerer {
public:
    Centerer(const Dataset& d, bool adjust, const Eigen::VectorXd* weights)
        : weights_(weights), adjust_(adjust)
    {
        if (!adjust)
            return;
        if (!d.m())
            throw ParameterError("covariate adjustment requested but the dataset has no covariates");
        const auto& m = *d.m();
        design_.resize(d.n(), m.cols() + 1);
        design_.col(0).setOnes();
        design_.rightCols(m.cols()) = m;
        names_.push_back("intercept");
        names_.insert(names_.end(), d.m_names().begin(), d.m_names().end());
    }

    Eigen::Index coef_rows() const noexcept { return adjust_ ? design_.cols() : 1; }

    // Returns v - E^[v] and stores the centering coefficients in `coef`.
    Eigen::VectorXd center(const Eigen::VectorXd& v, Eigen::Ref<Eigen::VectorXd> coef) const
    {
        if (!adjust_) {
            coef(0) = weighted_mean(v, weights_);
            return (v.array() - coef(0)).matrix();
        }
        auto fit = least_squares(design_, v, names_, weights_);
        coef = fit.coef;
        return std::move(fit.residual);
    }

private:
    const Eigen::VectorXd* weights_;
    bool adjust_;
    Eigen::MatrixXd design_;
    std::vector<std::string> names_;
};

void check_nondegenerate(const Eigen::VectorXd& z, double scale, const IndexTuple& label)
{
    const double mean = z.mean();
    const double sd = std::sqrt((z.array() - mean).square().mean());
    if (!(sd > 1e-12 * scale))
        throw DegenerateInstrumentError("generated instrument for subset " + subset_label(label) +
                                            " has zero sample variance",
                                        subset_label(label));
}

InstrumentMatrix assemble(const Dataset& d, const SubsetFamily& fam, const HFunction& h,
                          bool adjust, const Eigen::VectorXd* weights)
{
    if (fam.k_total != d.k())
        throw ParameterError("subset family was built for K=" + std::to_string(fam.k_total) +
                             " but the dataset has " + std::to_string(d.k()) + " instruments");
    if (!h)
        throw ParameterError("H function is empty");

    const Centerer centerer(d, adjust, weights);
    const Eigen::Index n = d.n();
    const Eigen::Index k = d.k();
    const auto j_count = static_cast<Eigen::Index>(fam.members.size());

    InstrumentMatrix out;
    out.k_total = fam.k_total;
    out.k_dagger = fam.k_dagger;
    out.labels = fam.members;
    out.covariate_adjusted = adjust;
    out.g_centering.resize(centerer.coef_rows(), k);
    out.h_centering.resize(centerer.coef_rows(), j_count);
    if (weights)
        out.row_weights = *weights;

    Eigen::MatrixXd g_centered(n, k);
    Eigen::VectorXd g_scale(k);
    for (Eigen::Index s = 0; s < k; ++s) {
        g_centered.col(s) = centerer.center(d.g().col(s), out.g_centering.col(s));
        g_scale(s) = g_centered.col(s).cwiseAbs().maxCoeff();
    }

    out.z.resize(n, j_count);
    std::vector<bool> in_subset(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < j_count; ++j) {
        const auto& subset = fam.members[static_cast<std::size_t>(j)];
        const Eigen::VectorXd hv = h(subset, d);
        if (hv.size() != n)
            throw ParameterError("H function returned " + std::to_string(hv.size()) +
                                 " values for " + std::to_string(n) + " rows");
        const Eigen::VectorXd h_centered = centerer.center(hv, out.h_centering.col(j));

        std::fill(in_subset.begin(), in_subset.end(), false);
        for (int s : subset)
            in_subset[static_cast<std::size_t>(s - 1)] = true;

        // Factors multiply in ascending index order, the H factor standing at
        // the position of the subset's smallest index. For k-dagger = 1 every
        // column then repeats the same floating-point operations.
        auto col = out.z.col(j);
        col.setOnes();
        double scale = 1.0;
        for (Eigen::Index s = 0; s < k; ++s) {
            if (s == subset.front() - 1) {
                col.array() *= h_centered.array();
                scale *= h_centered.cwiseAbs().maxCoeff();
            } else if (!in_subset[static_cast<std::size_t>(s)]) {
                col.array() *= g_centered.col(s).array();
                scale *= g_scale(s);
            }
        }
        check_nondegenerate(col, scale, subset);
    }
    return out;
}

}  // namespace

std::vector<std::string> InstrumentMatrix::column_names() const
{
    std::vector<std::string> names;
    names.reserve(labels.size());
    for (const auto& s : labels) {
        std::string name = "Z";
        for (int i : s)
            name += "_" + std::to_string(i);
        names.push_back(std::move(name));
    }
    return names;
}

Eigen::VectorXd default_h(const IndexTuple& subset, const Dataset& d)
{
    Eigen::VectorXd h = Eigen::VectorXd::Zero(d.n());
    for (int s : subset) {
        if (s < 1 || s > d.k())
            throw ParameterError("instrument index " + std::to_string(s) + " outside 1.." +
                                 std::to_string(d.k()));
        h += d.g().col(s - 1);
    }
    return h;
}

InstrumentMatrix build_instruments(const Dataset& d, const SubsetFamily& fam,
                                   const BuildOptions& options)
{
    return assemble(d, fam, options.h, options.adjust_for_covariates, nullptr);
}

InstrumentMatrix build_weighted_instruments(const Dataset& d, const SubsetFamily& fam,
                                            const WeightVector& w, const HFunction& h)
{
    if (w.w.size() != d.n())
        throw ParameterError("weight vector length does not match the dataset");
    return assemble(d, fam, h, false, &w.w);
}

InstrumentMatrix build_interaction_basis(const Dataset& d, int k_dagger)
{
    const int k = static_cast<int>(d.k());
    InstrumentMatrix out;
    out.k_total = k;
    out.k_dagger = k_dagger;
    out.labels = partial_id_interactions(k, k_dagger);
    out.g_centering = column_means(d).transpose();
    out.h_centering.resize(1, 0);

    Eigen::MatrixXd g_centered = d.g().rowwise() - out.g_centering.row(0);
    out.z.resize(d.n(), static_cast<Eigen::Index>(out.labels.size()));
    for (std::size_t j = 0; j < out.labels.size(); ++j) {
        auto col = out.z.col(static_cast<Eigen::Index>(j));
        col.setOnes();
        double scale = 1.0;
        for (int s : out.labels[j]) {
            col.array() *= g_centered.col(s - 1).array();
            scale *= g_centered.col(s - 1).cwiseAbs().maxCoeff();
        }
        check_nondegenerate(col, scale, out.labels[j]);
    }
    return out;
}

WeightVector estimate_weights(const Eigen::Ref<const Eigen::MatrixXd>& g,
                              const WeightOptions& options)
{
    const Eigen::Index n = g.rows();
    const Eigen::Index k = g.cols();
    if (n < 1 || k < 1)
        throw ParameterError("weights need at least one row and one instrument");
    if (!(g.array() == 0.0 || g.array() == 1.0).all())
        throw UnsupportedError("density-ratio weights require binary (0/1) instruments");
    if (k >= 63 || (std::size_t{1} << k) > options.cell_cap)
        throw CapacityError("2^" + std::to_string(k) + " joint cells exceed the cap of " +
                                std::to_string(options.cell_cap),
                            std::ldexp(1.0, static_cast<int>(k)));
    if (options.smoothing < 0.0)
        throw ParameterError("smoothing constant must be nonnegative");

    std::vector<std::uint64_t> cell(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index s = 0; s < k; ++s)
            if (g(i, s) == 1.0)
                cell[static_cast<std::size_t>(i)] |= std::uint64_t{1} << s;

    std::unordered_map<std::uint64_t, double> counts;
    for (auto c : cell)
        counts[c] += 1.0;

    const double nn = static_cast<double>(n);
    const Eigen::VectorXd p1 = g.colwise().sum().transpose() / nn;
    const double denom = nn + options.smoothing * std::ldexp(1.0, static_cast<int>(k));

    WeightVector out;
    out.w.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = cell[static_cast<std::size_t>(i)];
        double product = 1.0;
        for (Eigen::Index s = 0; s < k; ++s)
            product *= ((c >> s) & 1U) ? p1(s) : 1.0 - p1(s);
        const double joint = (counts[c] + options.smoothing) / denom;
        out.w(i) = product / joint;
    }
    return out;
}

WeightVector estimate_weights(const Dataset& d, const WeightOptions& options)
{
    return estimate_weights(d.g(), options);
}

}  // namespace mr2
