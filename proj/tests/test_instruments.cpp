#include "doctest.h"
#include "helpers.hpp"

#include "mr2/errors.hpp"
#include "mr2/instruments.hpp"
#include "mr2/linalg.hpp"
#include "mr2/subsets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace mr2;

namespace {

Dataset with_instruments(const Eigen::MatrixXd& g, std::optional<Eigen::MatrixXd> m = std::nullopt)
{
    const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(g.rows(), 0.0, 1.0);
    return Dataset::create(y, y, g, {}, std::move(m));
}

// Every one of the 2^k cells equally often, rows shuffled: the empirical
// joint pmf is exactly the product of its marginals.
Eigen::MatrixXd balanced_grid(Eigen::Index n, int k, std::mt19937_64& rng)
{
    const Eigen::Index cells = Eigen::Index{1} << k;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::MatrixXd g(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index c = order[static_cast<std::size_t>(i)] % cells;
        for (int s = 0; s < k; ++s)
            g(i, s) = ((c >> s) & 1) ? 1.0 : 0.0;
    }
    return g;
}

}  // namespace

TEST_CASE("default_h sums the subset's columns")
{
    Eigen::MatrixXd g(3, 4);
    g << 1, 0, 1, 1,
         1, 1, 1, 0,
         0, 0, 0, 1;
    const auto d = with_instruments(g);
    CHECK(default_h({1, 2}, d)(0) == 1.0);
    CHECK(default_h({1, 2, 3}, d)(1) == 3.0);
    CHECK(default_h({3}, d) == Eigen::VectorXd(d.g().col(2)));
    CHECK_THROWS_AS(default_h({5}, d), ParameterError);
}

TEST_CASE("K=2, k_dagger=1: both columns equal the centered product")
{
    Eigen::MatrixXd g(4, 2);
    g << 1, 0,
         0, 1,
         1, 1,
         0, 0;
    const auto d = with_instruments(g);
    const auto z = build_instruments(d, enumerate_family(2, 1));
    REQUIRE(z.cols() == 2);
    CHECK(z.z(0, 0) == -0.25);
    CHECK(z.z(0, 1) == -0.25);
    CHECK(z.z.col(0) == z.z.col(1));
    CHECK(z.column_names() == std::vector<std::string>{"Z_1", "Z_2"});
    CHECK(z.g_centering(0, 0) == 0.5);
}

TEST_CASE("k_dagger = K gives the centered H with an empty complement product")
{
    std::mt19937_64 rng(3);
    const auto g = mr2::test::bernoulli(400, 3, 0.7, rng);
    const auto d = with_instruments(g);
    const auto z = build_instruments(d, enumerate_family(3, 3));
    REQUIRE(z.cols() == 1);
    const Eigen::VectorXd h = g.rowwise().sum();
    const Eigen::VectorXd expected = h.array() - h.mean();
    CHECK((z.z.col(0) - expected).cwiseAbs().maxCoeff() < 1e-12);
    const double sd = std::sqrt((z.z.col(0).array() - z.z.col(0).mean()).square().mean());
    CHECK(std::abs(z.z.col(0).mean()) <= 1e-10 * sd);
}

TEST_CASE("k_dagger = 1 columns all equal prod_k (G_k - mean G_k) exactly")
{
    std::mt19937_64 rng(17);
    for (int k : {1, 2, 3, 5, 7}) {
        const auto g = mr2::test::bernoulli(2000, k, 0.8, rng);
        const auto d = with_instruments(g);
        Eigen::VectorXd expected = Eigen::VectorXd::Ones(d.n());
        for (int s = 0; s < k; ++s) {
            const Eigen::VectorXd col = g.col(s);
            expected.array() *= col.array() - mean_of(col);
        }
        const auto z = build_instruments(d, enumerate_family(k, 1));
        REQUIRE(z.cols() == k);
        for (Eigen::Index j = 0; j < z.cols(); ++j)
            CHECK(z.z.col(j) == expected);
    }
}

TEST_CASE("columns follow the definition for a general family")
{
    std::mt19937_64 rng(23);
    const auto g = mr2::test::bernoulli(300, 5, 0.6, rng);
    const auto d = with_instruments(g);
    const auto fam = enumerate_family(5, 2);
    const auto z = build_instruments(d, fam);
    CHECK(z.cols() == 10);
    const Eigen::VectorXd means = column_means(d);
    for (std::size_t j = 0; j < fam.size(); ++j) {
        const auto& subset = fam.members[j];
        Eigen::VectorXd h = Eigen::VectorXd::Zero(d.n());
        for (int s : subset)
            h += g.col(s - 1);
        Eigen::ArrayXd expected = h.array() - h.mean();
        for (int s : complement(subset, 5))
            expected *= g.col(s - 1).array() - means(s - 1);
        CHECK((z.z.col(static_cast<Eigen::Index>(j)).array() - expected).abs().maxCoeff() < 1e-12);
        CHECK(z.labels[j] == subset);
    }
}

TEST_CASE("generated instruments are uncorrelated with complement indicator products")
{
    std::mt19937_64 rng(2024);
    const Eigen::Index n = 100000;
    const auto g = mr2::test::bernoulli(n, 5, 0.8, rng);
    const auto d = with_instruments(g);
    const auto fam = enumerate_family(5, 2);
    const auto z = build_instruments(d, fam);
    int checks = 0;
    for (std::size_t j = 0; j < fam.size(); ++j) {
        const auto comp = complement(fam.members[j], 5);
        const int c = static_cast<int>(comp.size());
        for (unsigned mask = 0; mask < (1U << c); ++mask) {
            Eigen::ArrayXd f = Eigen::ArrayXd::Ones(n);
            for (int t = 0; t < c; ++t)
                if (mask & (1U << t))
                    f *= g.col(comp[static_cast<std::size_t>(t)] - 1).array();
            const Eigen::ArrayXd prod = z.z.col(static_cast<Eigen::Index>(j)).array() * f;
            const double mean = prod.mean();
            const double se = std::sqrt((prod - mean).square().sum() / static_cast<double>(n - 1)) /
                              std::sqrt(static_cast<double>(n));
            CHECK(std::abs(mean) <= 3.0 * se);
            ++checks;
        }
    }
    CHECK(checks == 80);
}

TEST_CASE("column means vanish at the Monte Carlo rate")
{
    std::mt19937_64 rng(8);
    const Eigen::Index n = 20000;
    const auto d = with_instruments(mr2::test::bernoulli(n, 4, 0.8, rng));
    const auto z = build_instruments(d, enumerate_family(4, 2));
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double mean = z.z.col(j).mean();
        const double sd = std::sqrt((z.z.col(j).array() - mean).square().mean());
        CHECK(std::abs(mean) < 5.0 * sd / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("permuting instrument columns permutes the generated columns")
{
    std::mt19937_64 rng(31);
    const auto g = mr2::test::bernoulli(500, 4, 0.5, rng);
    const std::vector<int> perm{2, 0, 3, 1};  // new column c holds old column perm[c]
    Eigen::MatrixXd gp(g.rows(), 4);
    for (int c = 0; c < 4; ++c)
        gp.col(c) = g.col(perm[static_cast<std::size_t>(c)]);
    const auto z = build_instruments(with_instruments(g), enumerate_family(4, 2));
    const auto zp = build_instruments(with_instruments(gp), enumerate_family(4, 2));
    for (std::size_t j = 0; j < zp.labels.size(); ++j) {
        IndexTuple old;
        for (int s : zp.labels[j])
            old.push_back(perm[static_cast<std::size_t>(s - 1)] + 1);
        std::sort(old.begin(), old.end());
        const auto it = std::find(z.labels.begin(), z.labels.end(), old);
        REQUIRE(it != z.labels.end());
        const auto jo = static_cast<Eigen::Index>(it - z.labels.begin());
        CHECK((zp.z.col(static_cast<Eigen::Index>(j)) - z.z.col(jo)).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("constant H gives a degenerate-instrument error naming the subset")
{
    std::mt19937_64 rng(4);
    const auto d = with_instruments(mr2::test::bernoulli(100, 3, 0.5, rng));
    BuildOptions opts;
    opts.h = [](const IndexTuple&, const Dataset& ds) { return Eigen::VectorXd::Zero(ds.n()).eval(); };
    try {
        build_instruments(d, enumerate_family(3, 2), opts);
        FAIL("expected DegenerateInstrumentError");
    } catch (const DegenerateInstrumentError& e) {
        CHECK(e.name() == "{1,2}");
    }
}

TEST_CASE("custom H functions are used as given")
{
    std::mt19937_64 rng(41);
    const auto g = mr2::test::bernoulli(300, 3, 0.5, rng);
    const auto d = with_instruments(g);
    BuildOptions opts;
    opts.h = [](const IndexTuple& s, const Dataset& ds) {
        Eigen::VectorXd v = Eigen::VectorXd::Ones(ds.n());
        for (int i : s)
            v.array() *= ds.g().col(i - 1).array();
        return v;
    };
    const auto z = build_instruments(d, enumerate_family(3, 2), opts);
    const Eigen::VectorXd h = g.col(0).array() * g.col(1).array();
    const Eigen::ArrayXd expected = (h.array() - h.mean()) * (g.col(2).array() - g.col(2).mean());
    CHECK((z.z.col(0).array() - expected).abs().maxCoeff() < 1e-13);
}

TEST_CASE("family and dataset must agree on K")
{
    std::mt19937_64 rng(4);
    const auto d = with_instruments(mr2::test::bernoulli(50, 3, 0.5, rng));
    CHECK_THROWS_AS(build_instruments(d, enumerate_family(4, 2)), ParameterError);
}

TEST_CASE("covariate adjustment centers on linear fits in M")
{
    std::mt19937_64 rng(99);
    const Eigen::Index n = 1000;
    const auto g = mr2::test::bernoulli(n, 3, 0.5, rng);
    Eigen::MatrixXd m(n, 2);
    m.col(0) = mr2::test::normals(n, rng);
    m.col(1) = mr2::test::normals(n, rng);
    const auto d = with_instruments(g, m);
    BuildOptions opts;
    opts.adjust_for_covariates = true;
    const auto fam = enumerate_family(3, 2);
    const auto z = build_instruments(d, fam, opts);
    CHECK(z.covariate_adjusted);
    CHECK(z.g_centering.rows() == 3);
    CHECK(z.h_centering.rows() == 3);

    Eigen::MatrixXd design(n, 3);
    design << Eigen::VectorXd::Ones(n), m;
    auto resid = [&](const Eigen::VectorXd& v) { return least_squares(design, v).residual; };
    const Eigen::VectorXd h = g.col(0) + g.col(1);
    const Eigen::ArrayXd expected = resid(h).array() * resid(g.col(2)).array();
    CHECK((z.z.col(0).array() - expected).abs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(build_instruments(with_instruments(g), fam, opts), ParameterError);
    Eigen::MatrixXd collinear(n, 2);
    collinear.col(0) = m.col(0);
    collinear.col(1) = 2.0 * m.col(0);
    CHECK_THROWS_AS(build_instruments(with_instruments(g, collinear), fam, opts), CollinearityError);
}

TEST_CASE("interaction basis holds the centered products of identified orders")
{
    std::mt19937_64 rng(12);
    const auto g = mr2::test::bernoulli(500, 5, 0.8, rng);
    const auto d = with_instruments(g);
    const auto basis = build_interaction_basis(d, 2);
    CHECK(basis.cols() == 6);
    CHECK(basis.labels.back() == IndexTuple{1, 2, 3, 4, 5});
    const Eigen::VectorXd means = column_means(d);
    Eigen::ArrayXd expected = Eigen::ArrayXd::Ones(d.n());
    for (int s : {1, 2, 3, 4})
        expected *= g.col(s - 1).array() - means(s - 1);
    CHECK((basis.z.col(0).array() - expected).abs().maxCoeff() < 1e-14);
}

TEST_CASE("weights: duplicated columns")
{
    Eigen::MatrixXd g(4, 2);
    g << 1, 1,
         0, 0,
         1, 1,
         0, 0;
    const auto w = estimate_weights(g);
    CHECK(w.w(0) == doctest::Approx(0.5));
    CHECK(w.w(1) == doctest::Approx(0.5));
}

TEST_CASE("weights: a single row and exact independence give one")
{
    Eigen::MatrixXd one(1, 3);
    one << 1, 0, 1;
    CHECK(estimate_weights(one).w(0) == 1.0);

    std::mt19937_64 rng(2);
    const auto g = balanced_grid(4096, 4, rng);
    const auto w = estimate_weights(g);
    CHECK((w.w.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("weights: independent draws stay near one")
{
    std::mt19937_64 rng(77);
    const auto g = mr2::test::bernoulli(100000, 3, 0.5, rng);
    const auto w = estimate_weights(g);
    CHECK(w.w.minCoeff() >= 0.9);
    CHECK(w.w.maxCoeff() <= 1.1);
    CHECK(std::abs(w.w.mean() - 1.0) < 0.01);
    CHECK((w.w.array() > 0.0).all());
}

TEST_CASE("weights: errors and smoothing")
{
    Eigen::MatrixXd real(3, 1);
    real << 0.5, 1, 0;
    CHECK_THROWS_AS(estimate_weights(real), UnsupportedError);
    CHECK_THROWS_AS(estimate_weights(Eigen::MatrixXd::Zero(2, 21)), CapacityError);
    WeightOptions small;
    small.cell_cap = 4;
    CHECK_THROWS_AS(estimate_weights(Eigen::MatrixXd::Zero(2, 3), small), CapacityError);

    Eigen::MatrixXd g(4, 2);
    g << 1, 1, 0, 0, 1, 1, 0, 0;
    WeightOptions smooth;
    smooth.smoothing = 1.0;
    // joint (2 + 1) / (4 + 4), marginals 1/2 each
    CHECK(estimate_weights(g, smooth).w(0) == doctest::Approx(0.25 / 0.375));
}

TEST_CASE("weighted instruments reduce to the unweighted ones under exact independence")
{
    std::mt19937_64 rng(64);
    const Eigen::Index n = 100000;
    const auto g = balanced_grid(n, 3, rng);
    const auto d = with_instruments(g);
    const auto fam = enumerate_family(3, 2);
    const auto w = estimate_weights(d);
    const auto zw = build_weighted_instruments(d, fam, w);
    const auto z = build_instruments(d, fam);
    REQUIRE(zw.row_weights);
    const double scale = z.z.cwiseAbs().maxCoeff();
    CHECK((zw.z - z.z).cwiseAbs().maxCoeff() <= 1e-8 * scale);
}

TEST_CASE("weighted cross-moments match the two-cell empirical law")
{
    // G1 = G2: only cells (0,0) and (1,1) occur
    std::mt19937_64 rng(15);
    const Eigen::Index n = 1000;
    Eigen::MatrixXd g(n, 2);
    g.col(0) = mr2::test::bernoulli(n, 1, 0.3, rng);
    g.col(1) = g.col(0);
    const Eigen::VectorXd a = 2.0 * g.col(0) + mr2::test::normals(n, rng);
    const Eigen::VectorXd y = 0.5 * a + mr2::test::normals(n, rng);
    const auto d = Dataset::create(y, a, g);
    const auto fam = enumerate_family(2, 1);
    const auto zw = build_weighted_instruments(d, fam, estimate_weights(d));

    const double p = g.col(0).mean();
    const double w11 = p * p / p;
    const double w00 = (1 - p) * (1 - p) / (1 - p);
    // weighted mean of G under these weights
    const double eg = p * w11 / (p * w11 + (1 - p) * w00);
    const double z11 = (1 - eg) * (1 - eg);
    const double z00 = eg * eg;
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool one = g(i, 0) == 1.0;
        const double wi = one ? w11 : w00;
        const double zi = one ? z11 : z00;
        num += wi * zi * y(i);
        den += wi * zi * a(i);
    }
    const Eigen::ArrayXd ww = *zw.row_weights;
    const double num_lib = (ww * zw.z.col(0).array() * y.array()).sum();
    const double den_lib = (ww * zw.z.col(0).array() * a.array()).sum();
    CHECK(num_lib == doctest::Approx(num).epsilon(1e-12));
    CHECK(den_lib == doctest::Approx(den).epsilon(1e-12));
}
