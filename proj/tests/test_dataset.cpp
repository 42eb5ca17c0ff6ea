#include "doctest.h"
#include "helpers.hpp"

#include "mr2/dataset.hpp"
#include "mr2/errors.hpp"

#include <algorithm>
#include <numeric>

using namespace mr2;
using mr2::test::write_text;

TEST_CASE("load_csv reads a three-row file")
{
    const auto path = write_text("three.csv", "Y,A,G1,G2\n1.5,2,1,0\n-0.5,1,0,1\n3,0.25,1,1\n");
    const auto d = load_csv(path, {"Y", "A", {"G1", "G2"}, {}});
    CHECK(d.n() == 3);
    CHECK(d.k() == 2);
    CHECK(d.y()(0) == 1.5);
    CHECK(d.a()(2) == 0.25);
    CHECK(d.g()(1, 1) == 1.0);
    CHECK(d.g_names() == std::vector<std::string>{"G1", "G2"});
    CHECK_FALSE(d.has_covariates());
    CHECK(d.instruments_binary());
}

TEST_CASE("load_csv selects columns by name in any order and reads covariates")
{
    const auto path =
        write_text("reordered.csv", "M1,G2,junk,A,Y,G1\n0.1,1,x,2,5,0\n0.2,0,y,3,6,1\n0.4,1,z,4,7,1\n");
    const auto d = load_csv(path, {"Y", "A", {"G1", "G2"}, {"M1"}});
    CHECK(d.y()(1) == 6.0);
    CHECK(d.g()(0, 0) == 0.0);
    CHECK(d.g()(0, 1) == 1.0);
    REQUIRE(d.has_covariates());
    CHECK((*d.m())(2, 0) == 0.4);
}

TEST_CASE("load_csv rejects a constant instrument column by name")
{
    const auto path = write_text("constant.csv", "Y,A,G1,G2\n1,2,1,0\n2,1,0,0\n3,0,1,0\n");
    try {
        load_csv(path, {"Y", "A", {"G1", "G2"}, {}});
        FAIL("expected DegenerateInstrumentError");
    } catch (const DegenerateInstrumentError& e) {
        CHECK(e.name() == "G2");
    }
}

TEST_CASE("load_csv reports the row and column of an unparsable cell")
{
    std::string text = "Y,A,G1\n";
    for (int r = 1; r <= 9; ++r)
        text += (r == 7 ? std::string("NA") : std::to_string(r)) + "," + std::to_string(r) + "," +
                std::to_string(r % 2) + "\n";
    const auto path = write_text("na.csv", text);
    try {
        load_csv(path, {"Y", "A", {"G1"}, {}});
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 7);
        CHECK(e.column() == "Y");
        CHECK(std::string(e.what()).find("row 7") != std::string::npos);
    }
}

TEST_CASE("load_csv names a missing column")
{
    const auto path = write_text("missing.csv", "Y,A,G1\n1,2,0\n2,3,1\n");
    try {
        load_csv(path, {"Y", "A", {"G1", "G7"}, {}});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("'G7'") != std::string::npos);
    }
}

TEST_CASE("load_csv rejects an empty instrument list and a missing file")
{
    const auto path = write_text("noinst.csv", "Y,A,G1\n1,2,0\n2,3,1\n");
    CHECK_THROWS_AS(load_csv(path, {"Y", "A", {}, {}}), ParameterError);
    CHECK_THROWS_AS(load_csv(mr2::test::temp_path("does-not-exist.csv"), {"Y", "A", {"G1"}, {}}),
                    DataError);
}

TEST_CASE("load_csv tolerates a byte-order mark, quoted headers and CRLF")
{
    const auto path = write_text("bom.csv", "\xEF\xBB\xBF\"Y\",\"A\",\"G1\"\r\n1,2,0\r\n2,3,1\r\n");
    const auto d = load_csv(path, {"Y", "A", {"G1"}, {}});
    CHECK(d.n() == 2);
    CHECK(d.a()(1) == 3.0);
}

TEST_CASE("Dataset::create enforces its invariants")
{
    Eigen::VectorXd y(3), a(3);
    y << 1, 2, 3;
    a << 0, 1, 2;
    Eigen::MatrixXd g(3, 1);
    g << 0, 1, 1;
    CHECK_NOTHROW(Dataset::create(y, a, g));

    Eigen::VectorXd bad = y;
    bad(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(Dataset::create(bad, a, g), DataError);
    CHECK_THROWS_AS(Dataset::create(y, Eigen::VectorXd(2), g), DataError);
    CHECK_THROWS_AS(Dataset::create(y.head(1), a.head(1), g.topRows(1)), DataError);
    CHECK_THROWS_AS(Dataset::create(y, a, Eigen::MatrixXd(3, 0)), DataError);

    const auto d = Dataset::create(y, a, g);
    CHECK(d.g_names() == std::vector<std::string>{"G1"});
}

TEST_CASE("column_means")
{
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(4, 0, 3);
    Eigen::MatrixXd g(4, 1);
    g << 1, 0, 1, 0;
    CHECK(column_means(Dataset::create(y, y, g))(0) == doctest::Approx(0.5));

    Eigen::MatrixXd g2(3, 2);
    g2 << 1, 0, 0, 0, 1, 1;
    const auto m = column_means(Dataset::create(y.head(3), y.head(3), g2));
    CHECK(m(0) == doctest::Approx(2.0 / 3.0));
    CHECK(m(1) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("column_means is invariant to row permutation")
{
    std::mt19937_64 rng(11);
    const Eigen::Index n = 500;
    Eigen::MatrixXd g = mr2::test::bernoulli(n, 4, 0.3, rng);
    Eigen::VectorXd y = mr2::test::normals(n, rng);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::MatrixXd gp(n, 4);
    Eigen::VectorXd yp(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        gp.row(i) = g.row(order[static_cast<std::size_t>(i)]);
        yp(i) = y(order[static_cast<std::size_t>(i)]);
    }
    const auto m1 = column_means(Dataset::create(y, y, g));
    const auto m2 = column_means(Dataset::create(yp, yp, gp));
    CHECK((m1 - m2).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("write_csv then load_csv round-trips exactly")
{
    std::mt19937_64 rng(5);
    const Eigen::Index n = 200;
    Eigen::MatrixXd g = mr2::test::bernoulli(n, 3, 0.6, rng);
    g.col(2) = mr2::test::normals(n, rng) * 1e-3;
    Eigen::MatrixXd m = mr2::test::normals(n, rng) * 1e7;
    const auto d = Dataset::create(mr2::test::normals(n, rng) * 1e-9, mr2::test::normals(n, rng) * 3.0,
                                   g, {"a1", "a2", "a3"}, m, {"pc1"});
    const auto path = mr2::test::temp_path("roundtrip.csv");
    write_csv(d, path);
    const auto back = load_csv(path, {"Y", "A", {"a1", "a2", "a3"}, {"pc1"}});
    CHECK(back.y() == d.y());
    CHECK(back.a() == d.a());
    CHECK(back.g() == d.g());
    CHECK(*back.m() == *d.m());
}
