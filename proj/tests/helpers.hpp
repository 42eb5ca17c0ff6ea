#pragma once

#include "mr2/dataset.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace mr2::test {

inline std::filesystem::path temp_path(const std::string& name)
{
    return std::filesystem::path(MR2_TEST_TMPDIR) / name;
}

inline std::filesystem::path write_text(const std::string& name, const std::string& text)
{
    const auto path = temp_path(name);
    std::ofstream(path) << text;
    return path;
}

inline Eigen::MatrixXd bernoulli(Eigen::Index n, int k, double p, std::mt19937_64& rng)
{
    std::bernoulli_distribution draw(p);
    Eigen::MatrixXd g(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int c = 0; c < k; ++c)
            g(i, c) = draw(rng) ? 1.0 : 0.0;
    return g;
}

inline Eigen::VectorXd normals(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0)
{
    std::normal_distribution<double> draw(0.0, sd);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = draw(rng);
    return v;
}

inline double relative_error(double x, double ref)
{
    return std::abs(x - ref) / std::max(std::abs(ref), 1e-300);
}

}  // namespace mr2::test
