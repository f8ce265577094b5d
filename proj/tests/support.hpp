#pragma once

#include "hdout/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace testing {

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    auto eng = hdout::rng::make_engine(seed, "test-matrix");
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = z(eng);
    return m;
}

inline Eigen::MatrixXd random_symmetric(Eigen::Index k, std::uint64_t seed) {
    const Eigen::MatrixXd g = gaussian_matrix(k, k, seed);
    return 0.5 * (g + g.transpose());
}

/// max_i min(|a_i - b_i|, |a_i + b_i|) over columns
inline double column_sign_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double worst = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c)
        worst = std::max(worst, std::min((a.col(c) - b.col(c)).cwiseAbs().maxCoeff(),
                                         (a.col(c) + b.col(c)).cwiseAbs().maxCoeff()));
    return worst;
}

} // namespace testing
