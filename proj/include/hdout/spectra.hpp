#pragma once

#include "hdout/model.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>

namespace hdout {

enum class SpectrumMethod {
    automatic,  ///< dual when d > n, primal otherwise
    primal,     ///< eigendecomposition of the d x d matrix (1/n) X X^T
    dual,       ///< eigendecomposition of the n x n Gram matrix (1/n) X^T X
};

struct SpectrumOptions {
    SpectrumMethod method = SpectrumMethod::automatic;
    /// Row-centered covariance with divisor n - 1. Exploratory only; the
    /// consistency checks always use the uncentered form.
    bool centered = false;
    bool compute_vectors = true;
    /// Compute only the leading k eigenpairs.
    std::optional<std::size_t> top_k;
    /// Eigenvalues below rank_tolerance * lambda_1 are reported as zero.
    double rank_tolerance = 1e-10;
};

/**
 * Sorted spectrum of the sample covariance.
 *
 * eigenvalues has min(d, n) entries (or top_k), descending and non-negative.
 * eigenvectors holds one d-dimensional unit column per retained eigenvalue,
 * i.e. per eigenvalue above the rank tolerance. The largest-magnitude entry
 * of every column is positive.
 */
struct SpectralDecomposition {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
    SpectrumMethod method = SpectrumMethod::primal;
    std::size_t d = 0;
    std::size_t n = 0;

    std::size_t retained() const noexcept { return static_cast<std::size_t>(eigenvectors.cols()); }
};

SpectralDecomposition sample_covariance_spectrum(const Eigen::MatrixXd& X,
                                                 const SpectrumOptions& options = {});

/// Eigenvalues (descending) of the spike part A and the noise part B of the
/// dual matrix, A = (1/n) sum_{i<K} y_i y_i^T over the first K coefficient rows.
/// Both follow the spectrum's rule: values below rank_tolerance * max are zero.
struct ABSplit {
    Eigen::VectorXd a;
    Eigen::VectorXd b;
};

ABSplit ab_split_eigenvalues(const GeneratedDataset& dataset, std::size_t K);

namespace detail {

struct SymmetricEigen {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // matching columns, empty if not requested
};

/// LAPACK-backed dense symmetric eigensolver (lower triangle is read).
SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& A, bool vectors,
                               std::optional<std::size_t> top_k = std::nullopt);

/// Makes the largest-|.| entry of each column positive.
void fix_signs(Eigen::MatrixXd& vectors);

} // namespace detail

} // namespace hdout
