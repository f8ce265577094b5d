#include "hdout/spectra.hpp"

#include "hdout/errors.hpp"

#include <lapacke.h>

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace hdout {

namespace detail {

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& A, bool vectors,
                               std::optional<std::size_t> top_k) {
    const lapack_int k = static_cast<lapack_int>(A.rows());
    SymmetricEigen out;
    if (k == 0) return out;

    Eigen::MatrixXd work = A;
    const lapack_int wanted =
        top_k ? static_cast<lapack_int>(std::min<std::size_t>(*top_k, static_cast<std::size_t>(k))) : k;
    Eigen::VectorXd w(k);
    Eigen::MatrixXd z;
    lapack_int found = 0;
    lapack_int info = 0;
    if (wanted == k) {
        info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'L', k, work.data(), k, w.data());
        found = k;
        if (vectors) z = std::move(work);
    } else {
        if (vectors) z.resize(k, wanted);
        std::vector<lapack_int> support(2 * static_cast<std::size_t>(std::max<lapack_int>(wanted, 1)));
        info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'I', 'L', k, work.data(), k, 0.0,
                              0.0, k - wanted + 1, k, 0.0, &found, w.data(),
                              vectors ? z.data() : nullptr, k, support.data());
    }
    if (info != 0)
        throw DataError("symmetric eigensolver failed (LAPACK info " + std::to_string(info) + ")");

    // LAPACK returns ascending order.
    out.values = w.head(found).reverse();
    if (vectors) out.vectors = z.leftCols(found).rowwise().reverse();
    return out;
}

void fix_signs(Eigen::MatrixXd& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        Eigen::Index arg = 0;
        vectors.col(c).cwiseAbs().maxCoeff(&arg);
        if (vectors(arg, c) < 0.0) vectors.col(c) *= -1.0;
    }
}

} // namespace detail

namespace {

/// Within a run of equal eigenvalues, orders the sign-fixed columns by their
/// first differing entry (larger first).
void stabilize_ties(Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
    const Eigen::Index m = vectors.cols();
    if (m < 2) return;
    const double scale = std::max(std::abs(values(0)), 1.0);
    const double tie_tol = 64.0 * std::numeric_limits<double>::epsilon() * scale;
    Eigen::Index start = 0;
    while (start < m) {
        Eigen::Index end = start + 1;
        while (end < m && std::abs(values(end) - values(start)) <= tie_tol) ++end;
        if (end - start > 1) {
            std::vector<Eigen::Index> order(end - start);
            std::iota(order.begin(), order.end(), start);
            std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
                for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
                    if (vectors(r, a) != vectors(r, b)) return vectors(r, a) > vectors(r, b);
                }
                return false;
            });
            const Eigen::MatrixXd block = vectors.middleCols(start, end - start);
            for (Eigen::Index t = 0; t < end - start; ++t)
                vectors.col(start + t) = block.col(order[t] - start);
        }
        start = end;
    }
}

} // namespace

SpectralDecomposition sample_covariance_spectrum(const Eigen::MatrixXd& X, const SpectrumOptions& options) {
    const std::size_t d = static_cast<std::size_t>(X.rows());
    const std::size_t n = static_cast<std::size_t>(X.cols());
    if (d == 0 || n == 0) throw DataError("spectrum: data matrix must be non-empty");
    if (!X.allFinite()) throw DataError("spectrum: data matrix has non-finite entries");
    if (options.centered && n < 2) throw DataError("spectrum: centered covariance needs n >= 2");

    Eigen::MatrixXd centered_storage;
    const Eigen::MatrixXd* data = &X;
    double divisor = static_cast<double>(n);
    if (options.centered) {
        centered_storage = X.colwise() - X.rowwise().mean();
        data = &centered_storage;
        divisor = static_cast<double>(n - 1);
    }

    SpectrumMethod method = options.method;
    if (method == SpectrumMethod::automatic) method = d > n ? SpectrumMethod::dual : SpectrumMethod::primal;

    const std::size_t full = std::min(d, n);
    const std::size_t count = options.top_k ? std::min(*options.top_k, full) : full;

    SpectralDecomposition out;
    out.method = method;
    out.d = d;
    out.n = n;

    detail::SymmetricEigen eig;
    if (method == SpectrumMethod::primal) {
        Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
        S.selfadjointView<Eigen::Lower>().rankUpdate(*data, 1.0 / divisor);
        eig = detail::symmetric_eigen(S, options.compute_vectors, count);
    } else {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
        G.selfadjointView<Eigen::Lower>().rankUpdate(data->transpose(), 1.0 / divisor);
        eig = detail::symmetric_eigen(G, options.compute_vectors, count);
    }

    Eigen::VectorXd values = eig.values.head(count).cwiseMax(0.0);
    const double cutoff = options.rank_tolerance * (count > 0 ? values(0) : 0.0);
    std::size_t retained = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (values(i) > cutoff && values(i) > 0.0)
            ++retained;
        else
            values(i) = 0.0;
    }

    if (options.compute_vectors) {
        if (method == SpectrumMethod::primal) {
            out.eigenvectors = eig.vectors.leftCols(retained);
        } else {
            // U_i = X V_i / sqrt(divisor * lambda_i)
            out.eigenvectors = (*data) * eig.vectors.leftCols(retained);
            for (std::size_t i = 0; i < retained; ++i)
                out.eigenvectors.col(i) /= std::sqrt(divisor * values(i));
        }
        detail::fix_signs(out.eigenvectors);
        Eigen::VectorXd head = values.head(retained);
        stabilize_ties(head, out.eigenvectors);
    }
    out.eigenvalues = std::move(values);
    return out;
}

ABSplit ab_split_eigenvalues(const GeneratedDataset& dataset, std::size_t K) {
    if (!dataset.retains_coefficients())
        throw CapabilityError("ab split: dataset was generated without retained coefficients");
    const Eigen::MatrixXd& Y = *dataset.Y;
    const auto d = static_cast<std::size_t>(Y.rows());
    if (K < 1 || K >= d) throw ConfigError("ab split: K must satisfy 1 <= K < d");
    const Eigen::Index n = Y.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    A.selfadjointView<Eigen::Lower>().rankUpdate(Y.topRows(K).transpose(), inv_n);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    B.selfadjointView<Eigen::Lower>().rankUpdate(Y.bottomRows(d - K).transpose(), inv_n);

    // same reporting rule as the spectrum: PSD, values below the rank cutoff are zero
    auto clean = [](Eigen::VectorXd v) {
        v = v.cwiseMax(0.0);
        const double cutoff = SpectrumOptions{}.rank_tolerance * (v.size() ? v(0) : 0.0);
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (v(i) <= cutoff) v(i) = 0.0;
        return v;
    };
    return {clean(detail::symmetric_eigen(A, false).values), clean(detail::symmetric_eigen(B, false).values)};
}

} // namespace hdout
