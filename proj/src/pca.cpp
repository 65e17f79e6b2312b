#include "poolaudit/pca.hpp"

#include "poolaudit/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace poolaudit {

PcaProjection pca_project(const EmbeddingMatrix& matrix, std::size_t dims_out) {
    const std::size_t n = matrix.rows();
    const std::size_t d = matrix.dims();
    if (n < 2) {
        throw InvariantError("face_knn", "PCA needs at least 2 rows");
    }
    if (dims_out == 0 || dims_out > d) {
        throw InvariantError("face_knn", "PCA output dimension must lie in [1, dims]");
    }

    Eigen::MatrixXd x(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = matrix.row(static_cast<std::uint32_t>(r));
        for (std::size_t c = 0; c < d; ++c) {
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
        }
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw InvariantError("face_knn", "eigen decomposition failed");
    }
    // Eigenvalues come back ascending.
    const Eigen::VectorXd values = solver.eigenvalues();
    const Eigen::MatrixXd vectors = solver.eigenvectors();
    const double largest = values(values.size() - 1);
    const double total = std::max(0.0, values.sum());
    if (!(largest > 0) || total <= 0) {
        throw InvariantError("face_knn", "degenerate input: all rows identical");
    }

    PcaProjection out;
    out.rows = n;
    out.components = dims_out;
    out.coordinates.assign(n * dims_out, 0.0);
    out.axes.assign(dims_out * d, 0.0);
    for (std::size_t c = 0; c < dims_out; ++c) {
        const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - c);
        Eigen::VectorXd axis = vectors.col(col);
        Eigen::Index arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis(arg) < 0) {
            axis = -axis;
        }
        double value = values(col);
        if (value < largest * 1e-12) {
            value = 0.0;
        }
        out.explained_ratio.push_back(value / total);
        for (std::size_t j = 0; j < d; ++j) {
            out.axes[c * d + j] = axis(static_cast<Eigen::Index>(j));
        }
        const Eigen::VectorXd proj = x * axis;
        for (std::size_t r = 0; r < n; ++r) {
            out.coordinates[r * dims_out + c] = proj(static_cast<Eigen::Index>(r));
        }
    }
    return out;
}

} // namespace poolaudit
