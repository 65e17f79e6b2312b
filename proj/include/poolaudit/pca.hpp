#pragma once

#include "poolaudit/embedding.hpp"

#include <cstddef>
#include <vector>

namespace poolaudit {

struct PcaProjection {
    std::size_t rows = 0;
    std::size_t components = 0;
    std::vector<double> coordinates;        // row-major rows x components
    std::vector<double> explained_ratio;    // non-increasing
    std::vector<double> axes;               // component-major components x dims, orthonormal

    double at(std::size_t row, std::size_t component) const { return coordinates[row * components + component]; }
};

// Mean-centered projection onto the leading principal components. Each axis is
// sign-normalized so its largest-magnitude entry is positive. Throws InvariantError
// for fewer than 2 rows, dims_out of 0 or above dims, or rank-0 input.
PcaProjection pca_project(const EmbeddingMatrix& matrix, std::size_t dims_out = 2);

} // namespace poolaudit
