#pragma once

// Row-major n-d value container used at serialization boundaries
// (checkpoints move parameters as Tensors). Compute paths use Eigen types.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace fdialab {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;  // row-major

    Tensor() = default;
    Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(element_count(), 0.0);
    }

    std::size_t element_count() const {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>());
    }

    bool consistent() const { return data.size() == element_count(); }

    bool finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static Tensor from_matrix(const Eigen::MatrixXd& m) {
        Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                t.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
        return t;
    }

    Eigen::MatrixXd to_matrix() const {
        if (shape.size() != 2 || !consistent())
            throw std::invalid_argument("Tensor::to_matrix: not a consistent 2-d tensor");
        Eigen::MatrixXd m(shape[0], shape[1]);
        for (std::size_t r = 0; r < shape[0]; ++r)
            for (std::size_t c = 0; c < shape[1]; ++c)
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    data[r * shape[1] + c];
        return m;
    }
};

}  // namespace fdialab
