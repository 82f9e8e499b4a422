#pragma once

#include <random>

#include "eagps/tensor.hpp"

namespace eagps::testing {

inline Tensor2 random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor2 t(rows, cols);
    for (double& v : t.values()) v = u(rng);
    return t;
}

// Triple loop, no kernels involved.
inline Tensor2 naive_matmul(const Tensor2& a, const Tensor2& b) {
    Tensor2 c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

inline Tensor2 naive_transpose(const Tensor2& a) {
    Tensor2 t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

}  // namespace eagps::testing
