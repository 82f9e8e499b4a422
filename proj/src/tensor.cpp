#include "eagps/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "eagps/errors.hpp"
#include "eagps/simd/kernels.hpp"

namespace eagps {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                             " does not match " + shape_string());
}

Tensor2 Tensor2::identity(std::size_t n) {
    Tensor2 t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor2 Tensor2::from(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged tensor initializer");
        data.insert(data.end(), row.begin(), row.end());
    }
    return {r, c, std::move(data)};
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor2& Tensor2::operator+=(const Tensor2& o) {
    if (!same_shape(o))
        throw DimensionError("add: " + shape_string() + " vs " + o.shape_string());
    simd::active().axpy(1.0, o.data(), data(), size());
    return *this;
}

Tensor2& Tensor2::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

bool Tensor2::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor2::squared_norm() const { return simd::active().dot(data(), data(), size()); }

std::string Tensor2::shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Tensor2 operator+(Tensor2 a, const Tensor2& b) {
    a += b;
    return a;
}

Tensor2 operator*(double s, Tensor2 a) {
    a *= s;
    return a;
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: " + a.shape_string() + " * " + b.shape_string());
    Tensor2 c(a.rows(), b.cols());
    simd::active().gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), a.cols(), b.data(), b.cols(),
                           c.data(), c.cols());
    return c;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
    Tensor2 c(a.rows(), b.rows());
    simd::active().gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), a.cols(), b.data(), b.cols(),
                           c.data(), c.cols());
    return c;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
    if (a.rows() != b.rows())
        throw DimensionError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
    Tensor2 c(a.cols(), b.cols());
    simd::active().gemm_tn(a.cols(), b.cols(), a.rows(), a.data(), a.cols(), b.data(), b.cols(),
                           c.data(), c.cols());
    return c;
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Tensor2 add_row_vector(Tensor2 a, const Tensor2& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw DimensionError("row broadcast: " + a.shape_string() + " + " + row.shape_string());
    for (std::size_t i = 0; i < a.rows(); ++i)
        simd::active().axpy(1.0, row.data(), a.row(i).data(), a.cols());
    return a;
}

Tensor2 slice_cols(const Tensor2& a, std::size_t c0, std::size_t c1) {
    if (c0 > c1 || c1 > a.cols()) throw RangeError("slice_cols out of range");
    Tensor2 out(a.rows(), c1 - c0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        std::copy_n(a.row(i).begin() + static_cast<std::ptrdiff_t>(c0), c1 - c0, out.row(i).begin());
    return out;
}

Tensor2 slice_rows(const Tensor2& a, std::size_t r0, std::size_t r1) {
    if (r0 > r1 || r1 > a.rows()) throw RangeError("slice_rows out of range");
    Tensor2 out(r1 - r0, a.cols());
    std::copy_n(a.data() + r0 * a.cols(), out.size(), out.data());
    return out;
}

Tensor2 concat_cols(std::span<const Tensor2> parts) {
    if (parts.empty()) return {};
    const std::size_t r = parts.front().rows();
    std::size_t c = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
        c += p.cols();
    }
    Tensor2 out(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::copy_n(p.row(i).begin(), p.cols(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
            off += p.cols();
        }
    }
    return out;
}

Tensor2 concat_rows(std::span<const Tensor2> parts) {
    if (parts.empty()) return {};
    const std::size_t c = parts.front().cols();
    std::size_t r = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
        r += p.rows();
    }
    Tensor2 out(r, c);
    double* dst = out.data();
    for (const auto& p : parts) dst = std::copy_n(p.data(), p.size(), dst);
    return out;
}

Tensor2 gather_rows(const Tensor2& a, std::span<const std::size_t> index) {
    Tensor2 out(index.size(), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= a.rows()) throw RangeError("gather_rows: index out of range");
        std::copy_n(a.row(index[i]).begin(), a.cols(), out.row(i).begin());
    }
    return out;
}

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
    if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shapes differ");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace eagps
