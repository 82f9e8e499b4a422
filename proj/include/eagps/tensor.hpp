#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace eagps {

// Dense row-major matrix of doubles.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor2 zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
    static Tensor2 identity(std::size_t n);
    // Nested initializer, e.g. Tensor2::from({{1, 2}, {3, 4}}).
    static Tensor2 from(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool same_shape(const Tensor2& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    void fill(double v);
    Tensor2& operator+=(const Tensor2& o);
    Tensor2& operator*=(double s);

    bool all_finite() const;
    double squared_norm() const;
    std::string shape_string() const;

    friend bool operator==(const Tensor2& a, const Tensor2& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Tensor2 operator+(Tensor2 a, const Tensor2& b);
Tensor2 operator*(double s, Tensor2 a);

// C = A * B
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
// C = A * B^T
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);
// C = A^T * B
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);

// Adds a 1 x cols row vector to every row.
Tensor2 add_row_vector(Tensor2 a, const Tensor2& row);

Tensor2 slice_cols(const Tensor2& a, std::size_t c0, std::size_t c1);
Tensor2 slice_rows(const Tensor2& a, std::size_t r0, std::size_t r1);
Tensor2 concat_cols(std::span<const Tensor2> parts);
Tensor2 concat_rows(std::span<const Tensor2> parts);
Tensor2 gather_rows(const Tensor2& a, std::span<const std::size_t> index);

double max_abs_diff(const Tensor2& a, const Tensor2& b);

}  // namespace eagps
