#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "eagps/data.hpp"
#include "eagps/tensor.hpp"

namespace eagps {

struct Triplet {
    std::size_t row = 0;
    std::size_t col = 0;
    double weight = 0.0;
};

// Compressed-row sparse matrix; columns are sorted within each row, which
// fixes the summation order of every product.
class SparseMatrix {
public:
    enum class Duplicates { reject, keep_max };

    SparseMatrix() = default;
    static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries,
                                      Duplicates policy = Duplicates::reject);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t nnz() const noexcept { return col_index_.size(); }

    std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
    std::span<const std::size_t> col_index() const noexcept { return col_index_; }
    std::span<const double> weights() const noexcept { return weights_; }

    // 0 when absent.
    double at(std::size_t r, std::size_t c) const;
    std::vector<Triplet> entries() const;
    Tensor2 to_dense() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_index_;
    std::vector<double> weights_;
};

// Node order: items [0, m) then users [m, m + n). Rows receive messages.
struct SequentialGraph {
    std::size_t m_items = 0;
    std::size_t n_users = 0;
    SparseMatrix raw;
    SparseMatrix normalized;
    std::vector<double> degree;

    std::size_t node_count() const noexcept { return m_items + n_users; }
};

// Binary adjacency: user<->item both ways, and item v_{i-1} -> v_i stored at
// (row v_i, col v_{i-1}). Duplicate edges collapse to weight 1.
SparseMatrix build_adjacency(std::span<const SequenceRecord> train, std::size_t m, std::size_t n);

// D^{-1/2} (M + I) D^{-1/2} with D the row sums of M + I.
std::pair<SparseMatrix, std::vector<double>> normalize(const SparseMatrix& raw);

SequentialGraph build_graph(std::span<const SequenceRecord> train, std::size_t m, std::size_t n);

// a * e
Tensor2 spmm(const SparseMatrix& a, const Tensor2& e);
// a^T * g
Tensor2 spmm_transposed(const SparseMatrix& a, const Tensor2& g);

// `row \t col \t weight` lines.
void write_graph_tsv(const SparseMatrix& a, std::ostream& out);

}  // namespace eagps
