#include "eagps/graph.hpp"

#include <algorithm>
#include <cmath>

#include "eagps/errors.hpp"
#include "eagps/simd/kernels.hpp"

namespace eagps {

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries,
                                         Duplicates policy) {
    for (const auto& e : entries) {
        if (e.row >= rows || e.col >= cols)
            throw RangeError("sparse entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                             ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
        if (!std::isfinite(e.weight)) throw NumericError("non-finite sparse weight");
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    SparseMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.row_ptr_.assign(rows + 1, 0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (!m.col_index_.empty() && i > 0 && entries[i - 1].row == e.row && entries[i - 1].col == e.col) {
            if (policy == Duplicates::reject)
                throw RangeError("duplicate sparse entry (" + std::to_string(e.row) + ", " +
                                 std::to_string(e.col) + ")");
            m.weights_.back() = std::max(m.weights_.back(), e.weight);
            continue;
        }
        m.col_index_.push_back(e.col);
        m.weights_.push_back(e.weight);
        ++m.row_ptr_[e.row + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
    return m;
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) throw RangeError("sparse index out of range");
    const auto first = col_index_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
    const auto last = col_index_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
    const auto it = std::lower_bound(first, last, c);
    if (it == last || *it != c) return 0.0;
    return weights_[static_cast<std::size_t>(it - col_index_.begin())];
}

std::vector<Triplet> SparseMatrix::entries() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) out.push_back({r, col_index_[k], weights_[k]});
    return out;
}

Tensor2 SparseMatrix::to_dense() const {
    Tensor2 d(rows_, cols_);
    for (const auto& e : entries()) d(e.row, e.col) = e.weight;
    return d;
}

SparseMatrix build_adjacency(std::span<const SequenceRecord> train, std::size_t m, std::size_t n) {
    std::vector<Triplet> edges;
    for (const auto& s : train) {
        if (s.user_index >= n) throw RangeError("user index " + std::to_string(s.user_index) + " >= n");
        const std::size_t u = m + s.user_index;
        for (std::size_t i = 0; i < s.items.size(); ++i) {
            const std::size_t v = s.items[i];
            if (v >= m) throw RangeError("item index " + std::to_string(v) + " >= m");
            edges.push_back({v, u, 1.0});
            edges.push_back({u, v, 1.0});
            if (i > 0) edges.push_back({v, s.items[i - 1], 1.0});
        }
    }
    return SparseMatrix::from_triplets(m + n, m + n, std::move(edges), SparseMatrix::Duplicates::keep_max);
}

std::pair<SparseMatrix, std::vector<double>> normalize(const SparseMatrix& raw) {
    if (raw.rows() != raw.cols()) throw DimensionError("normalize needs a square matrix");
    const std::size_t n = raw.rows();

    std::vector<Triplet> plus_identity = raw.entries();
    for (std::size_t i = 0; i < n; ++i) plus_identity.push_back({i, i, 0.0});
    // merge the identity into existing diagonal entries
    std::vector<Triplet> merged;
    std::stable_sort(plus_identity.begin(), plus_identity.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (const auto& e : plus_identity) {
        if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col)
            merged.back().weight += e.weight;
        else
            merged.push_back(e);
    }
    for (auto& e : merged)
        if (e.row == e.col) e.weight += 1.0;

    std::vector<double> degree(n, 0.0);
    for (const auto& e : merged) degree[e.row] += e.weight;
    for (auto& e : merged) e.weight /= std::sqrt(degree[e.row] * degree[e.col]);
    return {SparseMatrix::from_triplets(n, n, std::move(merged)), std::move(degree)};
}

SequentialGraph build_graph(std::span<const SequenceRecord> train, std::size_t m, std::size_t n) {
    SequentialGraph g;
    g.m_items = m;
    g.n_users = n;
    g.raw = build_adjacency(train, m, n);
    auto [norm, degree] = normalize(g.raw);
    g.normalized = std::move(norm);
    g.degree = std::move(degree);
    return g;
}

Tensor2 spmm(const SparseMatrix& a, const Tensor2& e) {
    if (a.cols() != e.rows())
        throw DimensionError("spmm: sparse " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " times " + e.shape_string());
    Tensor2 out(a.rows(), e.cols());
    const auto& k = simd::active();
    const auto ptr = a.row_ptr();
    const auto col = a.col_index();
    const auto w = a.weights();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t p = ptr[r]; p < ptr[r + 1]; ++p) k.axpy(w[p], e.row(col[p]).data(), out.row(r).data(), e.cols());
    return out;
}

Tensor2 spmm_transposed(const SparseMatrix& a, const Tensor2& g) {
    if (a.rows() != g.rows())
        throw DimensionError("spmm_transposed: sparse rows " + std::to_string(a.rows()) + " vs " + g.shape_string());
    Tensor2 out(a.cols(), g.cols());
    const auto& k = simd::active();
    const auto ptr = a.row_ptr();
    const auto col = a.col_index();
    const auto w = a.weights();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t p = ptr[r]; p < ptr[r + 1]; ++p) k.axpy(w[p], g.row(r).data(), out.row(col[p]).data(), g.cols());
    return out;
}

void write_graph_tsv(const SparseMatrix& a, std::ostream& out) {
    out.precision(17);
    for (const auto& e : a.entries()) out << e.row << '\t' << e.col << '\t' << e.weight << '\n';
}

}  // namespace eagps
