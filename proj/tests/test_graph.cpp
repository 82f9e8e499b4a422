#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "eagps/errors.hpp"
#include "eagps/graph.hpp"
#include "support.hpp"

using namespace eagps;
using eagps::testing::random_tensor;

namespace {

SequenceRecord seq(std::size_t user, std::vector<std::size_t> items) { return make_sequence(user, std::move(items)); }

SparseMatrix random_sparse(std::size_t rows, std::size_t cols, double density, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            if (u(rng) < density) t.push_back({i, j, u(rng) * 2.0 - 1.0});
    return SparseMatrix::from_triplets(rows, cols, t);
}

}  // namespace

TEST_CASE("build_adjacency blocks") {
    const std::size_t m = 3, n = 2;
    SUBCASE("single interaction") {
        const std::vector<SequenceRecord> s{seq(0, {0})};
        const SparseMatrix a = build_adjacency(s, m, n);
        CHECK(a.nnz() == 2);
        CHECK(a.at(0, m) == 1.0);
        CHECK(a.at(m, 0) == 1.0);
    }
    SUBCASE("item transitions are one-way") {
        const std::vector<SequenceRecord> s{seq(0, {0, 1})};
        const SparseMatrix a = build_adjacency(s, m, n);
        CHECK(a.at(1, 0) == 1.0);
        CHECK(a.at(0, 1) == 0.0);
    }
    SUBCASE("duplicates collapse") {
        const std::vector<SequenceRecord> s{seq(1, {2, 2, 0}), seq(1, {2, 0})};
        const SparseMatrix a = build_adjacency(s, m, n);
        CHECK(a.at(2, m + 1) == 1.0);
        CHECK(a.at(0, 2) == 1.0);
        CHECK(a.at(2, 2) == 1.0);  // self-transition from the repeated item
        for (double w : a.weights()) CHECK(w == 1.0);
    }
    SUBCASE("no user-user entries") {
        const std::vector<SequenceRecord> s{seq(0, {0, 1, 2}), seq(1, {2, 1})};
        const SparseMatrix a = build_adjacency(s, m, n);
        for (const auto& e : a.entries()) CHECK_FALSE((e.row >= m && e.col >= m));
    }
    SUBCASE("out of range") {
        const std::vector<SequenceRecord> bad_item{seq(0, {3})};
        CHECK_THROWS_AS(build_adjacency(bad_item, m, n), RangeError);
        const std::vector<SequenceRecord> bad_user{seq(2, {0})};
        CHECK_THROWS_AS(build_adjacency(bad_user, m, n), RangeError);
    }
}

TEST_CASE("normalize") {
    SUBCASE("two-node graph") {
        const std::vector<SequenceRecord> s{seq(0, {0})};
        const auto [a, deg] = normalize(build_adjacency(s, 1, 1));
        CHECK(deg == std::vector<double>{2.0, 2.0});
        const Tensor2 dense = a.to_dense();
        CHECK(max_abs_diff(dense, Tensor2::from({{0.5, 0.5}, {0.5, 0.5}})) < 1e-15);
    }
    SUBCASE("isolated node") {
        const std::vector<SequenceRecord> s{seq(0, {0})};
        const auto [a, deg] = normalize(build_adjacency(s, 2, 1));
        CHECK(deg[1] == 1.0);
        CHECK(a.at(1, 1) == 1.0);
    }
    SUBCASE("per-edge formula and block structure") {
        const std::vector<SequenceRecord> s{seq(0, {0, 1, 2, 4}), seq(1, {3, 1, 0}), seq(2, {4, 2})};
        const std::size_t m = 5, n = 3;
        const SparseMatrix raw = build_adjacency(s, m, n);
        const SequentialGraph g = build_graph(s, m, n);
        for (std::size_t i = 0; i < m + n; ++i) {
            double rowsum = 1.0;
            for (std::size_t j = 0; j < m + n; ++j) rowsum += raw.at(i, j);
            CHECK(g.degree[i] == rowsum);
        }
        for (std::size_t i = 0; i < m + n; ++i)
            for (std::size_t j = 0; j < m + n; ++j) {
                const double w = raw.at(i, j) + (i == j ? 1.0 : 0.0);
                CHECK(std::abs(g.normalized.at(i, j) - w / std::sqrt(g.degree[i] * g.degree[j])) < 1e-15);
                if (g.normalized.at(i, j) != 0.0) CHECK(g.normalized.at(i, j) <= 1.0);
                const bool items = i < m && j < m;
                if (!items) CHECK(g.normalized.at(i, j) == g.normalized.at(j, i));
            }
        CHECK(g.normalized.at(2, 1) > 0.0);
        CHECK(g.normalized.at(1, 2) == 0.0);
    }
    SUBCASE("symmetric input gives symmetric output") {
        std::vector<Triplet> t{{0, 1, 1}, {1, 0, 1}, {1, 2, 1}, {2, 1, 1}};
        const auto [a, deg] = normalize(SparseMatrix::from_triplets(3, 3, t));
        const Tensor2 d = a.to_dense();
        CHECK(max_abs_diff(d, testing::naive_transpose(d)) == 0.0);
    }
}

TEST_CASE("sparse matrix construction") {
    std::vector<Triplet> dup{{0, 0, 1}, {0, 0, 2}};
    CHECK_THROWS_AS(SparseMatrix::from_triplets(2, 2, dup), RangeError);
    const SparseMatrix kept = SparseMatrix::from_triplets(2, 2, dup, SparseMatrix::Duplicates::keep_max);
    CHECK(kept.at(0, 0) == 2.0);
    std::vector<Triplet> oob{{2, 0, 1}};
    CHECK_THROWS_AS(SparseMatrix::from_triplets(2, 2, oob), RangeError);
    std::vector<Triplet> nan{{0, 0, std::nan("")}};
    CHECK_THROWS_AS(SparseMatrix::from_triplets(2, 2, nan), NumericError);
}

TEST_CASE("spmm against the dense product") {
    const Tensor2 e = random_tensor(5, 3, 1);
    CHECK(max_abs_diff(spmm(SparseMatrix::from_triplets(5, 5, {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}, {3, 3, 1}, {4, 4, 1}}), e),
                       e) == 0.0);
    CHECK(max_abs_diff(spmm(SparseMatrix::from_triplets(5, 5, {}), e), Tensor2(5, 3)) == 0.0);

    for (std::uint64_t s = 0; s < 40; ++s) {
        const std::size_t n = 1 + s % 50;
        const SparseMatrix a = random_sparse(n, n, 0.4, s);
        const Tensor2 x = random_tensor(n, 1 + s % 4, 100 + s);
        CHECK(max_abs_diff(spmm(a, x), testing::naive_matmul(a.to_dense(), x)) < 1e-12);
        const Tensor2 g = random_tensor(n, 1 + s % 4, 200 + s);
        CHECK(max_abs_diff(spmm_transposed(a, g), testing::naive_matmul(testing::naive_transpose(a.to_dense()), g)) <
              1e-12);
    }
    CHECK_THROWS_AS(spmm(random_sparse(3, 4, 0.5, 1), Tensor2(3, 2)), DimensionError);
}

TEST_CASE("graph dump") {
    const std::vector<SequenceRecord> s{seq(0, {0})};
    std::ostringstream out;
    write_graph_tsv(build_graph(s, 1, 1).normalized, out);
    CHECK(out.str() == "0\t0\t0.5\n0\t1\t0.5\n1\t0\t0.5\n1\t1\t0.5\n");
}
