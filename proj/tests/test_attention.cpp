#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "eagps/attention.hpp"
#include "eagps/errors.hpp"
#include "support.hpp"

using namespace eagps;
using eagps::testing::random_tensor;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor2& t) {
    Mat m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
    return m;
}

Tensor2 to_tensor(const Mat& m) {
    Tensor2 t(m.size(), m.empty() ? 0 : m[0].size());
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) = m[i][j];
    return t;
}

void softmax_row(std::vector<double>& r) {
    double mx = r[0];
    for (double v : r) mx = std::max(mx, v);
    double s = 0.0;
    for (double& v : r) s += (v = std::exp(v - mx));
    for (double& v : r) v /= s;
}

// Scalar-loop references.
Mat ref_sa(const Mat& e) {
    const std::size_t n = e.size(), d = e[0].size();
    Mat a(n, std::vector<double>(n)), z(n, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += e[i][k] * e[j][k];
            a[i][j] = s / std::sqrt(static_cast<double>(d));
        }
        softmax_row(a[i]);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < d; ++k) z[i][k] += a[i][j] * e[j][k];
    }
    return z;
}

Mat ref_la(const Mat& e) {
    const std::size_t n = e.size(), d = e[0].size();
    Mat a(d, std::vector<double>(d)), z(n, std::vector<double>(d, 0.0));
    for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t q = 0; q < d; ++q) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += e[i][p] * e[i][q];
            a[p][q] = s / std::sqrt(static_cast<double>(d));
        }
        softmax_row(a[p]);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t q = 0; q < d; ++q)
            for (std::size_t p = 0; p < d; ++p) z[i][q] += e[i][p] * a[p][q];
    return z;
}

Mat ref_ea(const Mat& e, const Mat& mk, const Mat& mv) {
    const std::size_t n = e.size(), d = e[0].size(), alpha = mk.size();
    Mat z(n, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> a(alpha);
        double norm = 0.0;
        for (std::size_t j = 0; j < alpha; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += e[i][k] * mk[j][k];
            a[j] = s / std::sqrt(static_cast<double>(d));
            norm += a[j] * a[j];
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < alpha; ++j) {
            const double w = norm > 0.0 ? a[j] / norm : 0.0;
            for (std::size_t k = 0; k < d; ++k) z[i][k] += w * mv[j][k];
        }
    }
    return z;
}

}  // namespace

TEST_CASE("mechanisms match scalar-loop references on every small shape") {
    std::uint64_t seed = 1;
    for (std::size_t n = 1; n <= 8; ++n)
        for (std::size_t d = 1; d <= 4; ++d) {
            const Tensor2 e = random_tensor(n, d, seed++, -2, 2);
            CHECK(max_abs_diff(self_attention(e).z, to_tensor(ref_sa(to_mat(e)))) < 1e-12);
            CHECK(max_abs_diff(linear_attention(e).z, to_tensor(ref_la(to_mat(e)))) < 1e-12);
            for (std::size_t alpha = 1; alpha <= 4; ++alpha) {
                const ExternalMemory mem{random_tensor(alpha, d, seed++), random_tensor(alpha, d, seed++)};
                const AttentionResult r = external_attention(e, mem);
                CHECK(max_abs_diff(r.z, to_tensor(ref_ea(to_mat(e), to_mat(mem.keys), to_mat(mem.values)))) < 1e-12);
                CHECK(r.map.rows() == n);
                CHECK(r.map.cols() == alpha);
            }
        }
}

TEST_CASE("self_attention") {
    const Tensor2 e = Tensor2::from({{0.3, -1.2}});
    const AttentionResult one = self_attention(e);
    CHECK(one.map == Tensor2::from({{1.0}}));
    CHECK(max_abs_diff(one.z, e) < 1e-15);

    const AttentionResult zero = self_attention(Tensor2(4, 3));
    for (double v : zero.map.values()) CHECK(v == doctest::Approx(0.25));
    CHECK(max_abs_diff(zero.z, Tensor2(4, 3)) == 0.0);
    CHECK(self_attention(random_tensor(6, 2, 3)).map.rows() == 6);
    CHECK(self_attention(random_tensor(6, 2, 3)).map.cols() == 6);
}

TEST_CASE("linear_attention") {
    const AttentionResult zero = linear_attention(Tensor2(3, 4));
    for (double v : zero.map.values()) CHECK(v == doctest::Approx(0.25));
    CHECK(max_abs_diff(zero.z, Tensor2(3, 4)) == 0.0);

    const Tensor2 col = random_tensor(5, 1, 2);
    CHECK(linear_attention(col).map == Tensor2::from({{1.0}}));
    CHECK(max_abs_diff(linear_attention(col).z, col) < 1e-15);

    // E^T E / sqrt(2) = [[0.7071, 0], [0, 0]]; first row softmax = [0.6698, 0.3302].
    const AttentionResult r = linear_attention(Tensor2::from({{1, 0}}));
    CHECK(r.z(0, 0) == doctest::Approx(0.6698).epsilon(1e-3));
    CHECK(r.z(0, 1) == doctest::Approx(0.3302).epsilon(1e-3));
}

TEST_CASE("external_attention") {
    const ExternalMemory mem{random_tensor(4, 3, 1), random_tensor(4, 3, 2)};
    const AttentionResult zero = external_attention(Tensor2(2, 3), mem);
    CHECK(max_abs_diff(zero.map, Tensor2(2, 4)) == 0.0);
    CHECK(max_abs_diff(zero.z, Tensor2(2, 3)) == 0.0);

    const ExternalMemory hand{Tensor2::identity(2), Tensor2::from({{0.4, -0.7}, {2.0, 3.0}})};
    const AttentionResult h = external_attention(Tensor2::from({{1, 0}}), hand);
    CHECK(h.map(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(h.map(0, 1) == 0.0);
    CHECK(max_abs_diff(h.z, Tensor2::from({{0.4, -0.7}})) < 1e-15);

    const Tensor2 e = random_tensor(5, 3, 3);
    const AttentionResult base = external_attention(e, mem);
    CHECK(max_abs_diff(external_attention(5.0 * e, mem).map, base.map) < 1e-14);
    for (std::size_t i = 0; i < base.map.rows(); ++i) {
        double s = 0.0;
        for (double v : base.map.row(i)) s += v * v;
        CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(external_attention(random_tensor(2, 4, 1), mem), DimensionError);
}

TEST_CASE("external_attention output lies in the row space of the value memory") {
    // alpha = 2 rows in 4 dimensions: project onto span(Mv rows) via Gram-Schmidt.
    const ExternalMemory mem{random_tensor(2, 4, 11), random_tensor(2, 4, 12)};
    const Tensor2 z = external_attention(random_tensor(7, 4, 13), mem).z;
    std::vector<std::vector<double>> basis;
    for (std::size_t r = 0; r < 2; ++r) {
        std::vector<double> v(mem.values.row(r).begin(), mem.values.row(r).end());
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t k = 0; k < 4; ++k) dot += v[k] * b[k];
            for (std::size_t k = 0; k < 4; ++k) v[k] -= dot * b[k];
        }
        double n = 0.0;
        for (double x : v) n += x * x;
        for (double& x : v) x /= std::sqrt(n);
        basis.push_back(v);
    }
    for (std::size_t i = 0; i < z.rows(); ++i) {
        std::vector<double> res(z.row(i).begin(), z.row(i).end());
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t k = 0; k < 4; ++k) dot += res[k] * b[k];
            for (std::size_t k = 0; k < 4; ++k) res[k] -= dot * b[k];
        }
        double n = 0.0;
        for (double x : res) n += x * x;
        CHECK(std::sqrt(n) < 1e-10);
    }
}

TEST_CASE("multi_head_external_attention") {
    const Tensor2 e = random_tensor(6, 4, 21);
    const std::vector<ExternalMemory> one{{random_tensor(3, 4, 22), random_tensor(3, 4, 23)}};
    CHECK(max_abs_diff(multi_head_external_attention(e, one, Tensor2::identity(4)), external_attention(e, one[0]).z) <
          1e-15);

    const std::vector<ExternalMemory> two{{random_tensor(3, 2, 24), random_tensor(3, 2, 25)},
                                          {random_tensor(3, 2, 26), random_tensor(3, 2, 27)}};
    const Tensor2 plain = multi_head_external_attention(e, two, Tensor2::identity(4));
    const Tensor2 left = external_attention(slice_cols(e, 0, 2), two[0]).z;
    const Tensor2 right = external_attention(slice_cols(e, 2, 4), two[1]).z;
    CHECK(max_abs_diff(slice_cols(plain, 0, 2), left) < 1e-15);
    CHECK(max_abs_diff(slice_cols(plain, 2, 4), right) < 1e-15);
    // changing the right half of the input leaves the left head untouched
    Tensor2 e2 = e;
    for (std::size_t i = 0; i < e2.rows(); ++i) e2(i, 3) += 1.0;
    CHECK(max_abs_diff(slice_cols(multi_head_external_attention(e2, two, Tensor2::identity(4)), 0, 2), left) == 0.0);

    const Tensor2 w1 = random_tensor(4, 4, 28);
    CHECK(max_abs_diff(multi_head_external_attention(e, two, w1), testing::naive_matmul(plain, w1)) < 1e-12);
    CHECK(max_abs_diff(multi_head_external_attention(Tensor2(6, 4), two, w1), Tensor2(6, 4)) == 0.0);

    const std::vector<ExternalMemory> three(3, ExternalMemory{random_tensor(3, 1, 1), random_tensor(3, 1, 2)});
    CHECK_THROWS_AS(multi_head_external_attention(e, three, w1), ConfigError);
}

TEST_CASE("flop counts") {
    CHECK(flop_count(Mechanism::external, 1000, 16, 16).multiply_adds == 1024000);
    CHECK(flop_count(Mechanism::self, 1000, 16, 16).multiply_adds == 64000000);
    CHECK(flop_count(Mechanism::linear, 1000, 16, 16).multiply_adds == 1024000);
    for (std::uint64_t n : {1, 7, 50, 333})
        for (std::uint64_t d : {2, 16, 64}) {
            const std::uint64_t alpha = 8;
            CHECK(flop_count(Mechanism::external, 2 * n, d, alpha).multiply_adds ==
                  2 * flop_count(Mechanism::external, n, d, alpha).multiply_adds);
            CHECK(flop_count(Mechanism::self, 2 * n, d, alpha).multiply_adds ==
                  4 * flop_count(Mechanism::self, n, d, alpha).multiply_adds);
            CHECK(flop_count(Mechanism::external, n, d, d).multiply_adds ==
                  flop_count(Mechanism::linear, n, d, alpha).multiply_adds);
        }
    CHECK(to_string(Mechanism::self) == "SA");
    CHECK(to_string(Mechanism::linear) == "LA");
    CHECK(to_string(Mechanism::external) == "EA");
}
