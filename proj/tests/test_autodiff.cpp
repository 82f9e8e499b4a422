#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>

#include "eagps/attention.hpp"
#include "eagps/autodiff.hpp"
#include "eagps/errors.hpp"
#include "support.hpp"

using namespace eagps;
using eagps::testing::random_tensor;

namespace {

using Build = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

// Checks d/dinputs of sum((op(inputs) .* R)^2) against central differences.
GradCheckReport check_op(std::vector<Tensor2> inputs, const Build& op, std::uint64_t seed = 1) {
    ParamStore store;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        names.push_back("x" + std::to_string(i));
        store.add(names.back(), std::move(inputs[i]));
    }
    Tensor2 weights;
    LossFn fn = [&](ParamStore& s, bool with_grad) {
        ad::Tape t(with_grad);
        std::vector<ad::Var> vars;
        for (const auto& n : names) vars.push_back(t.param(s, n));
        ad::Var out = op(t, vars);
        const Tensor2& v = t.value(out);
        if (weights.empty()) weights = random_tensor(v.rows(), v.cols(), seed + 1000, 0.5, 1.5);
        ad::Var loss = ad::sum_squares(t, ad::mul_const(t, out, weights));
        if (with_grad) {
            t.backward(loss);
            t.accumulate_into(s);
        }
        return t.value(loss)(0, 0);
    };
    GradCheckOptions opt;
    opt.tolerance = 1e-6;
    return finite_diff_grad_check(fn, store, opt);
}

#define CHECK_GRAD(...)                                   \
    do {                                                  \
        const GradCheckReport r_ = check_op(__VA_ARGS__); \
        CAPTURE(r_.worst_param);                          \
        CAPTURE(r_.max_rel_error);                        \
        CHECK(r_.passed);                                 \
    } while (0)

}  // namespace

TEST_CASE("linear algebra ops") {
    CHECK_GRAD({random_tensor(3, 4, 1), random_tensor(4, 2, 2)},
               [](ad::Tape& t, auto& v) { return ad::matmul(t, v[0], v[1]); });
    CHECK_GRAD({random_tensor(3, 4, 3), random_tensor(5, 4, 4)},
               [](ad::Tape& t, auto& v) { return ad::matmul_nt(t, v[0], v[1]); });
    CHECK_GRAD({random_tensor(4, 3, 5), random_tensor(4, 2, 6)},
               [](ad::Tape& t, auto& v) { return ad::matmul_tn(t, v[0], v[1]); });
    CHECK_GRAD({random_tensor(3, 4, 7), random_tensor(3, 4, 8)},
               [](ad::Tape& t, auto& v) { return ad::add(t, v[0], v[1]); });
    CHECK_GRAD({random_tensor(3, 4, 9), random_tensor(1, 4, 10)},
               [](ad::Tape& t, auto& v) { return ad::add_row(t, v[0], v[1]); });
    CHECK_GRAD({random_tensor(3, 4, 11)}, [](ad::Tape& t, auto& v) { return ad::scale(t, v[0], -2.5); });
    const Tensor2 mask = random_tensor(3, 4, 12);
    CHECK_GRAD({random_tensor(3, 4, 13)}, [&](ad::Tape& t, auto& v) { return ad::mul_const(t, v[0], mask); });
    // same leaf used twice accumulates both paths
    CHECK_GRAD({random_tensor(3, 3, 14)}, [](ad::Tape& t, auto& v) { return ad::matmul(t, v[0], v[0]); });
}

TEST_CASE("pointwise and row-wise nonlinearities") {
    Tensor2 x = random_tensor(4, 5, 20);
    for (double& v : x.values())
        if (std::abs(v) < 0.05) v = 0.3;  // keep away from the ReLU kink
    CHECK_GRAD({x}, [](ad::Tape& t, auto& v) { return ad::relu(t, v[0]); });
    CHECK_GRAD({random_tensor(4, 5, 21, -3, 3)}, [](ad::Tape& t, auto& v) { return ad::softmax_rows(t, v[0]); });
    CHECK_GRAD({random_tensor(4, 5, 22)}, [](ad::Tape& t, auto& v) { return ad::l2_normalize_rows(t, v[0]); });
    CHECK_GRAD({random_tensor(4, 5, 23), random_tensor(1, 5, 24), random_tensor(1, 5, 25)},
               [](ad::Tape& t, auto& v) { return ad::layer_norm(t, v[0], v[1], v[2]); });
    CHECK_GRAD({random_tensor(4, 5, 26)}, [](ad::Tape& t, auto& v) { return ad::sum_squares(t, v[0]); });
}

TEST_CASE("l2 normalization leaves zero rows with zero gradient") {
    ad::Tape t;
    ParamStore s;
    s.add("x", Tensor2::from({{0, 0}, {3, 4}}));
    ad::Var x = t.param(s, "x");
    ad::Var loss = ad::sum_squares(t, ad::mul_const(t, ad::l2_normalize_rows(t, x), Tensor2::from({{1, 2}, {3, 1}})));
    t.backward(loss);
    CHECK(t.grad(x)(0, 0) == 0.0);
    CHECK(t.grad(x)(0, 1) == 0.0);
    CHECK(t.grad(x).all_finite());
}

TEST_CASE("structural ops") {
    const std::vector<SequenceRecord> seqs{make_sequence(0, {0, 1, 2}), make_sequence(1, {2, 0})};
    const SequentialGraph g = build_graph(seqs, 3, 2);
    CHECK_GRAD({random_tensor(5, 3, 30)}, [&](ad::Tape& t, auto& v) { return ad::spmm(t, g.normalized, v[0]); });
    CHECK_GRAD({random_tensor(5, 3, 31)},
               [](ad::Tape& t, auto& v) { return ad::gather_rows(t, v[0], {4, 0, 4, 2}); });
    CHECK_GRAD({random_tensor(4, 3, 32)},
               [](ad::Tape& t, auto& v) { return ad::scatter_add_rows(t, v[0], {1, 3, 1, 0}, 5); });
    CHECK_GRAD({random_tensor(4, 5, 33)}, [](ad::Tape& t, auto& v) { return ad::slice_cols(t, v[0], 1, 4); });
    CHECK_GRAD({random_tensor(5, 3, 34)}, [](ad::Tape& t, auto& v) { return ad::slice_rows(t, v[0], 2, 5); });
    CHECK_GRAD({random_tensor(3, 2, 35), random_tensor(3, 4, 36)},
               [](ad::Tape& t, auto& v) { return ad::concat_cols(t, v); });
    CHECK_GRAD({random_tensor(2, 3, 37), random_tensor(4, 3, 38)},
               [](ad::Tape& t, auto& v) { return ad::concat_rows(t, v); });
    CHECK_GRAD({random_tensor(2, 3, 39), random_tensor(2, 3, 40), random_tensor(2, 3, 41)},
               [](ad::Tape& t, auto& v) { return ad::mean_of(t, v); });
    CHECK_GRAD({random_tensor(4, 3, 42), random_tensor(1, 3, 43)},
               [](ad::Tape& t, auto& v) { return ad::replace_rows(t, v[0], {1, 0, 1, 0}, v[1]); });
    CHECK_GRAD({random_tensor(5, 3, 44)}, [](ad::Tape& t, auto& v) { return ad::max_pool_rows(t, v[0]); });
    CHECK_GRAD({random_tensor(5, 3, 45)}, [](ad::Tape& t, auto& v) { return ad::mean_pool_rows(t, v[0]); });
}

TEST_CASE("soft attention gradient") {
    for (std::size_t rows : {1, 2, 6}) {
        CAPTURE(rows);
        CHECK_GRAD({random_tensor(rows, 4, 50 + rows)},
                   [](ad::Tape& t, auto& v) { return ad::soft_attention(t, v[0], false); });
        CHECK_GRAD({random_tensor(rows, 4, 60 + rows)},
                   [](ad::Tape& t, auto& v) { return ad::soft_attention(t, v[0], true); });
    }
}

TEST_CASE("cross entropy gradient and value") {
    CHECK_GRAD({random_tensor(3, 5, 70, -2, 2)},
               [](ad::Tape& t, auto& v) { return ad::cross_entropy(t, v[0], {4, 0, 2}); });
    ad::Tape t(false);
    ad::Var l = ad::cross_entropy(t, t.constant(Tensor2(2, 4)), {1, 3});
    CHECK(t.value(l)(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-8));
    CHECK_THROWS_AS(ad::cross_entropy(t, t.constant(Tensor2(2, 4)), {1}), DimensionError);
    CHECK_THROWS_AS(ad::cross_entropy(t, t.constant(Tensor2(1, 4)), {4}), RangeError);
}

TEST_CASE("attention mechanisms on the tape") {
    const Tensor2 e = random_tensor(5, 4, 80);
    CHECK_GRAD({e}, [](ad::Tape& t, auto& v) { return ad::self_attention(t, v[0]); });
    CHECK_GRAD({e}, [](ad::Tape& t, auto& v) { return ad::linear_attention(t, v[0]); });
    CHECK_GRAD({e, random_tensor(3, 4, 81), random_tensor(3, 4, 82)},
               [](ad::Tape& t, auto& v) { return ad::external_attention(t, v[0], v[1], v[2]); });
    CHECK_GRAD({e, random_tensor(3, 2, 83), random_tensor(3, 2, 84), random_tensor(3, 2, 85), random_tensor(3, 2, 86),
                random_tensor(4, 4, 87)},
               [](ad::Tape& t, auto& v) {
                   const ad::Var keys[] = {v[1], v[3]};
                   const ad::Var values[] = {v[2], v[4]};
                   return ad::multi_head_external_attention(t, v[0], keys, values, v[5]);
               });

    ad::Tape t(false);
    ad::Var x = t.constant(e);
    CHECK(max_abs_diff(t.value(ad::self_attention(t, x)), self_attention(e).z) < 1e-15);
    CHECK(max_abs_diff(t.value(ad::linear_attention(t, x)), linear_attention(e).z) < 1e-15);
}

TEST_CASE("tape bookkeeping") {
    ParamStore s;
    s.add("w", random_tensor(2, 2, 90));
    ad::Tape t;
    ad::Var a = t.param(s, "w");
    ad::Var b = t.param(s, "w");
    CHECK(a.id == b.id);
    CHECK(t.requires_grad(a));
    CHECK_FALSE(t.requires_grad(t.constant(Tensor2(1, 1))));

    ad::Tape inference(false);
    ad::Var c = inference.param(s, "w");
    CHECK_FALSE(inference.requires_grad(c));

    ad::Var loss = ad::sum_squares(t, a);
    t.backward(loss);
    t.accumulate_into(s);
    CHECK(max_abs_diff(s.grad("w"), 2.0 * s.value("w")) < 1e-15);
    CHECK_THROWS_AS(t.backward(a), DimensionError);
}
