#pragma once

// Reverse-mode accumulation over Tensor2 values. Each op records its output
// value and a closure that pushes the output gradient into its inputs; the
// tape replays closures in reverse order. Every backward rule here is covered
// by finite-difference checks in the tests.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eagps/graph.hpp"
#include "eagps/numerics.hpp"
#include "eagps/tensor.hpp"

namespace eagps::ad {

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
public:
    // With gradients disabled no closures are kept (inference).
    explicit Tape(bool record_gradients = true) : record_(record_gradients) {}

    Var constant(Tensor2 value);
    // One leaf per parameter name per tape.
    Var param(ParamStore& store, const std::string& name);

    const Tensor2& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    bool recording() const noexcept { return record_; }

    // Gradient buffer of a node, allocated on first use.
    Tensor2& grad(Var v);

    // Seeds d(root)/d(root) = 1 for a 1x1 root and runs every closure.
    void backward(Var root);

    // Adds leaf gradients into the store's grad slots.
    void accumulate_into(ParamStore& store) const;

    using Backward = std::function<void(Tape&)>;
    Var record(Tensor2 value, std::initializer_list<Var> inputs, Backward backward);
    Var record(Tensor2 value, std::span<const Var> inputs, Backward backward);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor2 value;
        Tensor2 grad;
        bool requires_grad = false;
        Backward backward;
    };
    bool record_;
    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> param_leaf_;
};

Var matmul(Tape& t, Var a, Var b);
Var matmul_nt(Tape& t, Var a, Var b);  // a * b^T
Var matmul_tn(Tape& t, Var a, Var b);  // a^T * b
Var add(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var a, Var row);  // broadcast 1 x c over rows
Var scale(Tape& t, Var a, double s);
Var mul_const(Tape& t, Var a, const Tensor2& mask);  // elementwise, mask not differentiated
Var relu(Tape& t, Var a);
Var softmax_rows(Tape& t, Var a);
Var l2_normalize_rows(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-6);
Var spmm(Tape& t, const SparseMatrix& a, Var x);
Var gather_rows(Tape& t, Var x, std::vector<std::size_t> index);
// out has `rows` rows; out[index[i]] += x[i]
Var scatter_add_rows(Tape& t, Var x, std::vector<std::size_t> index, std::size_t rows);
Var slice_cols(Tape& t, Var x, std::size_t c0, std::size_t c1);
Var slice_rows(Tape& t, Var x, std::size_t r0, std::size_t r1);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var concat_rows(Tape& t, std::span<const Var> parts);
Var mean_of(Tape& t, std::span<const Var> parts);
// Rows with flag set are replaced by the 1 x c token.
Var replace_rows(Tape& t, Var x, std::vector<std::uint8_t> flags, Var token);
Var max_pool_rows(Tape& t, Var x);   // 1 x c column maxima (first max wins)
Var mean_pool_rows(Tape& t, Var x);  // 1 x c
// Cosine-scored pooling against the last row; see decoder.hpp.
Var soft_attention(Tape& t, Var x, bool standard_softmax);
// Mean over rows of -log(softmax(logits)[target] + eps); 1 x 1.
Var cross_entropy(Tape& t, Var logits, std::vector<std::size_t> targets, double eps = 1e-12);
Var sum_squares(Tape& t, Var x);  // 1 x 1

}  // namespace eagps::ad
