#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "eagps/autodiff.hpp"
#include "eagps/tensor.hpp"

namespace eagps {

// Key and value memory units, each alpha x d_head.
struct ExternalMemory {
    Tensor2 keys;
    Tensor2 values;
};

struct AttentionResult {
    Tensor2 z;    // refined rows, same shape as the input
    Tensor2 map;  // SA: N x N, LA: d x d, EA: N x alpha
};

// A = softmax_rows(E E^T / sqrt(d)); Z = A E.
AttentionResult self_attention(const Tensor2& e);

// A = softmax_rows(E^T E / sqrt(d)); Z = E A.
AttentionResult linear_attention(const Tensor2& e);

// A = l2_normalize_rows(E Mk^T / sqrt(d_head)); Z = A Mv.
AttentionResult external_attention(const Tensor2& e, const ExternalMemory& mem);

// Columns of E are split into one block per memory; head outputs are
// concatenated and mixed by w1 (d x d).
Tensor2 multi_head_external_attention(const Tensor2& e, std::span<const ExternalMemory> mems, const Tensor2& w1);

enum class Mechanism { self, linear, external };

std::string_view to_string(Mechanism m);

struct FlopCount {
    Mechanism mechanism = Mechanism::external;
    std::uint64_t multiply_adds = 0;
};

// Multiply-adds of the two matrix products only:
// SA 4*N^2*d, LA 4*N*d^2, EA 4*N*alpha*d.
FlopCount flop_count(Mechanism m, std::uint64_t n, std::uint64_t d, std::uint64_t alpha);

namespace ad {

Var self_attention(Tape& t, Var e);
Var linear_attention(Tape& t, Var e);
Var external_attention(Tape& t, Var e, Var keys, Var values);
Var multi_head_external_attention(Tape& t, Var e, std::span<const Var> keys, std::span<const Var> values, Var w1);

}  // namespace ad
}  // namespace eagps
