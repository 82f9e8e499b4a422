#include "eagps/attention.hpp"

#include <cmath>
#include <vector>

#include "eagps/errors.hpp"
#include "eagps/numerics.hpp"

namespace eagps {

AttentionResult self_attention(const Tensor2& e) {
    if (e.cols() == 0) throw DimensionError("self_attention: d must be >= 1");
    const double s = 1.0 / std::sqrt(static_cast<double>(e.cols()));
    Tensor2 a = softmax_rows(s * matmul_nt(e, e));
    Tensor2 z = matmul(a, e);
    return {std::move(z), std::move(a)};
}

AttentionResult linear_attention(const Tensor2& e) {
    if (e.cols() == 0) throw DimensionError("linear_attention: d must be >= 1");
    const double s = 1.0 / std::sqrt(static_cast<double>(e.cols()));
    Tensor2 a = softmax_rows(s * matmul_tn(e, e));
    Tensor2 z = matmul(e, a);
    return {std::move(z), std::move(a)};
}

AttentionResult external_attention(const Tensor2& e, const ExternalMemory& mem) {
    if (!mem.keys.same_shape(mem.values) || mem.keys.rows() == 0)
        throw DimensionError("external memory units must share an alpha x d_head shape");
    if (mem.keys.cols() != e.cols())
        throw DimensionError("external_attention: input width " + std::to_string(e.cols()) +
                             " vs memory width " + std::to_string(mem.keys.cols()));
    const double s = 1.0 / std::sqrt(static_cast<double>(e.cols()));
    Tensor2 a = l2_normalize_rows(s * matmul_nt(e, mem.keys));
    Tensor2 z = matmul(a, mem.values);
    return {std::move(z), std::move(a)};
}

Tensor2 multi_head_external_attention(const Tensor2& e, std::span<const ExternalMemory> mems, const Tensor2& w1) {
    const std::size_t heads = mems.size();
    if (heads == 0 || e.cols() % heads != 0)
        throw ConfigError("head count " + std::to_string(heads) + " must divide d = " + std::to_string(e.cols()));
    if (w1.rows() != e.cols() || w1.cols() != e.cols()) throw DimensionError("w1 must be d x d");
    const std::size_t dh = e.cols() / heads;
    std::vector<Tensor2> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h)
        outs.push_back(external_attention(slice_cols(e, h * dh, (h + 1) * dh), mems[h]).z);
    return matmul(concat_cols(outs), w1);
}

std::string_view to_string(Mechanism m) {
    switch (m) {
        case Mechanism::self: return "SA";
        case Mechanism::linear: return "LA";
        case Mechanism::external: return "EA";
    }
    return "?";
}

FlopCount flop_count(Mechanism m, std::uint64_t n, std::uint64_t d, std::uint64_t alpha) {
    if (n == 0 || d == 0 || alpha == 0) throw ConfigError("flop_count needs positive arguments");
    switch (m) {
        case Mechanism::self: return {m, 4 * n * n * d};
        case Mechanism::linear: return {m, 4 * n * d * d};
        case Mechanism::external: return {m, 4 * n * alpha * d};
    }
    return {m, 0};
}

namespace ad {

Var self_attention(Tape& t, Var e) {
    const double s = 1.0 / std::sqrt(static_cast<double>(t.value(e).cols()));
    Var a = softmax_rows(t, scale(t, matmul_nt(t, e, e), s));
    return matmul(t, a, e);
}

Var linear_attention(Tape& t, Var e) {
    const double s = 1.0 / std::sqrt(static_cast<double>(t.value(e).cols()));
    Var a = softmax_rows(t, scale(t, matmul_tn(t, e, e), s));
    return matmul(t, e, a);
}

Var external_attention(Tape& t, Var e, Var keys, Var values) {
    if (t.value(keys).cols() != t.value(e).cols())
        throw DimensionError("external_attention: input width vs memory width mismatch");
    const double s = 1.0 / std::sqrt(static_cast<double>(t.value(e).cols()));
    Var a = l2_normalize_rows(t, scale(t, matmul_nt(t, e, keys), s));
    return matmul(t, a, values);
}

Var multi_head_external_attention(Tape& t, Var e, std::span<const Var> keys, std::span<const Var> values, Var w1) {
    const std::size_t heads = keys.size();
    const std::size_t d = t.value(e).cols();
    if (heads == 0 || heads != values.size() || d % heads != 0)
        throw ConfigError("head count " + std::to_string(heads) + " must divide d = " + std::to_string(d));
    const std::size_t dh = d / heads;
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h)
        outs.push_back(external_attention(t, heads == 1 ? e : slice_cols(t, e, h * dh, (h + 1) * dh), keys[h], values[h]));
    Var cat = heads == 1 ? outs.front() : concat_cols(t, outs);
    return matmul(t, cat, w1);
}

}  // namespace ad
}  // namespace eagps
