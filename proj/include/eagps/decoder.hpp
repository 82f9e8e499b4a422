#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eagps/autodiff.hpp"
#include "eagps/data.hpp"
#include "eagps/encoder.hpp"

namespace eagps {

namespace param_names {
inline const std::string prompt_table = "prompt.table";
inline const std::string prompt_kernel = "prompt.wc";
inline const std::string prompt_bias = "prompt.bc";
inline const std::string template_weight = "template.w2";
inline const std::string template_bias = "template.b2";
inline const std::string mask_token = "mask_token";
}  // namespace param_names

// Plain-tensor view of the decoder weights, for the value-level functions.
struct DecoderParams {
    Tensor2 prompt_kernel;    // d1 x d
    Tensor2 prompt_bias;      // 1 x d
    Tensor2 prompt_table;     // max_len x d1, row p-1 holds position p
    Tensor2 template_weight;  // 2d x d
    Tensor2 template_bias;    // 1 x d
    Tensor2 mask_token;       // 1 x d
};

struct PromptTemplate {
    Tensor2 rows;
    Tensor2 masked_rows;
    std::vector<std::uint8_t> mask_flags;
};

// Gathers table rows by 1-based position then applies the kernel-1 convolution
// (a per-row affine map). Throws RangeError past the table.
Tensor2 project_prompts(std::span<const std::size_t> positions, const DecoderParams& p);

// ReLU([e_seq | e_prompt] * W2 + b2)
Tensor2 build_template(const Tensor2& e_seq, const Tensor2& e_prompt, const DecoderParams& p);

// min(floor(gamma * t), t - 1) distinct indices from [0, t - 1), seeded.
std::vector<std::uint8_t> sequential_mask_flags(std::size_t t, double gamma, std::uint64_t seed);
std::size_t mask_count(std::size_t t, double gamma);

PromptTemplate sequential_mask(const Tensor2& tmpl, double gamma, const Tensor2& mask_token, std::uint64_t seed,
                               bool training = true);

// Weights a_i = exp(cos(x_i, x_t)) / sqrt(sum_j exp(cos(x_j, x_t))) against the
// last row x_t (cosine with a zero vector is 0); returns sum_i a_i x_i as 1 x d.
// With standard_softmax the denominator loses its square root.
Tensor2 soft_attention(const Tensor2& masked, bool standard_softmax = false);
// The weights a_i alone, one per row.
std::vector<double> soft_attention_weights(const Tensor2& masked, bool standard_softmax = false);

enum class DecoderKind {
    prompt,           // absolute positional prompts, masking, soft attention
    relative_prompt,  // same, prompt rows indexed by offset from the last item
    additive,         // prompts added to item rows, mean pooled
    max_pool,         // column-wise max over item rows
};

struct DecoderSettings {
    DecoderKind kind = DecoderKind::prompt;
    double gamma = 0.4;
    bool training = false;
    bool standard_softmax = false;
};

// One sequence -> 1 x 2d row [E_X | E_u]. `nodes` is the (m + n) x d encoder output.
ad::Var decode_one(ad::Tape& t, ad::Var nodes, std::size_t m_items, const SequenceRecord& seq, ParamStore& params,
                   const DecoderSettings& cfg, std::uint64_t mask_seed);

// H_S for a list of sequences; masks use mix_seed(seed, i) for row i.
Tensor2 decode(const EncoderOutput& enc, std::span<const SequenceRecord> seqs, ParamStore& params,
               const DecoderSettings& cfg, std::uint64_t seed);

}  // namespace eagps
