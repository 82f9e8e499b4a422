#include "eagps/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "eagps/errors.hpp"

namespace eagps {

Tensor2 project_prompts(std::span<const std::size_t> positions, const DecoderParams& p) {
    std::vector<std::size_t> rows;
    rows.reserve(positions.size());
    for (std::size_t pos : positions) {
        if (pos == 0 || pos > p.prompt_table.rows())
            throw RangeError("position " + std::to_string(pos) + " outside prompt table of " +
                             std::to_string(p.prompt_table.rows()));
        rows.push_back(pos - 1);
    }
    return add_row_vector(matmul(gather_rows(p.prompt_table, rows), p.prompt_kernel), p.prompt_bias);
}

Tensor2 build_template(const Tensor2& e_seq, const Tensor2& e_prompt, const DecoderParams& p) {
    if (!e_seq.same_shape(e_prompt)) throw DimensionError("build_template: sequence/prompt shapes differ");
    const Tensor2 parts[] = {e_seq, e_prompt};
    Tensor2 out = add_row_vector(matmul(concat_cols(parts), p.template_weight), p.template_bias);
    for (double& v : out.values()) v = std::max(v, 0.0);
    return out;
}

std::size_t mask_count(std::size_t t, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (t == 0) return 0;
    // tolerance guards products such as 0.3 * 10 = 2.9999999999999996
    const auto k = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(t) + 1e-9));
    return std::min(k, t - 1);
}

std::vector<std::uint8_t> sequential_mask_flags(std::size_t t, double gamma, std::uint64_t seed) {
    const std::size_t k = mask_count(t, gamma);
    std::vector<std::uint8_t> flags(t, 0);
    if (k == 0) return flags;
    std::vector<std::size_t> pool(t - 1);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        flags[pool[i]] = 1;
    }
    return flags;
}

PromptTemplate sequential_mask(const Tensor2& tmpl, double gamma, const Tensor2& mask_token, std::uint64_t seed,
                               bool training) {
    if (mask_token.rows() != 1 || mask_token.cols() != tmpl.cols())
        throw DimensionError("mask token must be 1 x d");
    mask_count(tmpl.rows(), gamma);  // validates gamma in both modes
    PromptTemplate out;
    out.rows = tmpl;
    out.masked_rows = tmpl;
    out.mask_flags = training ? sequential_mask_flags(tmpl.rows(), gamma, seed)
                              : std::vector<std::uint8_t>(tmpl.rows(), 0);
    for (std::size_t i = 0; i < tmpl.rows(); ++i)
        if (out.mask_flags[i]) std::copy(mask_token.row(0).begin(), mask_token.row(0).end(), out.masked_rows.row(i).begin());
    return out;
}

Tensor2 soft_attention(const Tensor2& masked, bool standard_softmax) {
    ad::Tape t(false);
    return t.value(ad::soft_attention(t, t.constant(masked), standard_softmax));
}

std::vector<double> soft_attention_weights(const Tensor2& masked, bool standard_softmax) {
    const std::size_t n = masked.rows();
    if (n == 0) throw DimensionError("soft_attention: empty template");
    const auto q = masked.row(n - 1);
    const auto norm = [](std::span<const double> r) { return std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0)); };
    const double qn = norm(q);
    std::vector<double> w(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = masked.row(i);
        const double denom = norm(r) * qn;
        const double cos = denom > 0.0 ? std::inner_product(r.begin(), r.end(), q.begin(), 0.0) / denom : 0.0;
        sum += (w[i] = std::exp(cos));
    }
    const double scale = standard_softmax ? 1.0 / sum : 1.0 / std::sqrt(sum);
    for (double& v : w) v *= scale;
    return w;
}

ad::Var decode_one(ad::Tape& t, ad::Var nodes, std::size_t m_items, const SequenceRecord& seq, ParamStore& params,
                   const DecoderSettings& cfg, std::uint64_t mask_seed) {
    const std::size_t len = seq.length();
    if (len == 0) throw DataError("cannot decode an empty sequence");
    ad::Var e_seq = ad::gather_rows(t, nodes, seq.items);
    ad::Var user = ad::gather_rows(t, nodes, {m_items + seq.user_index});

    ad::Var pooled;
    if (cfg.kind == DecoderKind::max_pool) {
        pooled = ad::max_pool_rows(t, e_seq);
    } else {
        ad::Var table = t.param(params, param_names::prompt_table);
        const std::size_t max_len = t.value(table).rows();
        std::vector<std::size_t> rows(len);
        for (std::size_t i = 0; i < len; ++i) {
            // absolute: position p_i; relative: offset t - p_i from the last item
            const std::size_t pos = seq.positions.empty() ? i + 1 : seq.positions[i];
            const std::size_t row = cfg.kind == DecoderKind::relative_prompt ? len - pos : pos - 1;
            if (pos == 0 || row >= max_len)
                throw RangeError("position " + std::to_string(pos) + " outside prompt table of " + std::to_string(max_len));
            rows[i] = row;
        }
        ad::Var prompts = ad::add_row(t, ad::matmul(t, ad::gather_rows(t, table, std::move(rows)),
                                                    t.param(params, param_names::prompt_kernel)),
                                      t.param(params, param_names::prompt_bias));
        if (cfg.kind == DecoderKind::additive) {
            pooled = ad::mean_pool_rows(t, ad::add(t, e_seq, prompts));
        } else {
            const ad::Var parts[] = {e_seq, prompts};
            ad::Var tmpl = ad::relu(t, ad::add_row(t, ad::matmul(t, ad::concat_cols(t, parts),
                                                                 t.param(params, param_names::template_weight)),
                                                   t.param(params, param_names::template_bias)));
            if (cfg.training) {
                auto flags = sequential_mask_flags(len, cfg.gamma, mask_seed);
                if (std::any_of(flags.begin(), flags.end(), [](std::uint8_t f) { return f != 0; }))
                    tmpl = ad::replace_rows(t, tmpl, std::move(flags), t.param(params, param_names::mask_token));
            }
            pooled = ad::soft_attention(t, tmpl, cfg.standard_softmax);
        }
    }
    const ad::Var halves[] = {pooled, user};
    return ad::concat_cols(t, halves);
}

Tensor2 decode(const EncoderOutput& enc, std::span<const SequenceRecord> seqs, ParamStore& params,
               const DecoderSettings& cfg, std::uint64_t seed) {
    ad::Tape t(false);
    const Tensor2 stacked[] = {enc.items_final, enc.users_final};
    ad::Var nodes = t.constant(concat_rows(stacked));
    std::vector<ad::Var> rows;
    rows.reserve(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i)
        rows.push_back(decode_one(t, nodes, enc.items_final.rows(), seqs[i], params, cfg, mix_seed(seed, i)));
    if (rows.empty()) return Tensor2(0, 2 * enc.items_final.cols());
    return t.value(ad::concat_rows(t, rows));
}

}  // namespace eagps
