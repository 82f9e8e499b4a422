#include "eagps/encoder.hpp"

#include "eagps/attention.hpp"
#include "eagps/errors.hpp"

namespace eagps {

NodeEmbeddings propagate_layer(const SequentialGraph& graph, const NodeEmbeddings& prev) {
    if (prev.items.rows() != graph.m_items || prev.users.rows() != graph.n_users ||
        prev.items.cols() != prev.users.cols())
        throw DimensionError("propagate_layer: embeddings do not match the graph");
    const Tensor2 stacked[] = {prev.items, prev.users};
    Tensor2 next = spmm(graph.normalized, concat_rows(stacked));
    return {slice_rows(next, 0, graph.m_items), slice_rows(next, graph.m_items, graph.node_count()),
            prev.layer + 1};
}

Tensor2 fuse_external(const Tensor2& item_layer, const Tensor2& z_hat, double delta, const Tensor2& gain,
                      const Tensor2& bias) {
    if (!item_layer.same_shape(z_hat)) throw DimensionError("fuse_external: shape mismatch");
    return layer_norm(item_layer + delta * z_hat, gain, bias);
}

EncoderOutput combine_layers(std::span<const NodeEmbeddings> per_layer) {
    if (per_layer.empty()) throw DimensionError("combine_layers: no layers");
    const double w = 1.0 / static_cast<double>(per_layer.size());
    EncoderOutput out;
    out.items_final = Tensor2(per_layer[0].items.rows(), per_layer[0].items.cols());
    out.users_final = Tensor2(per_layer[0].users.rows(), per_layer[0].users.cols());
    for (const auto& l : per_layer) {
        out.items_final += w * l.items;
        out.users_final += w * l.users;
    }
    out.per_layer.assign(per_layer.begin(), per_layer.end());
    return out;
}

namespace {

// Sum over sequences of the refined rows, scattered back to item positions.
ad::Var global_weighting(ad::Tape& t, ad::Var items, ParamStore& params, const EncoderSettings& cfg,
                         std::span<const std::vector<std::size_t>> slices) {
    const std::size_t m = t.value(items).rows();
    std::vector<std::size_t> all;
    for (const auto& s : slices) all.insert(all.end(), s.begin(), s.end());

    if (cfg.weighting == GlobalWeighting::external) {
        // External attention is row-local, so every sequence can go through in one stack.
        std::vector<ad::Var> keys, values;
        for (std::size_t h = 0; h < cfg.heads; ++h) {
            keys.push_back(t.param(params, param_names::memory_keys(h)));
            values.push_back(t.param(params, param_names::memory_values(h)));
        }
        ad::Var w1 = t.param(params, param_names::mixing);
        ad::Var rows = ad::gather_rows(t, items, all);
        ad::Var z = ad::multi_head_external_attention(t, rows, keys, values, w1);
        return ad::scatter_add_rows(t, z, std::move(all), m);
    }

    std::vector<ad::Var> refined;
    refined.reserve(slices.size());
    for (const auto& s : slices) {
        ad::Var rows = ad::gather_rows(t, items, s);
        refined.push_back(cfg.weighting == GlobalWeighting::self ? ad::self_attention(t, rows)
                                                                  : ad::linear_attention(t, rows));
    }
    ad::Var z = ad::concat_rows(t, refined);
    return ad::scatter_add_rows(t, z, std::move(all), m);
}

}  // namespace

EncodedVars encode(ad::Tape& t, const SequentialGraph& graph, ParamStore& params, const EncoderSettings& cfg,
                   std::span<const std::vector<std::size_t>> slices) {
    if (cfg.layers < 1) throw ConfigError("encoder needs at least one layer");
    const std::size_t m = graph.m_items;
    for (const auto& s : slices)
        for (std::size_t it : s)
            if (it >= m) throw RangeError("sequence item index out of range");

    ad::Var items0 = t.param(params, param_names::item_embedding);
    ad::Var users0 = t.param(params, param_names::user_embedding);
    if (t.value(items0).rows() != m || t.value(users0).rows() != graph.n_users)
        throw DimensionError("embedding tables do not match the graph");
    const ad::Var base[] = {items0, users0};

    EncodedVars out;
    ad::Var prev = ad::concat_rows(t, base);
    out.per_layer.push_back(prev);
    const bool weighted = cfg.weighting != GlobalWeighting::none && !slices.empty();
    const bool normed = cfg.weighting != GlobalWeighting::none || cfg.norm_without_weighting;
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
        ad::Var next = ad::spmm(t, graph.normalized, prev);
        if (cfg.training && cfg.dropout > 0.0) {
            const Tensor2& v = t.value(next);
            next = ad::mul_const(t, next, dropout_mask(v.rows(), v.cols(), cfg.dropout, mix_seed(cfg.dropout_seed, l), true));
        }
        if (normed) {
            ad::Var items = ad::slice_rows(t, next, 0, m);
            ad::Var users = ad::slice_rows(t, next, m, graph.node_count());
            ad::Var fused = items;
            if (weighted) {
                ad::Var z = global_weighting(t, items, params, cfg, slices);
                fused = ad::add(t, items, ad::scale(t, z, cfg.delta));
            }
            out.prenorm.push_back(fused);
            ad::Var normalized = ad::layer_norm(t, fused, t.param(params, param_names::norm_gain),
                                                t.param(params, param_names::norm_bias));
            const ad::Var halves[] = {normalized, users};
            next = ad::concat_rows(t, halves);
        }
        out.per_layer.push_back(next);
        prev = next;
    }
    out.nodes = ad::mean_of(t, out.per_layer);
    return out;
}

EncoderOutput encode(const SequentialGraph& graph, ParamStore& params, const EncoderSettings& cfg,
                     std::span<const std::vector<std::size_t>> slices) {
    ad::Tape t(false);
    const EncodedVars vars = encode(t, graph, params, cfg, slices);
    const std::size_t m = graph.m_items;
    EncoderOutput out;
    const Tensor2& nodes = t.value(vars.nodes);
    out.items_final = slice_rows(nodes, 0, m);
    out.users_final = slice_rows(nodes, m, graph.node_count());
    for (std::size_t l = 0; l < vars.per_layer.size(); ++l) {
        const Tensor2& v = t.value(vars.per_layer[l]);
        out.per_layer.push_back({slice_rows(v, 0, m), slice_rows(v, m, graph.node_count()), l});
    }
    for (ad::Var p : vars.prenorm) out.prenorm.push_back(t.value(p));
    return out;
}

}  // namespace eagps
