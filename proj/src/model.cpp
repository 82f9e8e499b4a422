#include "eagps/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eagps/errors.hpp"

namespace eagps {

VariantWiring build_variant(Variant v) {
    switch (v) {
        case Variant::ea_gps: return {GlobalWeighting::external, DecoderKind::prompt};
        case Variant::gps_opt: return {GlobalWeighting::external, DecoderKind::max_pool};
        case Variant::gps_rpe: return {GlobalWeighting::external, DecoderKind::relative_prompt};
        case Variant::gps_oma: return {GlobalWeighting::external, DecoderKind::additive};
        case Variant::gps_oea: return {GlobalWeighting::none, DecoderKind::prompt};
        case Variant::gps_sa: return {GlobalWeighting::self, DecoderKind::prompt};
        case Variant::gps_la: return {GlobalWeighting::linear, DecoderKind::prompt};
        case Variant::gps_basic: return {GlobalWeighting::none, DecoderKind::max_pool};
    }
    throw ConfigError("unknown variant");
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

ParamStore init_params(const HyperConfig& cfg, const ModelShape& shape) {
    cfg.validate();
    if (shape.m_items == 0 || shape.n_users == 0) throw ConfigError("model needs at least one item and one user");
    const std::size_t d = cfg.d, d1 = cfg.prompt_width(), m = shape.m_items;
    const VariantWiring w = build_variant(cfg.variant);

    ParamStore store;
    auto xavier = [&](const std::string& name, std::size_t r, std::size_t c) {
        store.add(name, xavier_init(r, c, mix_seed(cfg.init_seed, fnv1a(name))));
    };

    xavier(param_names::item_embedding, m, d);
    xavier(param_names::user_embedding, shape.n_users, d);
    store.add(param_names::norm_gain, Tensor2(1, d, 1.0));
    store.add(param_names::norm_bias, Tensor2(1, d));
    xavier(param_names::head_weight, 2 * d, m);
    store.add(param_names::head_bias, Tensor2(1, m));

    if (w.weighting == GlobalWeighting::external) {
        for (std::size_t h = 0; h < cfg.beta; ++h) {
            xavier(param_names::memory_keys(h), cfg.alpha, d / cfg.beta);
            xavier(param_names::memory_values(h), cfg.alpha, d / cfg.beta);
        }
        xavier(param_names::mixing, d, d);
    }
    if (w.decoder != DecoderKind::max_pool) {
        if (shape.max_len == 0) throw ConfigError("max_len must be >= 1");
        xavier(param_names::prompt_table, shape.max_len, d1);
        xavier(param_names::prompt_kernel, d1, d);
        store.add(param_names::prompt_bias, Tensor2(1, d));
    }
    if (w.decoder == DecoderKind::prompt || w.decoder == DecoderKind::relative_prompt) {
        xavier(param_names::template_weight, 2 * d, d);
        store.add(param_names::template_bias, Tensor2(1, d));
        xavier(param_names::mask_token, 1, d);
    }
    return store;
}

Tensor2 predict(const Tensor2& h, const Tensor2& w6, const Tensor2& b6) {
    return softmax_rows(add_row_vector(matmul(h, w6), b6));
}

double loss(const Tensor2& probs, std::span<const std::size_t> targets) {
    if (targets.size() != probs.rows()) throw DimensionError("loss: target count mismatch");
    if (targets.empty()) throw DataError("loss over an empty batch");
    double total = 0.0;
    for (std::size_t b = 0; b < targets.size(); ++b) {
        if (targets[b] >= probs.cols()) throw RangeError("loss: target out of range");
        total -= std::log(probs(b, targets[b]) + 1e-12);
    }
    return total / static_cast<double>(targets.size());
}

std::vector<Example> make_training_examples(std::span<const SequenceRecord> seqs, LossMode mode) {
    std::vector<Example> out;
    for (const auto& s : seqs) {
        if (s.length() < 2) throw DataError("training sequences need at least 2 items");
        const std::size_t first = mode == LossMode::last_item ? s.length() - 1 : std::min<std::size_t>(2, s.length() - 1);
        for (std::size_t i = first; i < s.length(); ++i) {
            std::vector<std::size_t> items(s.items.begin(), s.items.begin() + static_cast<std::ptrdiff_t>(i));
            out.push_back({make_sequence(s.user_index, std::move(items)), s.items[i], out.size()});
        }
    }
    return out;
}

std::vector<SequenceRecord> prefixes_of(std::span<const SequenceRecord> seqs) {
    std::vector<SequenceRecord> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) {
        if (s.length() < 2) throw DataError("evaluation sequences need at least 2 items");
        out.push_back(make_sequence(s.user_index, {s.items.begin(), s.items.end() - 1}));
    }
    return out;
}

Model::Model(HyperConfig cfg, ModelShape shape, SequentialGraph graph)
    : cfg_(std::move(cfg)), shape_(shape), graph_(std::move(graph)), params_(init_params(cfg_, shape_)) {
    if (graph_.m_items != shape_.m_items || graph_.n_users != shape_.n_users)
        throw DimensionError("graph does not match model shape");
}

Model::Model(HyperConfig cfg, ModelShape shape, SequentialGraph graph, ParamStore params)
    : cfg_(std::move(cfg)), shape_(shape), graph_(std::move(graph)), params_(std::move(params)) {
    if (graph_.m_items != shape_.m_items || graph_.n_users != shape_.n_users)
        throw DimensionError("graph does not match model shape");
    check_params();
}

void Model::check_params() const {
    const ParamStore expected = init_params(cfg_, shape_);
    if (expected.size() != params_.size())
        throw ConfigError("parameter set does not match the config (" + std::to_string(params_.size()) + " vs " +
                          std::to_string(expected.size()) + " tensors)");
    for (const auto& [name, p] : expected) {
        if (!params_.contains(name)) throw ConfigError("missing parameter " + name);
        if (!params_.at(name).value.same_shape(p.value))
            throw ConfigError("parameter " + name + " has shape " + params_.at(name).value.shape_string() +
                              ", config expects " + p.value.shape_string());
    }
}

EncoderSettings Model::encoder_settings(const PassContext& ctx) const {
    EncoderSettings s;
    s.layers = cfg_.eta;
    s.weighting = wiring().weighting;
    s.heads = cfg_.beta;
    s.delta = HyperConfig::delta;
    s.dropout = cfg_.dropout;
    s.training = ctx.training;
    s.dropout_seed = ctx.dropout_seed;
    return s;
}

DecoderSettings Model::decoder_settings(const PassContext& ctx) const {
    DecoderSettings s;
    s.kind = wiring().decoder;
    s.gamma = cfg_.gamma;
    s.training = ctx.training;
    s.standard_softmax = cfg_.standard_softmax;
    return s;
}

ad::Var Model::logits(ad::Tape& t, std::span<const SequenceRecord> prefixes, const PassContext& ctx) {
    if (prefixes.empty()) throw DataError("forward pass over an empty batch");
    if (ctx.training && ctx.mask_seeds.size() != prefixes.size())
        throw DimensionError("one mask seed per training row is required");
    std::vector<std::vector<std::size_t>> slices;
    slices.reserve(prefixes.size());
    for (const auto& p : prefixes) slices.push_back(p.items);

    const EncodedVars enc = encode(t, graph_, params_, encoder_settings(ctx), slices);
    const DecoderSettings dec = decoder_settings(ctx);
    std::vector<ad::Var> rows;
    rows.reserve(prefixes.size());
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
        if (prefixes[i].user_index >= shape_.n_users) throw RangeError("user index out of range");
        rows.push_back(decode_one(t, enc.nodes, shape_.m_items, prefixes[i], params_, dec,
                                  ctx.training ? ctx.mask_seeds[i] : 0));
    }
    ad::Var h = ad::concat_rows(t, rows);
    return ad::add_row(t, ad::matmul(t, h, t.param(params_, param_names::head_weight)),
                       t.param(params_, param_names::head_bias));
}

ad::Var Model::objective(ad::Tape& t, ad::Var logits, std::span<const std::size_t> targets) {
    ad::Var obj = ad::cross_entropy(t, logits, {targets.begin(), targets.end()});
    if (wiring().weighting == GlobalWeighting::external && cfg_.ea_l2 > 0.0) {
        std::vector<ad::Var> norms;
        for (std::size_t h = 0; h < cfg_.beta; ++h) {
            norms.push_back(ad::sum_squares(t, t.param(params_, param_names::memory_keys(h))));
            norms.push_back(ad::sum_squares(t, t.param(params_, param_names::memory_values(h))));
        }
        ad::Var reg = norms.front();
        for (std::size_t i = 1; i < norms.size(); ++i) reg = ad::add(t, reg, norms[i]);
        obj = ad::add(t, obj, ad::scale(t, reg, cfg_.ea_l2));
    }
    return obj;
}

Tensor2 Model::scores(std::span<const SequenceRecord> prefixes) {
    ad::Tape t(false);
    return t.value(logits(t, prefixes, PassContext{}));
}

double Model::objective_value(std::span<const Example> batch, const PassContext& ctx, bool with_grad) {
    std::vector<SequenceRecord> prefixes;
    std::vector<std::size_t> targets;
    for (const auto& e : batch) {
        prefixes.push_back(e.prefix);
        targets.push_back(e.target);
    }
    ad::Tape t(with_grad);
    ad::Var obj = objective(t, logits(t, prefixes, ctx), targets);
    const double value = t.value(obj)(0, 0);
    if (with_grad) {
        t.backward(obj);
        t.accumulate_into(params_);
    }
    return value;
}

namespace {

std::string norms_report(const ParamStore& store) {
    std::ostringstream o;
    for (const auto& [name, p] : store) o << ' ' << name << '=' << std::sqrt(p.value.squared_norm());
    return o.str();
}

}  // namespace

double train_epoch(Model& model, std::span<const Example> examples, std::size_t epoch) {
    const HyperConfig& cfg = model.config();
    const auto batches = make_batches(examples.size(), cfg.batch_size, mix_seed(cfg.shuffle_seed, epoch));
    ParamStore& store = model.params();
    const AdamOptions adam{cfg.lr};

    double weighted = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        std::vector<Example> batch;
        batch.reserve(batches[b].size());
        PassContext ctx;
        ctx.training = true;
        ctx.dropout_seed = mix_seed(cfg.dropout_seed, store.step + 1);
        for (std::size_t idx : batches[b]) {
            batch.push_back(examples[idx]);
            ctx.mask_seeds.push_back(mix_seed(cfg.mask_seed, epoch, examples[idx].id));
        }
        const double value = model.objective_value(batch, ctx, true);
        if (!std::isfinite(value))
            throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                               "; parameter norms:" + norms_report(store));
        weighted += value * static_cast<double>(batch.size());
        store.step += 1;
        adam_step(store, adam, store.step);
    }
    return weighted / static_cast<double>(examples.size());
}

std::vector<double> train(Model& model, std::span<const Example> examples, std::size_t epochs,
                          const std::function<void(std::size_t, double)>& on_epoch) {
    std::vector<double> history;
    history.reserve(epochs);
    for (std::size_t e = 0; e < epochs; ++e) {
        const std::size_t epoch = model.epochs_done + 1;
        const double l = train_epoch(model, examples, epoch);
        model.epochs_done = epoch;
        history.push_back(l);
        if (on_epoch) on_epoch(epoch, l);
    }
    return history;
}

Model make_model(const HyperConfig& cfg, const SequenceSet& data) {
    if (data.train.empty()) throw DataError("no training sequences");
    ModelShape shape{data.m_items, data.n_users, cfg.max_len ? cfg.max_len : data.max_length()};
    return Model(cfg, shape, build_graph(data.train, data.m_items, data.n_users));
}

}  // namespace eagps
