#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eagps/autodiff.hpp"
#include "eagps/config.hpp"
#include "eagps/data.hpp"
#include "eagps/decoder.hpp"
#include "eagps/encoder.hpp"
#include "eagps/graph.hpp"

namespace eagps {

namespace param_names {
inline const std::string head_weight = "head.w6";
inline const std::string head_bias = "head.b6";
}  // namespace param_names

// Which encoder weighting and decoder a variant uses.
struct VariantWiring {
    GlobalWeighting weighting = GlobalWeighting::external;
    DecoderKind decoder = DecoderKind::prompt;
};

VariantWiring build_variant(Variant v);

struct ModelShape {
    std::size_t m_items = 0;
    std::size_t n_users = 0;
    std::size_t max_len = 0;
};

// Learnable tensors for a config: weights Xavier-initialized (seeded per name),
// biases zero, layer-norm gain one.
ParamStore init_params(const HyperConfig& cfg, const ModelShape& shape);

// softmax_rows(H * W6 + b6)
Tensor2 predict(const Tensor2& h, const Tensor2& w6, const Tensor2& b6);

// -(1/B) sum_b log(probs[b, target_b] + 1e-12)
double loss(const Tensor2& probs, std::span<const std::size_t> targets);

struct Example {
    SequenceRecord prefix;
    std::size_t target = 0;
    std::size_t id = 0;  // stable index, feeds the per-example mask seed
};

// last-item: one example per sequence; all-prefixes: one per position i >= 2.
std::vector<Example> make_training_examples(std::span<const SequenceRecord> seqs, LossMode mode);

// Drops the last item of each sequence (evaluation input).
std::vector<SequenceRecord> prefixes_of(std::span<const SequenceRecord> seqs);

struct PassContext {
    bool training = false;
    std::uint64_t dropout_seed = 0;
    std::vector<std::uint64_t> mask_seeds;  // one per input row (training only)
};

class Model {
public:
    Model(HyperConfig cfg, ModelShape shape, SequentialGraph graph);
    // Adopts existing parameters; throws ConfigError if any name or shape differs.
    Model(HyperConfig cfg, ModelShape shape, SequentialGraph graph, ParamStore params);

    const HyperConfig& config() const noexcept { return cfg_; }
    const ModelShape& shape() const noexcept { return shape_; }
    const SequentialGraph& graph() const noexcept { return graph_; }
    ParamStore& params() noexcept { return params_; }
    const ParamStore& params() const noexcept { return params_; }
    VariantWiring wiring() const noexcept { return build_variant(cfg_.variant); }

    EncoderSettings encoder_settings(const PassContext& ctx) const;
    DecoderSettings decoder_settings(const PassContext& ctx) const;

    // B x m logits; the global weighting runs over the given prefixes.
    ad::Var logits(ad::Tape& t, std::span<const SequenceRecord> prefixes, const PassContext& ctx);

    // Mean cross-entropy plus ea_l2 * squared norm of the memory units.
    ad::Var objective(ad::Tape& t, ad::Var logits, std::span<const std::size_t> targets);

    // Eval-mode logits (no dropout, no masking).
    Tensor2 scores(std::span<const SequenceRecord> prefixes);

    // Training-mode objective at the current parameters with fixed seeds;
    // fills parameter gradients when asked. Used by the gradient checker.
    double objective_value(std::span<const Example> batch, const PassContext& ctx, bool with_grad);

    std::size_t epochs_done = 0;

private:
    void check_params() const;

    HyperConfig cfg_;
    ModelShape shape_;
    SequentialGraph graph_;
    ParamStore params_;
};

// One pass over the examples: shuffle by (shuffle_seed, epoch), then per batch
// forward, backward and an Adam step. Returns the example-weighted mean
// objective. Throws NumericError (with epoch, batch and parameter norms) on a
// non-finite objective.
double train_epoch(Model& model, std::span<const Example> examples, std::size_t epoch);

// Runs `epochs` epochs after model.epochs_done; calls back with (epoch, loss).
std::vector<double> train(Model& model, std::span<const Example> examples, std::size_t epochs,
                          const std::function<void(std::size_t, double)>& on_epoch = {});

// Graph from the train split, max_len defaulting to the longest sequence.
Model make_model(const HyperConfig& cfg, const SequenceSet& data);

}  // namespace eagps
