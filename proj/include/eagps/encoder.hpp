#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eagps/autodiff.hpp"
#include "eagps/graph.hpp"
#include "eagps/numerics.hpp"

namespace eagps {

namespace param_names {
inline const std::string item_embedding = "emb.items";
inline const std::string user_embedding = "emb.users";
inline const std::string mixing = "ea.w1";
inline const std::string norm_gain = "ln.gain";
inline const std::string norm_bias = "ln.bias";
inline std::string memory_keys(std::size_t head) { return "ea.keys." + std::to_string(head); }
inline std::string memory_values(std::size_t head) { return "ea.values." + std::to_string(head); }
}  // namespace param_names

struct NodeEmbeddings {
    Tensor2 items;  // m x d
    Tensor2 users;  // n x d
    std::size_t layer = 0;
};

struct EncoderOutput {
    Tensor2 users_final;  // n x d
    Tensor2 items_final;  // m x d
    std::vector<NodeEmbeddings> per_layer;
    // Item rows after residual fusion but before layer norm, one per layer >= 1;
    // empty when no global weighting is active.
    std::vector<Tensor2> prenorm;
};

// How the item rows of each sequence are re-weighted globally at every layer.
enum class GlobalWeighting { none, external, self, linear };

struct EncoderSettings {
    std::size_t layers = 2;
    GlobalWeighting weighting = GlobalWeighting::external;
    std::size_t heads = 2;
    double delta = 1.0;
    double dropout = 0.0;
    bool training = false;
    std::uint64_t dropout_seed = 0;
    // Apply layer norm to the item half even without global weighting; only
    // used to compare the fused path against the plain one.
    bool norm_without_weighting = false;
};

// Stacked [items; users] multiplied by the normalized adjacency.
NodeEmbeddings propagate_layer(const SequentialGraph& graph, const NodeEmbeddings& prev);

// layer_norm(item_layer + delta * z_hat)
Tensor2 fuse_external(const Tensor2& item_layer, const Tensor2& z_hat, double delta, const Tensor2& gain,
                      const Tensor2& bias);

// Uniform 1/(1+eta) average over layers 0..eta.
EncoderOutput combine_layers(std::span<const NodeEmbeddings> per_layer);

struct EncodedVars {
    ad::Var nodes;  // (m + n) x d, items first
    std::vector<ad::Var> per_layer;
    std::vector<ad::Var> prenorm;
};

// Full encoder on a tape. `slices` lists the item indices of every sequence
// whose rows get refined by the global weighting (summed over sequences).
EncodedVars encode(ad::Tape& tape, const SequentialGraph& graph, ParamStore& params, const EncoderSettings& cfg,
                   std::span<const std::vector<std::size_t>> slices);

// Value-only convenience wrapper.
EncoderOutput encode(const SequentialGraph& graph, ParamStore& params, const EncoderSettings& cfg,
                     std::span<const std::vector<std::size_t>> slices);

}  // namespace eagps
