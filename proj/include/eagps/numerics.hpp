#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "eagps/tensor.hpp"

namespace eagps {

// SplitMix64 finalizer; used to derive independent stream seeds from
// (seed, tag, index) tuples so results never depend on call order.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

// Uniform on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
Tensor2 xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

// Zero rows stay zero.
Tensor2 l2_normalize_rows(const Tensor2& x);

// Max-subtracted row-wise softmax.
Tensor2 softmax_rows(const Tensor2& x);

// Per-row standardization followed by gain/bias (both 1 x cols).
Tensor2 layer_norm(const Tensor2& x, const Tensor2& gain, const Tensor2& bias, double eps = 1e-6);

// Inverted-dropout multiplier: entries are 0 or 1/(1-rate) in training, 1 otherwise.
Tensor2 dropout_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed, bool training);

struct Param {
    Tensor2 value;
    Tensor2 grad;
    Tensor2 moment1;
    Tensor2 moment2;
};

// Named learnable tensors. Iteration order is lexicographic by name, which
// fixes checkpoint layout and every reduction over parameters.
class ParamStore {
public:
    Param& add(const std::string& name, Tensor2 init);
    bool contains(const std::string& name) const { return params_.contains(name); }
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;

    Tensor2& value(const std::string& name) { return at(name).value; }
    const Tensor2& value(const std::string& name) const { return at(name).value; }
    Tensor2& grad(const std::string& name) { return at(name).grad; }

    std::vector<std::string> names() const;
    std::size_t scalar_count() const;
    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    std::size_t size() const { return params_.size(); }

    // Adam step counter; persisted with checkpoints.
    std::uint64_t step = 0;

private:
    std::map<std::string, Param> params_;
};

struct AdamOptions {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam update of every parameter for step t (t >= 1); zeroes
// gradients afterwards. Throws NumericError naming the first parameter with a
// non-finite gradient (before touching any value).
void adam_step(ParamStore& store, const AdamOptions& opt, std::uint64_t t);

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    double analytic = 0.0;  // at the worst coordinate
    double numeric = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    std::string worst_param;
    double max_rel_error = 0.0;
    bool deterministic = true;
    bool passed = false;
};

struct GradCheckOptions {
    double h = 1e-5;
    double tolerance = 1e-4;
    std::size_t coords_per_tensor = 32;
    std::uint64_t seed = 7;
};

// Loss callback: evaluates the objective at the store's current values; when
// the flag is set it must also leave d(loss)/d(param) in every grad slot.
using LossFn = std::function<double(ParamStore&, bool with_grad)>;

// Central differences on a seeded subset of coordinates per tensor (all
// coordinates when the tensor is smaller). rel = |a-n| / max(1, |a|, |n|).
GradCheckReport finite_diff_grad_check(const LossFn& loss, ParamStore& store,
                                       const GradCheckOptions& opt = {});

}  // namespace eagps
