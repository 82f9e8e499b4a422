#include "eagps/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "eagps/errors.hpp"
#include "eagps/simd/kernels.hpp"

namespace eagps {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(a) ^ b) ^ c);
}

Tensor2 xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    if (rows == 0 || cols == 0) throw DimensionError("xavier_init needs positive shape");
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor2 t(rows, cols);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

Tensor2 l2_normalize_rows(const Tensor2& x) {
    Tensor2 out = x;
    const auto& k = simd::active();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        const double n = std::sqrt(k.dot(r.data(), r.data(), r.size()));
        if (n == 0.0) continue;
        for (double& v : r) v /= n;
    }
    return out;
}

Tensor2 softmax_rows(const Tensor2& x) {
    Tensor2 out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        if (r.empty()) continue;
        const double mx = *std::max_element(r.begin(), r.end());
        double s = 0.0;
        for (double& v : r) {
            v = std::exp(v - mx);
            s += v;
        }
        for (double& v : r) v /= s;
    }
    return out;
}

Tensor2 layer_norm(const Tensor2& x, const Tensor2& gain, const Tensor2& bias, double eps) {
    if (gain.rows() != 1 || gain.cols() != x.cols() || !gain.same_shape(bias))
        throw DimensionError("layer_norm: gain/bias must be 1 x " + std::to_string(x.cols()));
    Tensor2 out(x.rows(), x.cols());
    const double c = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        const double mean = std::accumulate(r.begin(), r.end(), 0.0) / c;
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < x.cols(); ++j)
            out(i, j) = (r[j] - mean) * inv * gain(0, j) + bias(0, j);
    }
    return out;
}

Tensor2 dropout_mask(std::size_t rows, std::size_t cols, double rate, std::uint64_t seed, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    Tensor2 mask(rows, cols, 1.0);
    if (!training || rate == 0.0) return mask;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& v : mask.values()) v = u(rng) < rate ? 0.0 : keep_scale;
    return mask;
}

Param& ParamStore::add(const std::string& name, Tensor2 init) {
    if (params_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
    const std::size_t r = init.rows(), c = init.cols();
    auto [it, _] = params_.emplace(name, Param{std::move(init), Tensor2(r, c), Tensor2(r, c), Tensor2(r, c)});
    return it->second;
}

Param& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(0.0);
}

void adam_step(ParamStore& store, const AdamOptions& opt, std::uint64_t t) {
    if (t == 0) throw ConfigError("adam step index starts at 1");
    for (const auto& [name, p] : store)
        if (!p.grad.all_finite()) throw NumericError("non-finite gradient in parameter '" + name + "'");

    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
    for (auto& [_, p] : store) {
        double* w = p.value.data();
        double* g = p.grad.data();
        double* m = p.moment1.data();
        double* v = p.moment2.data();
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
            g[i] = 0.0;
        }
    }
}

GradCheckReport finite_diff_grad_check(const LossFn& loss, ParamStore& store, const GradCheckOptions& opt) {
    GradCheckReport report;

    store.zero_grad();
    const double base = loss(store, true);
    std::map<std::string, Tensor2> analytic;
    for (const auto& [name, p] : store) analytic.emplace(name, p.grad);
    store.zero_grad();

    const double again = loss(store, false);
    if (again != base || !std::isfinite(base)) {
        report.deterministic = false;
        report.passed = false;
        return report;
    }

    std::mt19937_64 rng(opt.seed);
    for (auto& [name, p] : store) {
        GradCheckEntry entry;
        entry.name = name;

        std::vector<std::size_t> coords(p.value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > opt.coords_per_tensor) {
            // partial Fisher-Yates: the first k entries become a uniform sample
            for (std::size_t i = 0; i < opt.coords_per_tensor; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, coords.size() - 1);
                std::swap(coords[i], coords[pick(rng)]);
            }
            coords.resize(opt.coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }

        const Tensor2& a = analytic.at(name);
        for (std::size_t idx : coords) {
            double& w = p.value.data()[idx];
            const double saved = w;
            w = saved + opt.h;
            const double fp = loss(store, false);
            w = saved - opt.h;
            const double fm = loss(store, false);
            w = saved;
            const double numeric = (fp - fm) / (2.0 * opt.h);
            const double an = a.data()[idx];
            const double rel = std::abs(an - numeric) / std::max({1.0, std::abs(an), std::abs(numeric)});
            if (rel >= entry.max_rel_error) {
                entry.max_rel_error = rel;
                entry.analytic = an;
                entry.numeric = numeric;
            }
            ++entry.checked;
        }
        if (entry.max_rel_error >= report.max_rel_error) {
            report.max_rel_error = entry.max_rel_error;
            report.worst_param = name;
        }
        report.entries.push_back(std::move(entry));
    }
    store.zero_grad();
    report.passed = report.max_rel_error <= opt.tolerance;
    return report;
}

}  // namespace eagps
