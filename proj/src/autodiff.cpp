#include "eagps/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eagps/errors.hpp"
#include "eagps/simd/kernels.hpp"

namespace eagps::ad {

Var Tape::constant(Tensor2 value) {
    nodes_.push_back({std::move(value), {}, false, {}});
    return {nodes_.size() - 1};
}

Var Tape::param(ParamStore& store, const std::string& name) {
    if (auto it = param_leaf_.find(name); it != param_leaf_.end()) return {it->second};
    nodes_.push_back({store.value(name), {}, record_, {}});
    param_leaf_.emplace(name, nodes_.size() - 1);
    return {nodes_.size() - 1};
}

Tensor2& Tape::grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor2(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::record(Tensor2 value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor2 value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    if (record_)
        for (Var in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
    nodes_.push_back({std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
    return {nodes_.size() - 1};
}

void Tape::backward(Var root) {
    if (!record_) throw Error("backward on a tape recorded without gradients");
    const Tensor2& rv = value(root);
    if (rv.rows() != 1 || rv.cols() != 1) throw DimensionError("backward root must be 1x1");
    grad(root)(0, 0) += 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
        n.backward(*this);
    }
}

void Tape::accumulate_into(ParamStore& store) const {
    for (const auto& [name, id] : param_leaf_) {
        const Node& n = nodes_[id];
        if (!n.grad.empty()) store.grad(name) += n.grad;
    }
}

namespace {

const auto& K() { return simd::active(); }

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
    Tensor2 out = eagps::matmul(t.value(a), t.value(b));
    Var o{t.size()};
    return t.record(std::move(out), {a, b}, [a, b, o](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        if (tp.requires_grad(a)) tp.grad(a) += eagps::matmul_nt(g, tp.value(b));
        if (tp.requires_grad(b)) tp.grad(b) += eagps::matmul_tn(tp.value(a), g);
    });
}

Var matmul_nt(Tape& t, Var a, Var b) {
    Tensor2 out = eagps::matmul_nt(t.value(a), t.value(b));
    Var o{t.size()};
    return t.record(std::move(out), {a, b}, [a, b, o](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        if (tp.requires_grad(a)) tp.grad(a) += eagps::matmul(g, tp.value(b));
        if (tp.requires_grad(b)) tp.grad(b) += eagps::matmul_tn(g, tp.value(a));
    });
}

Var matmul_tn(Tape& t, Var a, Var b) {
    Tensor2 out = eagps::matmul_tn(t.value(a), t.value(b));
    Var o{t.size()};
    return t.record(std::move(out), {a, b}, [a, b, o](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        if (tp.requires_grad(a)) tp.grad(a) += eagps::matmul_nt(tp.value(b), g);
        if (tp.requires_grad(b)) tp.grad(b) += eagps::matmul(tp.value(a), g);
    });
}

Var add(Tape& t, Var a, Var b) {
    Tensor2 out = t.value(a) + t.value(b);
    Var o{t.size()};
    return t.record(std::move(out), {a, b}, [a, b, o](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        if (tp.requires_grad(a)) tp.grad(a) += g;
        if (tp.requires_grad(b)) tp.grad(b) += g;
    });
}

Var add_row(Tape& t, Var a, Var row) {
    Tensor2 out = add_row_vector(t.value(a), t.value(row));
    Var o{t.size()};
    return t.record(std::move(out), {a, row}, [a, row, o](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        if (tp.requires_grad(a)) tp.grad(a) += g;
        if (tp.requires_grad(row)) {
            Tensor2& gr = tp.grad(row);
            for (std::size_t i = 0; i < g.rows(); ++i) K().axpy(1.0, g.row(i).data(), gr.data(), g.cols());
        }
    });
}

Var scale(Tape& t, Var a, double s) {
    Tensor2 out = s * t.value(a);
    Var o{t.size()};
    return t.record(std::move(out), {a}, [a, s, o](Tape& tp) {
        K().axpy(s, tp.grad(o).data(), tp.grad(a).data(), tp.grad(o).size());
    });
}

Var mul_const(Tape& t, Var a, const Tensor2& mask) {
    if (!mask.same_shape(t.value(a))) throw DimensionError("mul_const: mask shape mismatch");
    Tensor2 out = t.value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= mask.data()[i];
    Var o{t.size()};
    return t.record(std::move(out), {a}, [a, mask, o](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        Tensor2& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * mask.data()[i];
    });
}

Var relu(Tape& t, Var a) {
    Tensor2 out = t.value(a);
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    Var o{t.size()};
    return t.record(std::move(out), {a}, [a, o](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        const Tensor2& x = tp.value(a);
        Tensor2& ga = tp.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x.data()[i] > 0.0) ga.data()[i] += g.data()[i];
    });
}

Var softmax_rows(Tape& t, Var a) {
    Tensor2 out = eagps::softmax_rows(t.value(a));
    Var o{t.size()};
    return t.record(std::move(out), {a}, [a, o](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        const Tensor2& y = tp.value(o);
        Tensor2& ga = tp.grad(a);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            const double gy = K().dot(g.row(i).data(), y.row(i).data(), y.cols());
            for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - gy);
        }
    });
}

Var l2_normalize_rows(Tape& t, Var a) {
    Tensor2 out = eagps::l2_normalize_rows(t.value(a));
    Var o{t.size()};
    return t.record(std::move(out), {a}, [a, o](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        const Tensor2& x = tp.value(a);
        const Tensor2& y = tp.value(o);
        Tensor2& ga = tp.grad(a);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double n = std::sqrt(K().dot(x.row(i).data(), x.row(i).data(), x.cols()));
            if (n == 0.0) continue;
            const double gy = K().dot(g.row(i).data(), y.row(i).data(), y.cols());
            for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += (g(i, j) - y(i, j) * gy) / n;
        }
    });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
    const Tensor2& xv = t.value(x);
    const std::size_t rows = xv.rows(), cols = xv.cols();
    Tensor2 xhat(rows, cols);
    std::vector<double> inv_std(rows);
    const double c = static_cast<double>(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        auto r = xv.row(i);
        const double mean = std::accumulate(r.begin(), r.end(), 0.0) / c;
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= c;
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < cols; ++j) xhat(i, j) = (r[j] - mean) * inv_std[i];
    }
    Tensor2 out = eagps::layer_norm(xv, t.value(gain), t.value(bias), eps);
    Var o{t.size()};
    return t.record(std::move(out), {x, gain, bias},
                    [x, gain, bias, o, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        const Tensor2& gv = tp.value(gain);
        const std::size_t rows = g.rows(), cols = g.cols();
        if (tp.requires_grad(gain) || tp.requires_grad(bias)) {
            Tensor2& gg = tp.grad(gain);
            Tensor2& gb = tp.grad(bias);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) {
                    gg(0, j) += g(i, j) * xhat(i, j);
                    gb(0, j) += g(i, j);
                }
        }
        if (tp.requires_grad(x)) {
            Tensor2& gx = tp.grad(x);
            const double c = static_cast<double>(cols);
            std::vector<double> dxhat(cols);
            for (std::size_t i = 0; i < rows; ++i) {
                double mean_d = 0.0, mean_dx = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    dxhat[j] = g(i, j) * gv(0, j);
                    mean_d += dxhat[j];
                    mean_dx += dxhat[j] * xhat(i, j);
                }
                mean_d /= c;
                mean_dx /= c;
                for (std::size_t j = 0; j < cols; ++j)
                    gx(i, j) += inv_std[i] * (dxhat[j] - mean_d - xhat(i, j) * mean_dx);
            }
        }
    });
}

Var spmm(Tape& t, const SparseMatrix& a, Var x) {
    Tensor2 out = eagps::spmm(a, t.value(x));
    Var o{t.size()};
    return t.record(std::move(out), {x}, [&a, x, o](Tape& tp) {
        tp.grad(x) += eagps::spmm_transposed(a, tp.grad(o));
    });
}

Var gather_rows(Tape& t, Var x, std::vector<std::size_t> index) {
    Tensor2 out = eagps::gather_rows(t.value(x), index);
    Var o{t.size()};
    return t.record(std::move(out), {x}, [x, o, index = std::move(index)](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        Tensor2& gx = tp.grad(x);
        for (std::size_t i = 0; i < index.size(); ++i)
            K().axpy(1.0, g.row(i).data(), gx.row(index[i]).data(), g.cols());
    });
}

Var scatter_add_rows(Tape& t, Var x, std::vector<std::size_t> index, std::size_t rows) {
    const Tensor2& xv = t.value(x);
    if (index.size() != xv.rows()) throw DimensionError("scatter_add_rows: index length mismatch");
    Tensor2 out(rows, xv.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= rows) throw RangeError("scatter_add_rows: index out of range");
        K().axpy(1.0, xv.row(i).data(), out.row(index[i]).data(), xv.cols());
    }
    Var o{t.size()};
    return t.record(std::move(out), {x}, [x, o, index = std::move(index)](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        Tensor2& gx = tp.grad(x);
        for (std::size_t i = 0; i < index.size(); ++i)
            K().axpy(1.0, g.row(index[i]).data(), gx.row(i).data(), g.cols());
    });
}

Var slice_cols(Tape& t, Var x, std::size_t c0, std::size_t c1) {
    Tensor2 out = eagps::slice_cols(t.value(x), c0, c1);
    Var o{t.size()};
    return t.record(std::move(out), {x}, [x, o, c0](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        Tensor2& gx = tp.grad(x);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gx(i, c0 + j) += g(i, j);
    });
}

Var slice_rows(Tape& t, Var x, std::size_t r0, std::size_t r1) {
    Tensor2 out = eagps::slice_rows(t.value(x), r0, r1);
    Var o{t.size()};
    return t.record(std::move(out), {x}, [x, o, r0](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        Tensor2& gx = tp.grad(x);
        K().axpy(1.0, g.data(), gx.row(r0).data(), g.size());
    });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
    std::vector<Tensor2> vals;
    vals.reserve(parts.size());
    for (Var p : parts) vals.push_back(t.value(p));
    Tensor2 out = eagps::concat_cols(vals);
    Var o{t.size()};
    std::vector<Var> ins(parts.begin(), parts.end());
    return t.record(std::move(out), parts, [o, ins](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        std::size_t off = 0;
        for (Var p : ins) {
            const std::size_t w = tp.value(p).cols();
            if (tp.requires_grad(p)) {
                Tensor2& gp = tp.grad(p);
                for (std::size_t i = 0; i < g.rows(); ++i)
                    K().axpy(1.0, g.row(i).data() + off, gp.row(i).data(), w);
            }
            off += w;
        }
    });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
    std::vector<Tensor2> vals;
    vals.reserve(parts.size());
    for (Var p : parts) vals.push_back(t.value(p));
    Tensor2 out = eagps::concat_rows(vals);
    Var o{t.size()};
    std::vector<Var> ins(parts.begin(), parts.end());
    return t.record(std::move(out), parts, [o, ins](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        std::size_t off = 0;
        for (Var p : ins) {
            const std::size_t n = tp.value(p).size();
            if (tp.requires_grad(p)) K().axpy(1.0, g.data() + off, tp.grad(p).data(), n);
            off += n;
        }
    });
}

Var mean_of(Tape& t, std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("mean_of: no inputs");
    const double w = 1.0 / static_cast<double>(parts.size());
    Tensor2 out(t.value(parts[0]).rows(), t.value(parts[0]).cols());
    for (Var p : parts) {
        if (!t.value(p).same_shape(out)) throw DimensionError("mean_of: shapes differ");
        K().axpy(w, t.value(p).data(), out.data(), out.size());
    }
    Var o{t.size()};
    std::vector<Var> ins(parts.begin(), parts.end());
    return t.record(std::move(out), parts, [o, ins, w](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        for (Var p : ins)
            if (tp.requires_grad(p)) K().axpy(w, g.data(), tp.grad(p).data(), g.size());
    });
}

Var replace_rows(Tape& t, Var x, std::vector<std::uint8_t> flags, Var token) {
    const Tensor2& xv = t.value(x);
    const Tensor2& tv = t.value(token);
    if (flags.size() != xv.rows() || tv.rows() != 1 || tv.cols() != xv.cols())
        throw DimensionError("replace_rows: shape mismatch");
    Tensor2 out = xv;
    for (std::size_t i = 0; i < flags.size(); ++i)
        if (flags[i]) std::copy(tv.row(0).begin(), tv.row(0).end(), out.row(i).begin());
    Var o{t.size()};
    return t.record(std::move(out), {x, token}, [x, token, o, flags = std::move(flags)](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        for (std::size_t i = 0; i < flags.size(); ++i) {
            if (flags[i]) {
                if (tp.requires_grad(token)) K().axpy(1.0, g.row(i).data(), tp.grad(token).data(), g.cols());
            } else if (tp.requires_grad(x)) {
                K().axpy(1.0, g.row(i).data(), tp.grad(x).row(i).data(), g.cols());
            }
        }
    });
}

Var max_pool_rows(Tape& t, Var x) {
    const Tensor2& xv = t.value(x);
    if (xv.rows() == 0) throw DimensionError("max_pool_rows: empty input");
    Tensor2 out(1, xv.cols());
    std::vector<std::size_t> arg(xv.cols(), 0);
    for (std::size_t j = 0; j < xv.cols(); ++j) {
        out(0, j) = xv(0, j);
        for (std::size_t i = 1; i < xv.rows(); ++i)
            if (xv(i, j) > out(0, j)) {
                out(0, j) = xv(i, j);
                arg[j] = i;
            }
    }
    Var o{t.size()};
    return t.record(std::move(out), {x}, [x, o, arg = std::move(arg)](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        Tensor2& gx = tp.grad(x);
        for (std::size_t j = 0; j < arg.size(); ++j) gx(arg[j], j) += g(0, j);
    });
}

Var mean_pool_rows(Tape& t, Var x) {
    const Tensor2& xv = t.value(x);
    if (xv.rows() == 0) throw DimensionError("mean_pool_rows: empty input");
    const double w = 1.0 / static_cast<double>(xv.rows());
    Tensor2 out(1, xv.cols());
    for (std::size_t i = 0; i < xv.rows(); ++i) K().axpy(w, xv.row(i).data(), out.data(), xv.cols());
    Var o{t.size()};
    return t.record(std::move(out), {x}, [x, o, w](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        Tensor2& gx = tp.grad(x);
        for (std::size_t i = 0; i < gx.rows(); ++i) K().axpy(w, g.data(), gx.row(i).data(), g.cols());
    });
}

Var soft_attention(Tape& t, Var x, bool standard_softmax) {
    const Tensor2& xv = t.value(x);
    const std::size_t n = xv.rows(), d = xv.cols();
    if (n == 0) throw DimensionError("soft_attention: empty template");
    const std::size_t last = n - 1;

    std::vector<double> norm(n), f(n), e(n), a(n);
    for (std::size_t i = 0; i < n; ++i) norm[i] = std::sqrt(K().dot(xv.row(i).data(), xv.row(i).data(), d));
    const double* q = xv.row(last).data();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double denom = norm[i] * norm[last];
        f[i] = denom > 0.0 ? K().dot(xv.row(i).data(), q, d) / denom : 0.0;
        e[i] = std::exp(f[i]);
        sum += e[i];
    }
    const double scale_w = standard_softmax ? 1.0 / sum : 1.0 / std::sqrt(sum);
    Tensor2 out(1, d);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = e[i] * scale_w;
        K().axpy(a[i], xv.row(i).data(), out.data(), d);
    }

    Var o{t.size()};
    return t.record(std::move(out), {x},
                    [x, o, standard_softmax, norm, f, e, a, sum, last, d](Tape& tp) {
        const Tensor2& g = tp.grad(o);
        const Tensor2& xv = tp.value(x);
        Tensor2& gx = tp.grad(x);
        const std::size_t n = xv.rows();
        std::vector<double> c(n), df(n);
        double ce = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            K().axpy(a[i], g.data(), gx.row(i).data(), d);  // direct path through the weighted sum
            c[i] = K().dot(g.data(), xv.row(i).data(), d);
            ce += c[i] * e[i];
        }
        if (standard_softmax) {
            double ca = 0.0;
            for (std::size_t i = 0; i < n; ++i) ca += c[i] * a[i];
            for (std::size_t j = 0; j < n; ++j) df[j] = a[j] * (c[j] - ca);
        } else {
            // a_i = e_i * S^{-1/2}
            const double s = 1.0 / std::sqrt(sum);
            for (std::size_t j = 0; j < n; ++j) df[j] = e[j] * s * c[j] - 0.5 * e[j] * s * s * s * ce;
        }
        // f_last is identically 1 (or 0 for a zero query), so only i != last contribute
        const double nq = norm[last];
        if (nq == 0.0) return;
        const double* q = xv.row(last).data();
        for (std::size_t i = 0; i < n; ++i) {
            if (i == last || norm[i] == 0.0 || df[i] == 0.0) continue;
            const double inv = 1.0 / (norm[i] * nq);
            const double* xi = xv.row(i).data();
            double* gxi = gx.row(i).data();
            double* gq = gx.row(last).data();
            for (std::size_t k = 0; k < d; ++k) {
                gxi[k] += df[i] * (q[k] * inv - f[i] * xi[k] / (norm[i] * norm[i]));
                gq[k] += df[i] * (xi[k] * inv - f[i] * q[k] / (nq * nq));
            }
        }
    });
}

Var cross_entropy(Tape& t, Var logits, std::vector<std::size_t> targets, double eps) {
    const Tensor2& lv = t.value(logits);
    if (targets.size() != lv.rows()) throw DimensionError("cross_entropy: target count mismatch");
    Tensor2 probs = eagps::softmax_rows(lv);
    double total = 0.0;
    for (std::size_t b = 0; b < targets.size(); ++b) {
        if (targets[b] >= lv.cols()) throw RangeError("cross_entropy: target out of range");
        total -= std::log(probs(b, targets[b]) + eps);
    }
    const double inv_b = 1.0 / static_cast<double>(targets.size());
    Tensor2 out(1, 1, total * inv_b);
    Var o{t.size()};
    return t.record(std::move(out), {logits},
                    [logits, o, probs = std::move(probs), targets = std::move(targets), eps, inv_b](Tape& tp) {
        const double g = tp.grad(o)(0, 0);
        Tensor2& gl = tp.grad(logits);
        for (std::size_t b = 0; b < targets.size(); ++b) {
            const double pt = probs(b, targets[b]);
            // d/dz_j [-log(p_t + eps)] = -(p_t / (p_t + eps)) * (delta_tj - p_j)
            const double coef = g * inv_b * pt / (pt + eps);
            for (std::size_t j = 0; j < probs.cols(); ++j)
                gl(b, j) += coef * (probs(b, j) - (j == targets[b] ? 1.0 : 0.0));
        }
    });
}

Var sum_squares(Tape& t, Var x) {
    Tensor2 out(1, 1, t.value(x).squared_norm());
    Var o{t.size()};
    return t.record(std::move(out), {x}, [x, o](Tape& tp) {
        K().axpy(2.0 * tp.grad(o)(0, 0), tp.value(x).data(), tp.grad(x).data(), tp.value(x).size());
    });
}

}  // namespace eagps::ad
