#include "eagps/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "json.hpp"

#include "eagps/errors.hpp"

namespace eagps {

std::size_t rank_of(std::span<const double> scores, std::size_t target) {
    if (target >= scores.size()) throw RangeError("target item out of range");
    const double s = scores[target];
    std::size_t rank = 1;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] > s || (scores[i] == s && i < target)) ++rank;
    return rank;
}

double recall_at_n(std::span<const double> scores, std::size_t target, std::size_t n) {
    if (n == 0) throw RangeError("N must be >= 1");
    return rank_of(scores, target) <= n ? 1.0 : 0.0;
}

double mrr_at_n(std::span<const double> scores, std::size_t target, std::size_t n) {
    if (n == 0) throw RangeError("N must be >= 1");
    const std::size_t r = rank_of(scores, target);
    return r <= n ? 1.0 / static_cast<double>(r) : 0.0;
}

std::size_t worker_count() {
    if (const char* env = std::getenv("EAGPS_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

MetricsReport evaluate(const Scorer& scorer, std::span<const SequenceRecord> test, const EvalOptions& opt) {
    if (test.empty()) throw DataError("no test sequences");
    if (opt.ns.empty()) throw ConfigError("no cut-offs requested");
    for (std::size_t n : opt.ns)
        if (n == 0) throw RangeError("N must be >= 1");
    const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
    const std::size_t chunks = (test.size() + chunk - 1) / chunk;

    const std::vector<SequenceRecord> prefixes = prefixes_of(test);
    // ranks[i] of test sequence i; filled independently per chunk.
    std::vector<std::size_t> ranks(test.size());
    auto run_chunk = [&](std::size_t c) {
        const std::size_t lo = c * chunk, hi = std::min(test.size(), lo + chunk);
        const Tensor2 s = scorer(std::span(prefixes).subspan(lo, hi - lo));
        if (s.rows() != hi - lo) throw DimensionError("scorer returned " + s.shape_string());
        for (std::size_t i = lo; i < hi; ++i) ranks[i] = rank_of(s.row(i - lo), test[i].items.back());
    };

    const std::size_t threads = std::min(chunks, opt.threads ? opt.threads : worker_count());
    if (threads <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t c = w; c < chunks; c += threads) run_chunk(c);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    MetricsReport r;
    r.n_evaluated = test.size();
    for (std::size_t n : opt.ns) {
        double hits = 0.0, rr = 0.0;
        for (std::size_t rank : ranks) {
            if (rank <= n) {
                hits += 1.0;
                rr += 1.0 / static_cast<double>(rank);
            }
        }
        r.recall_at[n] = hits / static_cast<double>(test.size());
        r.mrr_at[n] = rr / static_cast<double>(test.size());
    }
    return r;
}

MetricsReport evaluate(Model& model, std::span<const SequenceRecord> test, const EvalOptions& opt) {
    return evaluate([&model](std::span<const SequenceRecord> p) { return model.scores(p); }, test, opt);
}

std::uint64_t param_count(const HyperConfig& cfg, std::size_t m, std::size_t n, std::size_t max_len) {
    cfg.validate();
    const std::uint64_t d = cfg.d, d1 = cfg.prompt_width(), a = cfg.alpha, M = m, N = n, L = max_len;
    const VariantWiring w = build_variant(cfg.variant);

    std::uint64_t total = (M + N) * d + 2 * d + 2 * d * M + M;
    if (w.weighting == GlobalWeighting::external) total += 2 * a * d + d * d;
    switch (w.decoder) {
        case DecoderKind::prompt:
        case DecoderKind::relative_prompt: total += L * d1 + d1 * d + d + 2 * d * d + d + d; break;
        case DecoderKind::additive: total += L * d1 + d1 * d + d; break;
        case DecoderKind::max_pool: break;
    }
    return total;
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

}  // namespace

std::vector<BenchRecord> benchmark(const HyperConfig& cfg, const SequenceSet& data, const BenchOptions& opt) {
    if (data.train.empty()) throw DataError("no training sequences");
    if (opt.repeats == 0 || opt.epochs == 0) throw ConfigError("benchmark needs epochs >= 1 and repeats >= 1");
    const std::size_t max_len = cfg.max_len ? cfg.max_len : data.max_length();

    std::vector<BenchRecord> out;
    for (double ratio : opt.ratios) {
        if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratios must lie in (0, 1]");
        const auto count = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(data.train.size()) - 1e-9)));
        const std::span<const SequenceRecord> part(data.train.data(), count);
        const std::vector<Example> examples = make_training_examples(part, cfg.loss_mode);

        BenchRecord rec;
        rec.data_ratio = ratio;
        rec.sequences = count;
        rec.examples = examples.size();
        rec.param_count = param_count(cfg, data.m_items, data.n_users, max_len);

        std::size_t items = 0;
        for (const auto& s : part) items += s.length();
        const auto mean_len = static_cast<std::uint64_t>(std::llround(static_cast<double>(items) / count));
        for (Mechanism mech : {Mechanism::self, Mechanism::linear, Mechanism::external})
            rec.flops.push_back(flop_count(mech, mean_len, cfg.d, cfg.alpha));
        for (const auto& e : examples)
            rec.ea_flops_total += flop_count(Mechanism::external, e.prefix.length(), cfg.d, cfg.alpha).multiply_adds;
        rec.ea_flops_total *= opt.epochs;

        for (std::size_t r = 0; r < opt.repeats; ++r) {
            Model model(cfg, ModelShape{data.m_items, data.n_users, max_len},
                        build_graph(part, data.m_items, data.n_users));
            const auto t0 = std::chrono::steady_clock::now();
            train(model, examples, opt.epochs);
            const auto t1 = std::chrono::steady_clock::now();
            rec.runs.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
        rec.wall_seconds = median(rec.runs);
        out.push_back(std::move(rec));
    }
    return out;
}

void write_metrics_jsonl(const MetricsReport& r, std::ostream& out, const std::string& label) {
    auto emit = [&](const char* metric, const std::map<std::size_t, double>& values) {
        for (const auto& [n, v] : values) {
            nlohmann::json j{{"metric", metric}, {"n", n}, {"value", v}, {"n_evaluated", r.n_evaluated}};
            if (!label.empty()) j["label"] = label;
            out << j.dump() << '\n';
        }
    };
    emit("recall", r.recall_at);
    emit("mrr", r.mrr_at);
}

void write_metrics_csv(const MetricsReport& r, std::ostream& out, bool header, const std::string& label) {
    if (header) out << "label,metric,n,value,n_evaluated\n";
    auto emit = [&](const char* metric, const std::map<std::size_t, double>& values) {
        for (const auto& [n, v] : values)
            out << label << ',' << metric << ',' << n << ',' << nlohmann::json(v).dump() << ',' << r.n_evaluated << '\n';
    };
    emit("recall", r.recall_at);
    emit("mrr", r.mrr_at);
}

void write_bench_jsonl(std::span<const BenchRecord> records, std::ostream& out) {
    for (const auto& r : records) {
        nlohmann::json flops = nlohmann::json::array();
        for (const auto& f : r.flops)
            flops.push_back({{"mechanism", std::string(to_string(f.mechanism))}, {"multiply_adds", f.multiply_adds}});
        nlohmann::json j{{"data_ratio", r.data_ratio},         {"wall_seconds", r.wall_seconds},
                         {"runs", r.runs},                     {"param_count", r.param_count},
                         {"flops", flops},                     {"ea_flops_total", r.ea_flops_total},
                         {"sequences", r.sequences},           {"examples", r.examples},
                         {"threads", r.threads}};
        out << j.dump() << '\n';
    }
}

void write_bench_csv(std::span<const BenchRecord> records, std::ostream& out) {
    out << "data_ratio,wall_seconds,param_count,sa_flops,la_flops,ea_flops,ea_flops_total,sequences,examples,threads\n";
    for (const auto& r : records) {
        out << nlohmann::json(r.data_ratio).dump() << ',' << nlohmann::json(r.wall_seconds).dump() << ','
            << r.param_count;
        for (const auto& f : r.flops) out << ',' << f.multiply_adds;
        out << ',' << r.ea_flops_total << ',' << r.sequences << ',' << r.examples << ',' << r.threads << '\n';
    }
}

}  // namespace eagps
