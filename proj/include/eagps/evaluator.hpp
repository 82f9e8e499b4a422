#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "eagps/attention.hpp"
#include "eagps/config.hpp"
#include "eagps/data.hpp"
#include "eagps/model.hpp"

namespace eagps {

// 1 + #(strictly higher scores) + #(equal scores at a smaller index).
std::size_t rank_of(std::span<const double> scores, std::size_t target);

double recall_at_n(std::span<const double> scores, std::size_t target, std::size_t n);
double mrr_at_n(std::span<const double> scores, std::size_t target, std::size_t n);

struct MetricsReport {
    std::map<std::size_t, double> recall_at;
    std::map<std::size_t, double> mrr_at;
    std::size_t n_evaluated = 0;
};

// Scores every item for each prefix; returns prefixes.size() x m.
using Scorer = std::function<Tensor2(std::span<const SequenceRecord>)>;

struct EvalOptions {
    std::vector<std::size_t> ns{5, 10};
    std::size_t chunk = 256;
    std::size_t threads = 0;  // 0: worker_count()
};

// EAGPS_THREADS if set, else the hardware concurrency (at least 1).
std::size_t worker_count();

// Feeds all but the last item of every test sequence and ranks the last one.
// Chunks are scored concurrently; results do not depend on the thread count.
MetricsReport evaluate(const Scorer& scorer, std::span<const SequenceRecord> test, const EvalOptions& opt = {});
MetricsReport evaluate(Model& model, std::span<const SequenceRecord> test, const EvalOptions& opt = {});

// Number of learnable scalars of the variant selected in cfg.
std::uint64_t param_count(const HyperConfig& cfg, std::size_t m, std::size_t n, std::size_t max_len);

struct BenchRecord {
    double data_ratio = 0.0;
    double wall_seconds = 0.0;  // median over repeats
    std::vector<double> runs;
    std::uint64_t param_count = 0;
    std::vector<FlopCount> flops;     // one per mechanism at the mean sequence length
    std::uint64_t ea_flops_total = 0;  // EA over every training prefix processed
    std::size_t sequences = 0;
    std::size_t examples = 0;
    std::size_t threads = 1;
};

struct BenchOptions {
    std::vector<double> ratios{0.2, 0.4, 0.6, 0.8, 1.0};
    std::size_t epochs = 3;
    std::size_t repeats = 3;
};

// For each ratio, trains a fresh model on the leading fraction of the train
// split for a fixed epoch budget. Single-threaded.
std::vector<BenchRecord> benchmark(const HyperConfig& cfg, const SequenceSet& data, const BenchOptions& opt = {});

// One JSON object per line: {"metric", "n", "value", "n_evaluated"} and
// {"data_ratio", "wall_seconds", ...}.
void write_metrics_jsonl(const MetricsReport& r, std::ostream& out, const std::string& label = {});
void write_metrics_csv(const MetricsReport& r, std::ostream& out, bool header = true, const std::string& label = {});
void write_bench_jsonl(std::span<const BenchRecord> records, std::ostream& out);
void write_bench_csv(std::span<const BenchRecord> records, std::ostream& out);

}  // namespace eagps
