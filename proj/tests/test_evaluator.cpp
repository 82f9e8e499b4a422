#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "eagps/errors.hpp"
#include "eagps/evaluator.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace eagps;

namespace {

// Rank by sorting (score desc, index asc) and locating the target.
std::size_t sorted_rank(const std::vector<double>& s, std::size_t target) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); });
    return static_cast<std::size_t>(std::find(idx.begin(), idx.end(), target) - idx.begin()) + 1;
}

std::vector<SequenceRecord> random_sequences(std::size_t count, std::size_t m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> item(0, m - 1), len(2, 8);
    std::vector<SequenceRecord> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<std::size_t> items(len(rng));
        for (auto& v : items) v = item(rng);
        out.push_back(make_sequence(i % 7, items));
    }
    return out;
}

HyperConfig config_for(Variant v, std::size_t d, std::size_t alpha, std::size_t beta, std::size_t d1) {
    HyperConfig c;
    c.variant = v;
    c.d = d;
    c.alpha = alpha;
    c.beta = beta;
    c.d1 = d1;
    return c;
}

}  // namespace

TEST_CASE("rank, recall and mrr basics") {
    const std::vector<double> s{0.1, 0.9, 0.5, 0.5, 0.3, 0.2, 0.05, 0.0, -1, -2, -3, -4};
    CHECK(rank_of(s, 1) == 1);
    CHECK(rank_of(s, 2) == 2);
    CHECK(rank_of(s, 3) == 3);  // tie broken by index
    CHECK(recall_at_n(s, 1, 1) == 1.0);
    CHECK(mrr_at_n(s, 3, 5) == doctest::Approx(1.0 / 3.0));
    CHECK(mrr_at_n(s, 6, 5) == 0.0);  // rank 7
    CHECK(rank_of(s, 11) == 12);
    CHECK(recall_at_n(s, 9, 10) == 1.0);
    CHECK(recall_at_n(s, 10, 10) == 0.0);  // rank 11
    CHECK_THROWS_AS(rank_of(s, 12), RangeError);
}

TEST_CASE("metrics agree with a full-sort oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> coarse(0, 9);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = trial % 10 == 0 ? 20 : 100;
        std::vector<double> s(m);
        // every third vector is coarse so ties actually occur
        for (auto& v : s) v = trial % 3 == 0 ? coarse(rng) : u(rng);
        const std::size_t target = rng() % m;
        const std::size_t r = sorted_rank(s, target);
        REQUIRE(rank_of(s, target) == r);
        for (std::size_t n : {1, 5, 10, 20}) {
            CHECK(recall_at_n(s, target, n) == (r <= n ? 1.0 : 0.0));
            CHECK(mrr_at_n(s, target, n) == (r <= n ? 1.0 / static_cast<double>(r) : 0.0));
        }
    }
}

TEST_CASE("evaluate with synthetic scorers") {
    const std::size_t m = 100;
    const auto test = random_sequences(1000, m, 9);
    SUBCASE("oracle scores") {
        Scorer oracle = [&](std::span<const SequenceRecord> prefixes) {
            Tensor2 out(prefixes.size(), m);
            for (std::size_t b = 0; b < prefixes.size(); ++b) {
                // prefixes keep their order, so find the sequence they came from
                const auto& p = prefixes[b];
                for (const auto& s : test)
                    if (s.items.size() == p.items.size() + 1 && std::equal(p.items.begin(), p.items.end(), s.items.begin()) &&
                        s.user_index == p.user_index) {
                        out(b, s.items.back()) = 1.0;
                        break;
                    }
            }
            return out;
        };
        const std::vector<SequenceRecord> few(test.begin(), test.begin() + 50);
        const MetricsReport r = evaluate(oracle, few);
        CHECK(r.n_evaluated == 50);
        CHECK(r.recall_at.at(5) == 1.0);
        CHECK(r.mrr_at.at(10) == 1.0);
    }
    SUBCASE("uniform random scores") {
        Scorer random = [&](std::span<const SequenceRecord> prefixes) {
            // seeded by the first prefix so chunks are independent of scheduling
            return testing::random_tensor(prefixes.size(), m, prefixes.front().items.front() * 131 + prefixes.size());
        };
        EvalOptions opt;
        opt.chunk = 1;
        const MetricsReport r = evaluate(random, test, opt);
        CHECK(r.n_evaluated == 1000);
        CHECK(std::abs(r.recall_at.at(10) - 0.10) <= 0.03);
        for (std::size_t n : opt.ns) {
            CHECK(r.mrr_at.at(n) <= r.recall_at.at(n));
            CHECK(r.mrr_at.at(n) >= 0.0);
        }
    }
    SUBCASE("empty test set is rejected") {
        Scorer any = [&](std::span<const SequenceRecord> p) { return Tensor2(p.size(), m); };
        CHECK_THROWS_AS(evaluate(any, std::span<const SequenceRecord>{}), DataError);
    }
}

TEST_CASE("closed-form parameter count matches enumeration") {
    const std::size_t grid[][7] = {
        // d, alpha, beta, d1, m, n, max_len
        {8, 4, 2, 0, 20, 5, 6},      {16, 16, 2, 16, 100, 10, 50}, {16, 8, 4, 0, 30, 7, 9},  {12, 3, 3, 5, 11, 2, 4},
        {4, 1, 1, 0, 3, 1, 2},       {6, 6, 2, 3, 17, 9, 12},      {32, 16, 8, 8, 50, 20, 5}, {10, 2, 5, 10, 9, 4, 8},
        {8, 8, 8, 0, 40, 3, 3},      {20, 5, 4, 7, 25, 25, 25},    {2, 2, 1, 1, 5, 5, 1},     {14, 7, 7, 0, 13, 6, 10},
        {24, 12, 3, 12, 60, 8, 15},  {9, 4, 3, 2, 7, 7, 7},        {18, 9, 6, 0, 19, 2, 30},  {16, 4, 16, 4, 8, 8, 8},
        {30, 10, 5, 30, 21, 11, 6},  {5, 5, 5, 0, 6, 4, 3},        {64, 16, 2, 0, 200, 50, 10}, {12, 24, 6, 6, 14, 3, 20},
    };
    for (Variant v : all_variants)
        for (const auto& g : grid) {
            const HyperConfig cfg = config_for(v, g[0], g[1], g[2], g[3]);
            CAPTURE(to_string(v));
            CAPTURE(cfg.to_text());
            const std::uint64_t enumerated = init_params(cfg, ModelShape{g[4], g[5], g[6]}).scalar_count();
            CHECK(param_count(cfg, g[4], g[5], g[6]) == enumerated);
        }
}

TEST_CASE("parameter count worked examples") {
    const HyperConfig full = config_for(Variant::ea_gps, 16, 16, 2, 16);
    CHECK(param_count(full, 100, 10, 50) == 7476);
    CHECK(param_count(config_for(Variant::gps_oea, 16, 16, 2, 16), 100, 10, 50) == 7476 - 512 - 256);

    // per-term polynomial in d with d1 = d: the delta from d to 2d
    const std::uint64_t m = 200, n = 50, l = 10, a = 16, d = 16;
    HyperConfig c = config_for(Variant::ea_gps, d, a, 2, 0);
    HyperConfig c2 = config_for(Variant::ea_gps, 2 * d, a, 2, 0);
    const std::uint64_t linear_coef = (m + n) + 2 + 2 * m + 2 * a + l + 1 + 1 + 1;
    const std::uint64_t quad_coef = 1 + 1 + 2;
    const std::uint64_t delta = linear_coef * d + quad_coef * 3 * d * d;
    CHECK(param_count(c2, m, n, l) - param_count(c, m, n, l) == delta);
}

TEST_CASE("evaluation is independent of the thread count") {
    FilterOptions f;
    f.min_item_freq = 1;
    const SequenceSet data = split_train_test(build_sequences(synth_dataset(30, 25, 6, 0.1, 4), f), 0.5, 5);
    HyperConfig cfg;
    cfg.d = 8;
    cfg.alpha = 4;
    cfg.lr = 0.01;
    cfg.batch_size = 16;
    Model model = make_model(cfg, data);
    train(model, make_training_examples(data.train, cfg.loss_mode), 3);
    EvalOptions one, many;
    one.threads = 1;
    one.chunk = 3;
    many.threads = 4;
    many.chunk = 3;
    const MetricsReport a = evaluate(model, data.test, one);
    const MetricsReport b = evaluate(model, data.test, many);
    CHECK(a.recall_at == b.recall_at);
    CHECK(a.mrr_at == b.mrr_at);
    CHECK(a.n_evaluated == data.test.size());

    const MetricsReport c = evaluate(model, data.test, many);
    CHECK(b.recall_at == c.recall_at);
}

TEST_CASE("benchmark records") {
    FilterOptions f;
    f.min_item_freq = 1;
    const SequenceSet data = split_train_test(build_sequences(synth_dataset(20, 30, 8, 0.0, 2), f), 0.8, 5);
    HyperConfig cfg;
    cfg.d = 8;
    cfg.alpha = 4;
    cfg.batch_size = 8;
    cfg.loss_mode = LossMode::all_prefixes;
    BenchOptions opt;
    opt.ratios = {0.5, 1.0};
    opt.epochs = 1;
    opt.repeats = 2;
    const auto recs = benchmark(cfg, data, opt);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].param_count == recs[1].param_count);
    CHECK(recs[0].param_count == param_count(cfg, data.m_items, data.n_users, data.max_length()));
    CHECK(recs[0].runs.size() == 2);
    CHECK(recs[1].sequences == data.train.size());
    CHECK(recs[0].sequences == (data.train.size() + 1) / 2);
    CHECK(recs[0].flops.size() == 3);
    // EA work is linear in the items processed: 4 * alpha * d per item
    for (const auto& r : recs) {
        std::uint64_t items = 0;
        const std::vector<SequenceRecord> part(data.train.begin(), data.train.begin() + r.sequences);
        for (const auto& ex : make_training_examples(part, cfg.loss_mode)) items += ex.prefix.length();
        CHECK(r.ea_flops_total == items * 4 * cfg.alpha * cfg.d * opt.epochs);
    }

    std::ostringstream js, csv;
    write_bench_jsonl(recs, js);
    write_bench_csv(recs, csv);
    std::istringstream lines(js.str());
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("param_count").get<std::uint64_t>() == recs[0].param_count);
        ++count;
    }
    CHECK(count == 2);
    const std::string text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

TEST_CASE("metric writers") {
    MetricsReport r;
    r.recall_at = {{5, 0.5}, {10, 0.75}};
    r.mrr_at = {{5, 0.25}, {10, 0.3}};
    r.n_evaluated = 4;
    std::ostringstream js, csv;
    write_metrics_jsonl(r, js, "EA-GPS");
    write_metrics_csv(r, csv, true, "EA-GPS");
    std::istringstream lines(js.str());
    std::string line;
    std::map<std::string, double> seen;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        seen[j.at("metric").get<std::string>() + std::to_string(j.at("n").get<int>())] = j.at("value").get<double>();
        CHECK(j.at("label") == "EA-GPS");
    }
    CHECK(seen.at("recall10") == 0.75);
    CHECK(seen.at("mrr5") == 0.25);
    CHECK(csv.str().rfind("label,metric,n,value,n_evaluated\n", 0) == 0);
    CHECK(csv.str().find("EA-GPS,recall,5,0.5,4") != std::string::npos);
}
