#include "eagps/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "eagps/errors.hpp"

namespace eagps {

std::size_t Vocabulary::intern(const std::string& id) {
    auto [it, inserted] = index_.try_emplace(id, ids_.size());
    if (inserted) ids_.push_back(id);
    return it->second;
}

std::size_t Vocabulary::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw RangeError("unknown id: " + id);
    return it->second;
}

std::size_t SequenceSet::max_length() const {
    std::size_t mx = 0;
    for (const auto& s : all) mx = std::max(mx, s.length());
    return mx;
}

std::size_t SequenceSet::interaction_count() const {
    std::size_t n = 0;
    for (const auto& s : all) n += s.length();
    return n;
}

SequenceRecord make_sequence(std::size_t user, std::vector<std::size_t> items) {
    SequenceRecord rec;
    rec.user_index = user;
    rec.positions.resize(items.size());
    std::iota(rec.positions.begin(), rec.positions.end(), std::size_t{1});
    rec.items = std::move(items);
    return rec;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

}  // namespace

InteractionLog parse_interactions(std::istream& in) {
    InteractionLog log;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view view = strip_cr(line);
        if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
        const auto fields = split(view, '\t');
        if (fields.size() != 3) throw ParseError(lineno, "expected 3 tab-separated fields, got " +
                                                             std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty()) throw ParseError(lineno, "empty user or item id");
        std::int64_t ts = 0;
        if (!parse_int(fields[2], ts)) throw ParseError(lineno, "timestamp is not an integer");
        if (ts < 0) throw ParseError(lineno, "negative timestamp");
        log.records.push_back({std::string(fields[0]), std::string(fields[1]), ts});
    }
    if (log.records.empty()) throw DataError("interaction log is empty");
    return log;
}

namespace {

struct Event {
    std::int64_t ts;
    std::size_t item;  // index into the raw item table
    bool alive = true;
};

// Fragment boundaries over the alive events of one user, as index lists.
std::vector<std::vector<std::size_t>> segment(const std::vector<Event>& events, std::int64_t window) {
    std::vector<std::vector<std::size_t>> frags;
    std::int64_t start = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (!events[i].alive) continue;
        if (frags.empty() || events[i].ts - start > window) {
            frags.emplace_back();
            start = events[i].ts;
        }
        frags.back().push_back(i);
    }
    return frags;
}

}  // namespace

SequenceSet build_sequences(const InteractionLog& log, const FilterOptions& opt) {
    if (log.records.empty()) throw DataError("interaction log is empty");
    if (opt.min_seq_len == 0) throw ConfigError("min_seq_len must be >= 1");

    Vocabulary raw_users, raw_items;
    std::vector<std::vector<Event>> per_user;
    for (const auto& r : log.records) {
        const std::size_t u = raw_users.intern(r.user);
        const std::size_t it = raw_items.intern(r.item);
        if (u == per_user.size()) per_user.emplace_back();
        per_user[u].push_back({r.timestamp, it});
    }
    for (auto& events : per_user)
        std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.ts < b.ts; });

    std::vector<std::size_t> freq(raw_items.size());
    bool changed = true;
    while (changed) {
        changed = false;
        std::fill(freq.begin(), freq.end(), 0);
        for (const auto& events : per_user)
            for (const auto& e : events)
                if (e.alive) ++freq[e.item];
        for (auto& events : per_user)
            for (auto& e : events)
                if (e.alive && freq[e.item] < opt.min_item_freq) {
                    e.alive = false;
                    changed = true;
                }
        for (auto& events : per_user)
            for (const auto& frag : segment(events, opt.window_seconds))
                if (frag.size() < opt.min_seq_len) {
                    for (std::size_t i : frag) events[i].alive = false;
                    changed = true;
                }
    }

    SequenceSet out;
    for (std::size_t u = 0; u < per_user.size(); ++u) {
        for (const auto& frag : segment(per_user[u], opt.window_seconds)) {
            const std::size_t user = out.user_vocab.intern(raw_users.id_of(u));
            std::vector<std::size_t> items;
            std::vector<std::int64_t> stamps;
            for (std::size_t i : frag) {
                items.push_back(out.item_vocab.intern(raw_items.id_of(per_user[u][i].item)));
                stamps.push_back(per_user[u][i].ts);
            }
            auto rec = make_sequence(user, std::move(items));
            rec.timestamps = std::move(stamps);
            out.all.push_back(std::move(rec));
        }
    }
    if (out.all.empty()) throw DataError("all interactions were filtered out");
    out.n_users = out.user_vocab.size();
    out.m_items = out.item_vocab.size();
    return out;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
    }
    return perm;
}

SequenceSet split_train_test(SequenceSet seqs, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
    const std::size_t total = seqs.all.size();
    if (total < 2) throw DataError("need at least two sequences to split");

    auto perm = seeded_permutation(total, seed);
    // the epsilon keeps e.g. 0.8 * 10 from rounding up to 9
    const auto n_train = std::min(total, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(total) - 1e-9)));
    seqs.train_ids.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    seqs.test_ids.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(seqs.train_ids.begin(), seqs.train_ids.end());
    std::sort(seqs.test_ids.begin(), seqs.test_ids.end());
    seqs.train.clear();
    seqs.test.clear();
    for (std::size_t id : seqs.train_ids) seqs.train.push_back(seqs.all[id]);
    for (std::size_t id : seqs.test_ids) seqs.test.push_back(seqs.all[id]);
    return seqs;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed) {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (count == 0) throw DataError("no training examples to batch");
    const auto perm = seeded_permutation(count, seed);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < count; i += batch_size)
        batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                             perm.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
    return batches;
}

InteractionLog synth_dataset(std::size_t n_users, std::size_t m_items, std::size_t seq_len, double noise,
                             std::uint64_t seed) {
    if (m_items < seq_len + 1) throw ConfigError("synth_dataset needs m_items >= seq_len + 1");
    if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("noise must lie in [0, 1]");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> any_item(0, m_items - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    constexpr std::int64_t t0 = 1'600'000'000;
    constexpr std::int64_t step = 3600;
    InteractionLog log;
    log.records.reserve(n_users * seq_len);
    for (std::size_t u = 0; u < n_users; ++u) {
        const std::size_t start = any_item(rng);
        for (std::size_t s = 0; s < seq_len; ++s) {
            std::size_t item = (start + s) % m_items;
            if (noise > 0.0 && coin(rng) < noise) item = any_item(rng);
            log.records.push_back({"u" + std::to_string(u), "i" + std::to_string(item),
                                   t0 + static_cast<std::int64_t>(s) * step});
        }
    }
    return log;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw IoError("cannot write " + p.string());
    return f;
}

std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw IoError("cannot read " + p.string());
    return f;
}

void write_vocab(const Vocabulary& v, const std::filesystem::path& p) {
    auto f = open_out(p);
    for (std::size_t i = 0; i < v.size(); ++i) f << i << '\t' << v.id_of(i) << '\n';
}

Vocabulary read_vocab(const std::filesystem::path& p) {
    auto f = open_in(p);
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto fields = split(strip_cr(line), '\t');
        std::size_t idx = 0;
        if (fields.size() != 2 || !parse_int(fields[0], idx) || fields[1].empty())
            throw ParseError(lineno, p.filename().string() + ": expected `index \\t id`");
        if (idx != v.size() || v.contains(std::string(fields[1])))
            throw ParseError(lineno, p.filename().string() + ": indices must be dense and ids unique");
        v.intern(std::string(fields[1]));
    }
    return v;
}

}  // namespace

void write_bundle(const SequenceSet& seqs, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto f = open_out(dir / "sequences.tsv");
        for (const auto& s : seqs.all) {
            f << s.user_index << '\t';
            for (std::size_t i = 0; i < s.items.size(); ++i) f << (i ? "," : "") << s.items[i];
            f << '\n';
        }
    }
    write_vocab(seqs.user_vocab, dir / "vocab_users.tsv");
    write_vocab(seqs.item_vocab, dir / "vocab_items.tsv");
    {
        std::vector<const char*> tag(seqs.all.size(), nullptr);
        for (std::size_t id : seqs.train_ids) tag.at(id) = "train";
        for (std::size_t id : seqs.test_ids) tag.at(id) = "test";
        auto f = open_out(dir / "split.tsv");
        for (std::size_t id = 0; id < tag.size(); ++id)
            if (tag[id]) f << id << '\t' << tag[id] << '\n';
    }
}

SequenceSet read_bundle(const std::filesystem::path& dir) {
    SequenceSet out;
    out.user_vocab = read_vocab(dir / "vocab_users.tsv");
    out.item_vocab = read_vocab(dir / "vocab_items.tsv");
    out.n_users = out.user_vocab.size();
    out.m_items = out.item_vocab.size();

    {
        auto f = open_in(dir / "sequences.tsv");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const auto fields = split(strip_cr(line), '\t');
            std::size_t user = 0;
            if (fields.size() != 2 || !parse_int(fields[0], user))
                throw ParseError(lineno, "sequences.tsv: expected `user_index \\t items`");
            if (user >= out.n_users) throw ParseError(lineno, "sequences.tsv: user index out of range");
            std::vector<std::size_t> items;
            for (auto tok : split(fields[1], ',')) {
                std::size_t it = 0;
                if (!parse_int(tok, it) || it >= out.m_items)
                    throw ParseError(lineno, "sequences.tsv: bad item index");
                items.push_back(it);
            }
            out.all.push_back(make_sequence(user, std::move(items)));
        }
    }
    if (out.all.empty()) throw DataError("bundle has no sequences");

    auto f = open_in(dir / "split.tsv");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto fields = split(strip_cr(line), '\t');
        std::size_t id = 0;
        if (fields.size() != 2 || !parse_int(fields[0], id) || id >= out.all.size())
            throw ParseError(lineno, "split.tsv: expected `sequence_id \\t train|test`");
        if (fields[1] == "train") {
            out.train_ids.push_back(id);
            out.train.push_back(out.all[id]);
        } else if (fields[1] == "test") {
            out.test_ids.push_back(id);
            out.test.push_back(out.all[id]);
        } else {
            throw ParseError(lineno, "split.tsv: tag must be train or test");
        }
    }
    return out;
}

}  // namespace eagps
