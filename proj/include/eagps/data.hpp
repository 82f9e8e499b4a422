#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

namespace eagps {

struct Interaction {
    std::string user;
    std::string item;
    std::int64_t timestamp = 0;
};

struct InteractionLog {
    std::vector<Interaction> records;
};

// One time-ordered fragment of a user's history.
struct SequenceRecord {
    std::size_t user_index = 0;
    std::vector<std::size_t> items;
    std::vector<std::size_t> positions;  // always 1..t
    std::vector<std::int64_t> timestamps;  // empty when unknown (e.g. loaded bundles)

    std::size_t length() const noexcept { return items.size(); }
};

// Dense string <-> index map; indices are assigned in first-seen order.
class Vocabulary {
public:
    std::size_t intern(const std::string& id);
    std::size_t index_of(const std::string& id) const;
    bool contains(const std::string& id) const { return index_.contains(id); }
    const std::string& id_of(std::size_t index) const { return ids_.at(index); }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct SequenceSet {
    std::vector<SequenceRecord> all;  // pre-split order; sequence_id = position here
    std::vector<SequenceRecord> train;
    std::vector<SequenceRecord> test;
    std::vector<std::size_t> train_ids;  // sequence ids into `all`
    std::vector<std::size_t> test_ids;
    std::size_t n_users = 0;
    std::size_t m_items = 0;
    Vocabulary user_vocab;
    Vocabulary item_vocab;

    std::size_t max_length() const;
    std::size_t interaction_count() const;
};

// Builds positions 1..t for an item list.
SequenceRecord make_sequence(std::size_t user, std::vector<std::size_t> items);

// Tab-separated `user \t item \t timestamp` lines; blank lines are skipped.
InteractionLog parse_interactions(std::istream& in);

struct FilterOptions {
    std::size_t min_seq_len = 3;
    std::size_t min_item_freq = 5;
    std::int64_t window_seconds = 31536000;
};

// Sort per user by timestamp (stable), drop rare items, cut into fragments no
// longer than the window measured from each fragment's first event, drop short
// fragments, and repeat until nothing changes.
SequenceSet build_sequences(const InteractionLog& log, const FilterOptions& opt = {});

// Seeded uniform permutation; the first ceil(ratio * total) go to train.
SequenceSet split_train_test(SequenceSet seqs, double ratio, std::uint64_t seed);

// Deterministic Fisher-Yates over indices [0, n).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// Shuffled index batches over `count` examples; the last batch may be partial.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t seed);

// Users walk the cycle j -> (j+1) mod m from a random offset; each step is
// replaced by a uniform random item with probability `noise`.
InteractionLog synth_dataset(std::size_t n_users, std::size_t m_items, std::size_t seq_len,
                             double noise, std::uint64_t seed);

// On-disk bundle: sequences.tsv, vocab_users.tsv, vocab_items.tsv, split.tsv.
void write_bundle(const SequenceSet& seqs, const std::filesystem::path& dir);
SequenceSet read_bundle(const std::filesystem::path& dir);

}  // namespace eagps
