#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "eagps/checkpoint.hpp"
#include "eagps/errors.hpp"

using namespace eagps;

namespace {

SequenceSet small_data() {
    FilterOptions f;
    f.min_item_freq = 1;
    return split_train_test(build_sequences(synth_dataset(10, 15, 6, 0.1, 3), f), 0.8, 5);
}

HyperConfig small_config() {
    HyperConfig c;
    c.d = 8;
    c.alpha = 4;
    c.batch_size = 4;
    c.lr = 0.01;
    return c;
}

std::string bytes_of(const Model& m) {
    std::ostringstream out(std::ios::binary);
    write_checkpoint(m, out);
    return out.str();
}

}  // namespace

TEST_CASE("round trip restores values, moments and step") {
    const SequenceSet data = small_data();
    Model model = make_model(small_config(), data);
    train(model, make_training_examples(data.train, LossMode::last_item), 2);

    std::istringstream in(bytes_of(model), std::ios::binary);
    Checkpoint ck = read_checkpoint(in);
    CHECK(ck.epochs_done == 2);
    CHECK(ck.shape.m_items == data.m_items);
    CHECK(ck.config.max_len == data.max_length());
    CHECK(ck.params.step == model.params().step);
    for (const auto& name : model.params().names()) {
        CHECK(ck.params.value(name) == model.params().value(name));
        CHECK(ck.params.at(name).moment1 == model.params().at(name).moment1);
        CHECK(ck.params.at(name).moment2 == model.params().at(name).moment2);
    }

    Model back = restore_model(std::move(ck), build_graph(data.train, data.m_items, data.n_users));
    CHECK(bytes_of(back) == bytes_of(model));
}

TEST_CASE("resuming continues the same trajectory") {
    const SequenceSet data = small_data();
    const auto ex = make_training_examples(data.train, LossMode::last_item);
    Model straight = make_model(small_config(), data);
    train(straight, ex, 4);

    Model first = make_model(small_config(), data);
    train(first, ex, 2);
    std::istringstream in(bytes_of(first), std::ios::binary);
    Model resumed = restore_model(read_checkpoint(in), build_graph(data.train, data.m_items, data.n_users));
    train(resumed, ex, 2);
    CHECK(resumed.epochs_done == 4);
    CHECK(bytes_of(resumed) == bytes_of(straight));
}

TEST_CASE("malformed streams") {
    const SequenceSet data = small_data();
    Model model = make_model(small_config(), data);
    const std::string good = bytes_of(model);

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        std::istringstream in(bad, std::ios::binary);
        CHECK_THROWS_AS(read_checkpoint(in), ParseError);
    }
    SUBCASE("truncated") {
        for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
            std::istringstream in(good.substr(0, cut), std::ios::binary);
            CHECK_THROWS_AS(read_checkpoint(in), ParseError);
        }
    }
    SUBCASE("graph of another size") {
        std::istringstream in(good, std::ios::binary);
        Checkpoint ck = read_checkpoint(in);
        CHECK_THROWS_AS(restore_model(std::move(ck), build_graph(data.train, data.m_items + 1, data.n_users)),
                        DimensionError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/model.eagps"), IoError);
    }
}
