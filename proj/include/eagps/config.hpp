#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace eagps {

enum class Variant { ea_gps, gps_opt, gps_rpe, gps_oma, gps_oea, gps_sa, gps_la, gps_basic };

inline constexpr Variant all_variants[] = {Variant::ea_gps, Variant::gps_opt, Variant::gps_rpe, Variant::gps_oma,
                                           Variant::gps_oea, Variant::gps_sa,  Variant::gps_la,  Variant::gps_basic};

std::string_view to_string(Variant v);
// Accepts the canonical names (EA-GPS, GPS_OPT, ...) case-insensitively.
Variant parse_variant(std::string_view name);

enum class LossMode { last_item, all_prefixes };
std::string_view to_string(LossMode m);
LossMode parse_loss_mode(std::string_view name);

struct HyperConfig {
    // model
    std::size_t d = 16;
    std::size_t d1 = 0;  // prompt table width; 0 means d
    std::size_t alpha = 16;
    std::size_t beta = 2;
    double gamma = 0.4;
    std::size_t eta = 2;
    std::size_t max_len = 0;  // prompt table rows; 0 means longest sequence in the data
    Variant variant = Variant::ea_gps;
    bool standard_softmax = false;

    // optimization
    double lr = 0.001;
    std::size_t batch_size = 256;
    double dropout = 0.1;
    double ea_l2 = 1e-7;
    std::size_t epochs = 100;
    LossMode loss_mode = LossMode::last_item;

    std::uint64_t init_seed = 1;
    std::uint64_t shuffle_seed = 2;
    std::uint64_t dropout_seed = 3;
    std::uint64_t mask_seed = 4;

    // data preparation
    std::size_t min_seq_len = 3;
    std::size_t min_item_freq = 5;
    std::int64_t window_seconds = 31536000;
    double split_ratio = 0.8;
    std::uint64_t split_seed = 5;

    static constexpr double delta = 1.0;

    std::size_t prompt_width() const { return d1 ? d1 : d; }

    // Sets every seed from one base value.
    void set_seed(std::uint64_t base);

    // Throws ConfigError for unknown keys or unparsable values.
    void set(std::string_view key, std::string_view value);

    // Throws ConfigError when invariants fail (beta | d, gamma in [0,1], ...).
    void validate() const;

    // `key=value` lines, every key, stable order.
    std::string to_text() const;
};

// Reads `key=value` lines ('#' comments and blank lines ignored) on top of `base`.
HyperConfig parse_config_text(std::string_view text, HyperConfig base = {});
HyperConfig load_config_file(const std::filesystem::path& path, HyperConfig base = {});

std::vector<double> parse_double_list(std::string_view text);
std::vector<std::size_t> parse_size_list(std::string_view text);

}  // namespace eagps
