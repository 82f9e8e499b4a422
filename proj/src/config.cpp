#include "eagps/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "eagps/errors.hpp"
#include "eagps/numerics.hpp"

namespace eagps {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    std::replace(out.begin(), out.end(), '-', '_');
    return out;
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    v = trim(v);
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw ConfigError("invalid value '" + std::string(v) + "' for " + std::string(key));
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    const std::string s = lower(trim(v));
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw ConfigError("invalid boolean '" + std::string(v) + "' for " + std::string(key));
}

}  // namespace

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::ea_gps: return "EA-GPS";
        case Variant::gps_opt: return "GPS_OPT";
        case Variant::gps_rpe: return "GPS_RPE";
        case Variant::gps_oma: return "GPS_OMA";
        case Variant::gps_oea: return "GPS_OEA";
        case Variant::gps_sa: return "GPS_SA";
        case Variant::gps_la: return "GPS_LA";
        case Variant::gps_basic: return "GPS_Basic";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    const std::string want = lower(trim(name));
    for (Variant v : all_variants)
        if (lower(to_string(v)) == want) return v;
    throw ConfigError("unknown variant: " + std::string(name));
}

std::string_view to_string(LossMode m) { return m == LossMode::last_item ? "last-item" : "all-prefixes"; }

LossMode parse_loss_mode(std::string_view name) {
    const std::string s = lower(trim(name));
    if (s == "last_item") return LossMode::last_item;
    if (s == "all_prefixes") return LossMode::all_prefixes;
    throw ConfigError("unknown loss mode: " + std::string(name));
}

void HyperConfig::set_seed(std::uint64_t base) {
    init_seed = mix_seed(base, 1);
    shuffle_seed = mix_seed(base, 2);
    dropout_seed = mix_seed(base, 3);
    mask_seed = mix_seed(base, 4);
}

void HyperConfig::set(std::string_view raw_key, std::string_view value) {
    const std::string key = lower(trim(raw_key));
    value = trim(value);
    if (key == "d") d = parse_number<std::size_t>(key, value);
    else if (key == "d1") d1 = parse_number<std::size_t>(key, value);
    else if (key == "alpha") alpha = parse_number<std::size_t>(key, value);
    else if (key == "beta") beta = parse_number<std::size_t>(key, value);
    else if (key == "gamma") gamma = parse_number<double>(key, value);
    else if (key == "eta") eta = parse_number<std::size_t>(key, value);
    else if (key == "max_len") max_len = parse_number<std::size_t>(key, value);
    else if (key == "variant") variant = parse_variant(value);
    else if (key == "standard_softmax") standard_softmax = parse_bool(key, value);
    else if (key == "lr") lr = parse_number<double>(key, value);
    else if (key == "batch_size" || key == "batch") batch_size = parse_number<std::size_t>(key, value);
    else if (key == "dropout") dropout = parse_number<double>(key, value);
    else if (key == "ea_l2") ea_l2 = parse_number<double>(key, value);
    else if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
    else if (key == "loss_mode") loss_mode = parse_loss_mode(value);
    else if (key == "seed") set_seed(parse_number<std::uint64_t>(key, value));
    else if (key == "init_seed") init_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "shuffle_seed") shuffle_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "dropout_seed") dropout_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "mask_seed") mask_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "min_seq_len") min_seq_len = parse_number<std::size_t>(key, value);
    else if (key == "min_item_freq") min_item_freq = parse_number<std::size_t>(key, value);
    else if (key == "window_seconds") window_seconds = parse_number<std::int64_t>(key, value);
    else if (key == "split_ratio") split_ratio = parse_number<double>(key, value);
    else if (key == "split_seed") split_seed = parse_number<std::uint64_t>(key, value);
    else throw ConfigError("unknown config key: " + std::string(raw_key));
}

void HyperConfig::validate() const {
    if (d == 0) throw ConfigError("d must be >= 1");
    if (alpha == 0) throw ConfigError("alpha must be >= 1");
    if (beta == 0 || d % beta != 0) throw ConfigError("beta must divide d");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (eta == 0) throw ConfigError("eta must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(ea_l2 >= 0.0)) throw ConfigError("ea_l2 must be >= 0");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split_ratio must lie in (0, 1)");
}

std::string HyperConfig::to_text() const {
    std::ostringstream o;
    o.precision(17);
    o << "d=" << d << '\n'
      << "d1=" << d1 << '\n'
      << "alpha=" << alpha << '\n'
      << "beta=" << beta << '\n'
      << "gamma=" << gamma << '\n'
      << "eta=" << eta << '\n'
      << "max_len=" << max_len << '\n'
      << "variant=" << to_string(variant) << '\n'
      << "standard_softmax=" << (standard_softmax ? "true" : "false") << '\n'
      << "lr=" << lr << '\n'
      << "batch_size=" << batch_size << '\n'
      << "dropout=" << dropout << '\n'
      << "ea_l2=" << ea_l2 << '\n'
      << "epochs=" << epochs << '\n'
      << "loss_mode=" << to_string(loss_mode) << '\n'
      << "init_seed=" << init_seed << '\n'
      << "shuffle_seed=" << shuffle_seed << '\n'
      << "dropout_seed=" << dropout_seed << '\n'
      << "mask_seed=" << mask_seed << '\n'
      << "min_seq_len=" << min_seq_len << '\n'
      << "min_item_freq=" << min_item_freq << '\n'
      << "window_seconds=" << window_seconds << '\n'
      << "split_ratio=" << split_ratio << '\n'
      << "split_seed=" << split_seed << '\n';
    return o.str();
}

HyperConfig parse_config_text(std::string_view text, HyperConfig base) {
    std::size_t lineno = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        base.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return base;
}

HyperConfig load_config_file(const std::filesystem::path& path, HyperConfig base) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), base);
}

std::vector<double> parse_double_list(std::string_view text) {
    std::vector<double> out;
    while (!text.empty()) {
        const auto c = text.find(',');
        out.push_back(parse_number<double>("list", text.substr(0, c)));
        text = c == std::string_view::npos ? std::string_view{} : text.substr(c + 1);
    }
    return out;
}

std::vector<std::size_t> parse_size_list(std::string_view text) {
    std::vector<std::size_t> out;
    while (!text.empty()) {
        const auto c = text.find(',');
        out.push_back(parse_number<std::size_t>("list", text.substr(0, c)));
        text = c == std::string_view::npos ? std::string_view{} : text.substr(c + 1);
    }
    return out;
}

}  // namespace eagps
