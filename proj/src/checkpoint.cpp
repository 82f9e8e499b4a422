#include "eagps/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "eagps/errors.hpp"

namespace eagps {

namespace {

constexpr char kMagic[6] = {'E', 'A', 'G', 'P', 'S', '1'};
constexpr std::uint64_t kMaxName = 1 << 16;

const std::string kMoment1 = "opt.m.";
const std::string kMoment2 = "opt.v.";
const std::string kStep = "opt.step";

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

bool get_u64(std::istream& in, std::uint64_t& v) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        if (in.gcount() != 0) throw ParseError(0, "checkpoint truncated");
        return false;
    }
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
}

std::uint64_t need_u64(std::istream& in, const char* what) {
    std::uint64_t v = 0;
    if (!get_u64(in, v)) throw ParseError(0, std::string("checkpoint truncated in ") + what);
    return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor2& t) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.rows());
    put_u64(out, t.cols());
    for (double v : t.values()) put_f64(out, v);
}

std::size_t take_size(std::string& text, const std::string& key) {
    const std::string prefix = key + "=";
    const auto at = text.find(prefix);
    if (at == std::string::npos || (at != 0 && text[at - 1] != '\n'))
        throw ParseError(0, "checkpoint header lacks " + key);
    const auto end = text.find('\n', at);
    const std::string value = text.substr(at + prefix.size(), end - at - prefix.size());
    text.erase(at, end == std::string::npos ? std::string::npos : end - at + 1);
    try {
        std::size_t used = 0;
        const auto v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ParseError(0, "checkpoint header: bad value for " + key);
    }
}

}  // namespace

void write_checkpoint(const Model& model, std::ostream& out) {
    HyperConfig cfg = model.config();
    cfg.max_len = model.shape().max_len;
    std::ostringstream header;
    header << "m_items=" << model.shape().m_items << '\n'
           << "n_users=" << model.shape().n_users << '\n'
           << "epochs_done=" << model.epochs_done << '\n'
           << cfg.to_text();
    const std::string text = header.str();

    out.write(kMagic, sizeof kMagic);
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, p] : model.params()) put_tensor(out, name, p.value);
    for (const auto& [name, p] : model.params()) {
        put_tensor(out, kMoment1 + name, p.moment1.empty() ? Tensor2(p.value.rows(), p.value.cols()) : p.moment1);
        put_tensor(out, kMoment2 + name, p.moment2.empty() ? Tensor2(p.value.rows(), p.value.cols()) : p.moment2);
    }
    put_tensor(out, kStep, Tensor2(1, 1, static_cast<double>(model.params().step)));
    if (!out) throw IoError("checkpoint write failed");
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    write_checkpoint(model, f);
    f.close();
    if (!f) throw IoError("cannot write checkpoint " + path.string());
}

Checkpoint read_checkpoint(std::istream& in) {
    char magic[sizeof kMagic];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw ParseError(0, "not a checkpoint (bad magic)");
    const std::uint64_t text_len = need_u64(in, "header");
    if (text_len > (1u << 20)) throw ParseError(0, "checkpoint header too large");
    std::string text(text_len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(text_len))) throw ParseError(0, "checkpoint truncated in header");

    Checkpoint ck;
    ck.shape.m_items = take_size(text, "m_items");
    ck.shape.n_users = take_size(text, "n_users");
    ck.epochs_done = take_size(text, "epochs_done");
    ck.config = parse_config_text(text);
    ck.shape.max_len = ck.config.max_len;

    const ParamStore expected = init_params(ck.config, ck.shape);
    for (const auto& [name, p] : expected) ck.params.add(name, Tensor2(p.value.rows(), p.value.cols()));
    std::set<std::string> seen;

    std::uint64_t name_len = 0;
    while (get_u64(in, name_len)) {
        if (name_len == 0 || name_len > kMaxName) throw ParseError(0, "checkpoint record has a bad name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) throw ParseError(0, "checkpoint truncated in name");
        const std::uint64_t rows = need_u64(in, name.c_str());
        const std::uint64_t cols = need_u64(in, name.c_str());
        if (rows > (1u << 28) || cols > (1u << 28) || rows * cols > (1ull << 32))
            throw ParseError(0, "checkpoint tensor " + name + " is implausibly large");
        std::vector<double> values(rows * cols);
        for (auto& v : values) v = std::bit_cast<double>(need_u64(in, name.c_str()));
        Tensor2 t(rows, cols, std::move(values));

        if (name == kStep) {
            if (rows != 1 || cols != 1) throw ConfigError("opt.step must be 1x1");
            ck.params.step = static_cast<std::uint64_t>(t(0, 0));
            continue;
        }
        std::string base = name;
        int slot = 0;
        if (name.starts_with(kMoment1)) {
            base = name.substr(kMoment1.size());
            slot = 1;
        } else if (name.starts_with(kMoment2)) {
            base = name.substr(kMoment2.size());
            slot = 2;
        }
        if (!ck.params.contains(base)) throw ConfigError("checkpoint tensor " + base + " is not part of the config");
        Param& p = ck.params.at(base);
        if (!p.value.same_shape(t))
            throw ConfigError("checkpoint tensor " + name + " has shape " + t.shape_string() + ", config expects " +
                              p.value.shape_string());
        (slot == 0 ? p.value : slot == 1 ? p.moment1 : p.moment2) = std::move(t);
        if (slot == 0 && !seen.insert(base).second) throw ParseError(0, "duplicate checkpoint tensor " + base);
    }
    if (!in.eof()) throw IoError("checkpoint read failed");
    if (seen.size() != expected.size()) throw ConfigError("checkpoint is missing parameter tensors");
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint " + path.string());
    return read_checkpoint(f);
}

Model restore_model(Checkpoint ckpt, SequentialGraph graph) {
    Model model(std::move(ckpt.config), ckpt.shape, std::move(graph), std::move(ckpt.params));
    model.epochs_done = ckpt.epochs_done;
    return model;
}

}  // namespace eagps
