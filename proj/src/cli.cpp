#include "eagps/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "eagps/checkpoint.hpp"
#include "eagps/errors.hpp"
#include "eagps/evaluator.hpp"
#include "eagps/model.hpp"

namespace eagps::cli {

namespace fs = std::filesystem;

RunLock::RunLock(const fs::path& dir) : path_(dir / ".eagps.lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
        throw IoError("run directory " + dir.string() + " is locked (remove " + path_.string() +
                      " if no other process owns it)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

HyperConfig gradcheck_config() {
    HyperConfig cfg;
    cfg.d = 8;
    cfg.alpha = 4;
    cfg.beta = 2;
    cfg.eta = 2;
    cfg.gamma = 0.4;
    cfg.min_item_freq = 1;
    cfg.min_seq_len = 3;
    return cfg;
}

SequenceSet gradcheck_data(std::uint64_t seed) {
    const InteractionLog log = synth_dataset(5, 20, 8, 0.3, seed);
    FilterOptions f;
    f.min_item_freq = 1;
    SequenceSet s = build_sequences(log, f);
    return split_train_test(std::move(s), 0.8, seed);
}

GradcheckRun run_gradcheck(const HyperConfig& cfg, const SequenceSet& data, const GradCheckOptions& opt,
                           const std::string& corrupt) {
    const auto t0 = std::chrono::steady_clock::now();
    Model model = make_model(cfg, data);
    if (!corrupt.empty() && !model.params().contains(corrupt))
        throw ConfigError("no parameter named " + corrupt);
    const std::vector<Example> batch = make_training_examples(data.all, cfg.loss_mode);

    PassContext ctx;
    ctx.training = true;
    ctx.dropout_seed = mix_seed(cfg.dropout_seed, 1);
    for (const auto& e : batch) ctx.mask_seeds.push_back(mix_seed(cfg.mask_seed, 1, e.id));

    LossFn fn = [&](ParamStore& store, bool with_grad) {
        store.zero_grad();
        const double v = model.objective_value(batch, ctx, with_grad);
        if (with_grad && !corrupt.empty()) store.grad(corrupt).values()[0] += 1e-3;
        return v;
    };
    GradcheckRun run;
    run.report = finite_diff_grad_check(fn, model.params(), opt);
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return run;
}

namespace {

// Values given on the command line; applied after the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> variant;
    std::optional<std::size_t> alpha, beta, eta, d, epochs, batch;
    std::optional<double> gamma, lr;
    std::optional<std::string> loss_mode;
    std::vector<std::string> sets;
};

struct Common {
    std::string config_path;
    std::string out_dir;
    Overrides ov;
};

void add_common(CLI::App* sub, Common& c, bool require_out = true) {
    sub->add_option("--config", c.config_path, "key=value config file")->check(CLI::ExistingFile);
    auto* out = sub->add_option("--out", c.out_dir, "run directory");
    if (require_out) out->required();
    sub->add_option("--seed", c.ov.seed, "base seed for init/shuffle/dropout/mask");
    sub->add_option("--variant", c.ov.variant, "EA-GPS, GPS_OPT, GPS_RPE, GPS_OMA, GPS_OEA, GPS_SA, GPS_LA, GPS_Basic");
    sub->add_option("--alpha", c.ov.alpha, "memory units per head");
    sub->add_option("--beta", c.ov.beta, "attention heads");
    sub->add_option("--gamma", c.ov.gamma, "mask fraction");
    sub->add_option("--eta", c.ov.eta, "propagation layers");
    sub->add_option("--d", c.ov.d, "embedding size");
    sub->add_option("--lr", c.ov.lr, "learning rate");
    sub->add_option("--epochs", c.ov.epochs, "training epochs");
    sub->add_option("--batch", c.ov.batch, "batch size");
    sub->add_option("--loss-mode", c.ov.loss_mode, "last-item or all-prefixes");
    sub->add_option("--set", c.ov.sets, "extra key=value override (repeatable)");
}

template <typename T>
std::string str(const T& v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}

HyperConfig resolve(const Common& c, HyperConfig base = {}) {
    HyperConfig cfg = c.config_path.empty() ? base : load_config_file(c.config_path, base);
    const Overrides& o = c.ov;
    if (o.seed) cfg.set("seed", str(*o.seed));
    if (o.variant) cfg.set("variant", *o.variant);
    if (o.alpha) cfg.set("alpha", str(*o.alpha));
    if (o.beta) cfg.set("beta", str(*o.beta));
    if (o.gamma) cfg.set("gamma", str(*o.gamma));
    if (o.eta) cfg.set("eta", str(*o.eta));
    if (o.d) cfg.set("d", str(*o.d));
    if (o.lr) cfg.set("lr", str(*o.lr));
    if (o.epochs) cfg.set("epochs", str(*o.epochs));
    if (o.batch) cfg.set("batch_size", str(*o.batch));
    if (o.loss_mode) cfg.set("loss_mode", *o.loss_mode);
    for (const auto& kv : o.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f.flush()) throw IoError("cannot write " + path.string());
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
    std::ofstream f(path, mode);
    if (!f) throw IoError("cannot write " + path.string());
    return f;
}

void write_resolved(const fs::path& dir, const HyperConfig& cfg) { write_text(dir / "config.resolved.txt", cfg.to_text()); }

std::string fixed(double v, int digits = 4) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

MetricsReport train_and_evaluate(const HyperConfig& cfg, const SequenceSet& data) {
    if (data.test.empty()) throw DataError("bundle has no test sequences");
    Model model = make_model(cfg, data);
    train(model, make_training_examples(data.train, cfg.loss_mode), cfg.epochs);
    EvalOptions eo;
    eo.chunk = cfg.batch_size;
    return evaluate(model, data.test, eo);
}

// --- subcommands -----------------------------------------------------------

struct SynthArgs {
    std::size_t users = 50, items = 200, len = 10;
    double noise = 0.0;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    const InteractionLog log = synth_dataset(a.users, a.items, a.len, a.noise, a.seed);
    std::ofstream f = open_out(a.out);
    for (const auto& r : log.records) f << r.user << '\t' << r.item << '\t' << r.timestamp << '\n';
    if (!f.flush()) throw IoError("cannot write " + a.out);
    out << "wrote " << log.records.size() << " interactions to " << a.out << '\n';
    return ok;
}

int cmd_prepare(const Common& c, const std::string& input, std::ostream& out) {
    const HyperConfig cfg = resolve(c);
    std::ifstream in(input);
    if (!in) throw IoError("cannot read " + input);
    const InteractionLog log = parse_interactions(in);
    FilterOptions f;
    f.min_item_freq = cfg.min_item_freq;
    f.min_seq_len = cfg.min_seq_len;
    f.window_seconds = cfg.window_seconds;
    const SequenceSet data = split_train_test(build_sequences(log, f), cfg.split_ratio, cfg.split_seed);

    RunLock lock(c.out_dir);
    write_bundle(data, c.out_dir);
    write_resolved(c.out_dir, cfg);
    out << "Items\t" << data.m_items << '\n'
        << "Interactions\t" << data.interaction_count() << '\n'
        << "Users\t" << data.n_users << '\n'
        << "Training Sequences\t" << data.train.size() << '\n'
        << "Testing Sequences\t" << data.test.size() << '\n';
    return ok;
}

int cmd_train(const Common& c, const std::string& data_dir, const std::string& resume, std::ostream& out) {
    const SequenceSet data = read_bundle(data_dir);
    std::optional<Model> model;
    HyperConfig cfg;
    if (resume.empty()) {
        cfg = resolve(c);
        model.emplace(make_model(cfg, data));
    } else {
        Checkpoint ck = load_checkpoint(resume);
        cfg = resolve(c, ck.config);
        ck.config = cfg;
        model.emplace(restore_model(std::move(ck), build_graph(data.train, data.m_items, data.n_users)));
    }
    HyperConfig resolved = model->config();
    resolved.max_len = model->shape().max_len;

    RunLock lock(c.out_dir);
    const fs::path dir = c.out_dir;
    write_resolved(dir, resolved);
    const fs::path loss_path = dir / "loss.csv";
    const bool append = !resume.empty() && fs::exists(loss_path);
    std::ofstream loss = open_out(loss_path, append ? std::ios::app : std::ios::trunc);
    if (!append) loss << "epoch,loss\n";

    const std::vector<Example> examples = make_training_examples(data.train, cfg.loss_mode);
    train(*model, examples, cfg.epochs, [&](std::size_t epoch, double l) {
        loss << epoch << ',' << str(l) << '\n';
        out << "epoch " << epoch << " loss " << fixed(l, 6) << '\n';
    });
    if (!loss.flush()) throw IoError("cannot write " + loss_path.string());
    save_checkpoint(*model, dir / "model.eagps");
    out << "checkpoint " << (dir / "model.eagps").string() << " (step " << model->params().step << ")\n";
    return ok;
}

void print_metrics(const MetricsReport& r, std::ostream& out) {
    for (const auto& [n, v] : r.recall_at) out << "Recall@" << n << '\t' << fixed(v) << '\n';
    for (const auto& [n, v] : r.mrr_at) out << "MRR@" << n << '\t' << fixed(v) << '\n';
}

int cmd_eval(const Common& c, const std::string& data_dir, const std::string& ckpt_path, const std::string& ns,
             std::ostream& out) {
    const SequenceSet data = read_bundle(data_dir);
    Checkpoint ck = load_checkpoint(ckpt_path);
    const HyperConfig cfg = ck.config;
    if (ck.shape.m_items != data.m_items || ck.shape.n_users != data.n_users)
        throw DimensionError("checkpoint was trained on " + std::to_string(ck.shape.m_items) + " items / " +
                             std::to_string(ck.shape.n_users) + " users, bundle has " + std::to_string(data.m_items) +
                             " / " + std::to_string(data.n_users));
    Model model = restore_model(std::move(ck), build_graph(data.train, data.m_items, data.n_users));
    EvalOptions eo;
    eo.ns = parse_size_list(ns);
    eo.chunk = cfg.batch_size;
    const MetricsReport r = evaluate(model, data.test, eo);

    RunLock lock(c.out_dir);
    write_resolved(c.out_dir, cfg);
    std::ofstream j = open_out(fs::path(c.out_dir) / "metrics.jsonl");
    write_metrics_jsonl(r, j);
    std::ofstream csv = open_out(fs::path(c.out_dir) / "metrics.csv");
    write_metrics_csv(r, csv);
    if (!j.flush() || !csv.flush()) throw IoError("cannot write metrics");
    print_metrics(r, out);
    return ok;
}

std::vector<Variant> parse_variants(const std::string& list) {
    std::vector<Variant> out;
    if (list.empty()) return {std::begin(all_variants), std::end(all_variants)};
    std::string_view rest = list;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        out.push_back(parse_variant(rest.substr(0, comma)));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    return out;
}

int cmd_ablate(const Common& c, const std::string& data_dir, const std::string& variants, std::ostream& out) {
    const SequenceSet data = read_bundle(data_dir);
    const HyperConfig base = resolve(c);
    const std::vector<Variant> list = parse_variants(variants);

    RunLock lock(c.out_dir);
    write_resolved(c.out_dir, base);
    std::ofstream csv = open_out(fs::path(c.out_dir) / "ablation.csv");
    std::ofstream jl = open_out(fs::path(c.out_dir) / "ablation.jsonl");
    csv << "variant,recall@5,mrr@5,recall@10,mrr@10\n";
    out << std::left << std::setw(12) << "Variant" << "Recall@5  MRR@5     Recall@10 MRR@10\n";
    for (Variant v : list) {
        HyperConfig cfg = base;
        cfg.variant = v;
        EvalOptions eo;
        const MetricsReport r = train_and_evaluate(cfg, data);
        const std::string name(to_string(v));
        csv << name << ',' << str(r.recall_at.at(5)) << ',' << str(r.mrr_at.at(5)) << ',' << str(r.recall_at.at(10))
            << ',' << str(r.mrr_at.at(10)) << '\n';
        write_metrics_jsonl(r, jl, name);
        out << std::left << std::setw(12) << name << std::setw(10) << fixed(r.recall_at.at(5)) << std::setw(10)
            << fixed(r.mrr_at.at(5)) << std::setw(10) << fixed(r.recall_at.at(10)) << fixed(r.mrr_at.at(10))
            << '\n';
    }
    if (!csv.flush() || !jl.flush()) throw IoError("cannot write ablation report");
    return ok;
}

struct SweepArgs {
    std::string alphas = "8,16,32,64,128";
    std::string betas = "1,2,4,8,16";
    std::string gammas = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
};

int cmd_sweep(const Common& c, const std::string& data_dir, const SweepArgs& s, std::ostream& out) {
    const SequenceSet data = read_bundle(data_dir);
    const HyperConfig base = resolve(c);
    const auto alphas = parse_size_list(s.alphas);
    const auto betas = parse_size_list(s.betas);
    const auto gammas = parse_double_list(s.gammas);
    if (alphas.empty() || betas.empty() || gammas.empty()) throw ConfigError("sweep grid is empty");

    RunLock lock(c.out_dir);
    write_resolved(c.out_dir, base);
    std::ofstream csv = open_out(fs::path(c.out_dir) / "sweep.csv");
    csv << "alpha,beta,gamma,recall@5,mrr@5,recall@10,mrr@10\n";
    std::size_t rows = 0;
    for (std::size_t a : alphas)
        for (std::size_t b : betas)
            for (double g : gammas) {
                HyperConfig cfg = base;
                cfg.alpha = a;
                cfg.beta = b;
                cfg.gamma = g;
                cfg.validate();
                const MetricsReport r = train_and_evaluate(cfg, data);
                csv << a << ',' << b << ',' << str(g) << ',' << str(r.recall_at.at(5)) << ',' << str(r.mrr_at.at(5))
                    << ',' << str(r.recall_at.at(10)) << ',' << str(r.mrr_at.at(10)) << '\n';
                ++rows;
                out << "alpha=" << a << " beta=" << b << " gamma=" << g
                    << " Recall@10=" << fixed(r.recall_at.at(10)) << '\n';
            }
    if (!csv.flush()) throw IoError("cannot write sweep.csv");
    out << rows << " rows\n";
    return ok;
}

int cmd_gradcheck(const Common& c, const std::string& corrupt, double tolerance, std::ostream& out) {
    const HyperConfig cfg = resolve(c, gradcheck_config());
    const SequenceSet data = gradcheck_data();
    GradCheckOptions opt;
    opt.tolerance = tolerance;
    const GradcheckRun run = run_gradcheck(cfg, data, opt, corrupt);

    std::ostringstream rep;
    rep << "variant " << to_string(cfg.variant) << '\n';
    for (const auto& e : run.report.entries)
        rep << std::left << std::setw(16) << e.name << " coords " << std::setw(4) << e.checked << " max_rel "
            << std::scientific << std::setprecision(3) << e.max_rel_error << std::defaultfloat << '\n';
    rep << "worst " << run.report.worst_param << ' ' << std::scientific << std::setprecision(3)
        << run.report.max_rel_error << std::defaultfloat << '\n';
    if (!run.report.deterministic) rep << "objective is not deterministic\n";
    rep << "seconds " << fixed(run.seconds, 2) << '\n';
    rep << (run.report.passed ? "PASS" : "FAIL") << '\n';
    out << rep.str();

    if (!c.out_dir.empty()) {
        RunLock lock(c.out_dir);
        write_resolved(c.out_dir, cfg);
        write_text(fs::path(c.out_dir) / "gradcheck.txt", rep.str());
    }
    return run.report.passed ? ok : check_failed;
}

struct BenchArgs {
    std::string ratios = "0.2,0.4,0.6,0.8,1.0";
    std::size_t repeats = 3;
    std::size_t epochs = 3;
};

int cmd_bench(const Common& c, const std::string& data_dir, const BenchArgs& b, std::ostream& out) {
    const SequenceSet data = read_bundle(data_dir);
    Common no_epochs = c;
    no_epochs.ov.epochs.reset();
    HyperConfig cfg = resolve(no_epochs);
    BenchOptions opt;
    opt.ratios = parse_double_list(b.ratios);
    opt.repeats = b.repeats;
    opt.epochs = c.ov.epochs.value_or(b.epochs);
    cfg.epochs = opt.epochs;

    RunLock lock(c.out_dir);
    write_resolved(c.out_dir, cfg);
    const std::vector<BenchRecord> recs = benchmark(cfg, data, opt);
    std::ofstream jl = open_out(fs::path(c.out_dir) / "bench.jsonl");
    write_bench_jsonl(recs, jl);
    std::ofstream csv = open_out(fs::path(c.out_dir) / "bench.csv");
    write_bench_csv(recs, csv);
    if (!jl.flush() || !csv.flush()) throw IoError("cannot write bench report");

    out << "single-threaded, " << opt.epochs << " epochs, median of " << opt.repeats << " runs\n";
    for (const auto& r : recs)
        out << "ratio " << fixed(r.data_ratio, 2) << " seconds " << fixed(r.wall_seconds, 4) << " params "
            << r.param_count << " ea_flops " << r.ea_flops_total << '\n';
    return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Graph-based sequential recommender with external attention and positional prompts", "eagps"};
    app.require_subcommand(1);

    Common common;
    SynthArgs synth;
    std::string input, data_dir, resume, ckpt, ns = "5,10", variants, corrupt;
    double tolerance = 1e-4;
    SweepArgs sweep;
    BenchArgs bench;

    auto* s_synth = app.add_subcommand("synth", "write a planted-pattern interaction log");
    s_synth->add_option("--users", synth.users);
    s_synth->add_option("--items", synth.items);
    s_synth->add_option("--len", synth.len, "interactions per user");
    s_synth->add_option("--noise", synth.noise, "probability of a random step");
    s_synth->add_option("--seed", synth.seed);
    s_synth->add_option("--out", synth.out, "output TSV")->required();

    auto* s_prepare = app.add_subcommand("prepare", "filter, segment and split an interaction log");
    add_common(s_prepare, common);
    s_prepare->add_option("--input", input, "user<TAB>item<TAB>timestamp lines")->required();

    auto* s_train = app.add_subcommand("train", "train a model on a prepared bundle");
    add_common(s_train, common);
    s_train->add_option("--data", data_dir, "bundle directory")->required();
    s_train->add_option("--resume", resume, "continue from a checkpoint");

    auto* s_eval = app.add_subcommand("eval", "Recall@N and MRR@N on the test split");
    add_common(s_eval, common);
    s_eval->add_option("--data", data_dir)->required();
    s_eval->add_option("--checkpoint", ckpt)->required();
    s_eval->add_option("--ns", ns, "comma-separated cut-offs");

    auto* s_ablate = app.add_subcommand("ablate", "train and evaluate several variants");
    add_common(s_ablate, common);
    s_ablate->add_option("--data", data_dir)->required();
    s_ablate->add_option("--variants", variants, "comma-separated variant names (default: all)");

    auto* s_sweep = app.add_subcommand("sweep", "grid over alpha, beta and gamma");
    add_common(s_sweep, common);
    s_sweep->add_option("--data", data_dir)->required();
    s_sweep->add_option("--alphas", sweep.alphas);
    s_sweep->add_option("--betas", sweep.betas);
    s_sweep->add_option("--gammas", sweep.gammas);

    auto* s_grad = app.add_subcommand("gradcheck", "finite-difference check of every parameter gradient");
    add_common(s_grad, common, false);
    s_grad->add_option("--tolerance", tolerance);
    s_grad->add_option("--corrupt-grad", corrupt, "test hook: perturb this tensor's analytic gradient");

    auto* s_bench = app.add_subcommand("bench", "wall time against data ratio");
    add_common(s_bench, common);
    s_bench->add_option("--data", data_dir)->required();
    s_bench->add_option("--ratios", bench.ratios);
    s_bench->add_option("--repeats", bench.repeats);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return check_failed;
    }

    try {
        if (*s_synth) return cmd_synth(synth, out);
        if (*s_prepare) return cmd_prepare(common, input, out);
        if (*s_train) return cmd_train(common, data_dir, resume, out);
        if (*s_eval) return cmd_eval(common, data_dir, ckpt, ns, out);
        if (*s_ablate) return cmd_ablate(common, data_dir, variants, out);
        if (*s_sweep) return cmd_sweep(common, data_dir, sweep, out);
        if (*s_grad) return cmd_gradcheck(common, corrupt, tolerance, out);
        if (*s_bench) return cmd_bench(common, data_dir, bench, out);
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return io_failure;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return io_failure;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << '\n';
        return io_failure;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return check_failed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return check_failed;
    }
    return check_failed;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace eagps::cli
