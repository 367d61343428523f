// hit: hierarchical long-document transformer driver.
//
// Subcommands: train, eval, bench, gradcheck, synth. Every run writes its
// fully-resolved configuration next to its outputs so any artifact can be
// reproduced from that file alone. Exit codes: 0 success, 1 bad input
// (data/config/CLI), 2 broken internal invariant.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hit/bench.hpp"
#include "hit/checkpoint.hpp"
#include "hit/config_io.hpp"
#include "hit/selfcheck.hpp"
#include "hit/train.hpp"

namespace fs = std::filesystem;
using namespace hit;

namespace {

struct RunConfig {
    std::string subcommand;
    std::string config_path;
    std::string dataset, val_dataset, embeddings, checkpoint;
    std::string out = "hit_out";
    uint64_t seed = 0;

    // training
    int epochs = 3;
    int batch_size = 16;
    double lr = 1e-4;
    double val_fraction = 0.1;
    int min_count = 1;
    bool flat = false;
    bool ablate_propagation = false;

    // model
    int d = 256, heads = 8, layers = 2, k_max = 32, m_max = 64, d_ff = 0;
    int num_classes = 0;  // 0 = infer from the dataset
    double dropout = 0.2;
    int flat_max_len = 512;

    // synth
    std::string kind = "keyword";
    std::string policy = "uniform";
    int n_docs = 1000, synth_m = 8, synth_k = 16, synth_vocab = 50, late_boundary = 512;

    // bench
    std::string bench_m = "8,16,32,64";
    int bench_k = 32, bench_d = 64, bench_heads = 8, bench_repeats = 7;

    // gradcheck
    bool tiny = false;
    double gradcheck_h = 3e-5;
    double gradcheck_tol = 1e-4;
};

KvMap to_kv(const RunConfig& rc) {
    KvMap kv;
    kv["subcommand"] = rc.subcommand;
    kv["dataset"] = rc.dataset;
    kv["val_dataset"] = rc.val_dataset;
    kv["embeddings"] = rc.embeddings;
    kv["checkpoint"] = rc.checkpoint;
    kv["out"] = rc.out;
    kv["seed"] = std::to_string(rc.seed);
    kv["epochs"] = std::to_string(rc.epochs);
    kv["batch_size"] = std::to_string(rc.batch_size);
    kv["lr"] = format_double(rc.lr, 10);
    kv["val_fraction"] = format_double(rc.val_fraction, 6);
    kv["min_count"] = std::to_string(rc.min_count);
    kv["flat"] = rc.flat ? "1" : "0";
    kv["ablate_propagation"] = rc.ablate_propagation ? "1" : "0";
    kv["d"] = std::to_string(rc.d);
    kv["heads"] = std::to_string(rc.heads);
    kv["layers"] = std::to_string(rc.layers);
    kv["k_max"] = std::to_string(rc.k_max);
    kv["m_max"] = std::to_string(rc.m_max);
    kv["d_ff"] = std::to_string(rc.d_ff);
    kv["num_classes"] = std::to_string(rc.num_classes);
    kv["dropout"] = format_double(rc.dropout, 6);
    kv["flat_max_len"] = std::to_string(rc.flat_max_len);
    kv["kind"] = rc.kind;
    kv["policy"] = rc.policy;
    kv["n_docs"] = std::to_string(rc.n_docs);
    kv["synth_m"] = std::to_string(rc.synth_m);
    kv["synth_k"] = std::to_string(rc.synth_k);
    kv["synth_vocab"] = std::to_string(rc.synth_vocab);
    kv["late_boundary"] = std::to_string(rc.late_boundary);
    kv["bench_m"] = rc.bench_m;
    kv["bench_k"] = std::to_string(rc.bench_k);
    kv["bench_d"] = std::to_string(rc.bench_d);
    kv["bench_heads"] = std::to_string(rc.bench_heads);
    kv["bench_repeats"] = std::to_string(rc.bench_repeats);
    kv["tiny"] = rc.tiny ? "1" : "0";
    kv["gradcheck_h"] = format_double(rc.gradcheck_h, 10);
    kv["gradcheck_tol"] = format_double(rc.gradcheck_tol, 10);
    return kv;
}

// Config-file values fill in every option the command line left untouched.
// Unknown keys are rejected.
void apply_config_file(const RunConfig& defaults, RunConfig& rc, const CLI::App& app, const std::string& path) {
    const KvMap kv = load_kv_file(path);
    const KvMap known = to_kv(defaults);
    auto used = [&](const char* flag) { return app.count(flag) > 0; };
    for (const auto& [key, value] : kv) {
        if (key == "subcommand") continue;  // informational in resolved dumps
        if (!known.count(key)) throw config_error(path + ": unknown config key: " + key);
        const std::string flag = "--" + [&] {
            std::string f = key;
            for (char& c : f)
                if (c == '_') c = '-';
            return f;
        }();
        if (used(flag.c_str())) continue;  // command line wins
        try {
            if (key == "dataset") rc.dataset = value;
            else if (key == "val_dataset") rc.val_dataset = value;
            else if (key == "embeddings") rc.embeddings = value;
            else if (key == "checkpoint") rc.checkpoint = value;
            else if (key == "out") rc.out = value;
            else if (key == "seed") rc.seed = std::stoull(value);
            else if (key == "epochs") rc.epochs = std::stoi(value);
            else if (key == "batch_size") rc.batch_size = std::stoi(value);
            else if (key == "lr") rc.lr = std::stod(value);
            else if (key == "val_fraction") rc.val_fraction = std::stod(value);
            else if (key == "min_count") rc.min_count = std::stoi(value);
            else if (key == "flat") rc.flat = std::stoi(value) != 0;
            else if (key == "ablate_propagation") rc.ablate_propagation = std::stoi(value) != 0;
            else if (key == "d") rc.d = std::stoi(value);
            else if (key == "heads") rc.heads = std::stoi(value);
            else if (key == "layers") rc.layers = std::stoi(value);
            else if (key == "k_max") rc.k_max = std::stoi(value);
            else if (key == "m_max") rc.m_max = std::stoi(value);
            else if (key == "d_ff") rc.d_ff = std::stoi(value);
            else if (key == "num_classes") rc.num_classes = std::stoi(value);
            else if (key == "dropout") rc.dropout = std::stod(value);
            else if (key == "flat_max_len") rc.flat_max_len = std::stoi(value);
            else if (key == "kind") rc.kind = value;
            else if (key == "policy") rc.policy = value;
            else if (key == "n_docs") rc.n_docs = std::stoi(value);
            else if (key == "synth_m") rc.synth_m = std::stoi(value);
            else if (key == "synth_k") rc.synth_k = std::stoi(value);
            else if (key == "synth_vocab") rc.synth_vocab = std::stoi(value);
            else if (key == "late_boundary") rc.late_boundary = std::stoi(value);
            else if (key == "bench_m") rc.bench_m = value;
            else if (key == "bench_k") rc.bench_k = std::stoi(value);
            else if (key == "bench_d") rc.bench_d = std::stoi(value);
            else if (key == "bench_heads") rc.bench_heads = std::stoi(value);
            else if (key == "bench_repeats") rc.bench_repeats = std::stoi(value);
            else if (key == "tiny") rc.tiny = std::stoi(value) != 0;
            else if (key == "gradcheck_h") rc.gradcheck_h = std::stod(value);
            else if (key == "gradcheck_tol") rc.gradcheck_tol = std::stod(value);
        } catch (const std::invalid_argument&) {
            throw config_error(path + ": bad value for " + key + ": " + value);
        } catch (const std::out_of_range&) {
            throw config_error(path + ": value out of range for " + key + ": " + value);
        }
    }
}

void check_thread_cap() {
    const char* env = std::getenv("HIT_THREADS");
    if (!env) return;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
        throw config_error(std::string("HIT_THREADS must be a positive integer, got: ") + env);
    // All compute paths are single-threaded, so any positive cap is honored.
}

void write_resolved(const RunConfig& rc) {
    fs::create_directories(rc.out);
    save_kv_file((fs::path(rc.out) / "resolved_config.txt").string(), to_kv(rc));
}

ModelConfig model_config_from(const RunConfig& rc, int vocab_size, int num_classes, int pretrained_dim) {
    ModelConfig cfg;
    cfg.d = rc.d;
    cfg.heads = rc.heads;
    cfg.layers = rc.layers;
    cfg.k_max = rc.k_max;
    cfg.m_max = rc.m_max;
    cfg.d_ff = rc.d_ff;
    cfg.vocab_size = vocab_size;
    cfg.num_classes = num_classes;
    cfg.dropout = static_cast<float>(rc.dropout);
    cfg.flat_max_len = rc.flat_max_len;
    cfg.use_context_propagation = !rc.ablate_propagation;
    cfg.pretrained_dim = pretrained_dim;
    cfg.seed = rc.seed;
    cfg.validate();
    return cfg;
}

KvMap model_config_kv(const ModelConfig& cfg, bool flat_kind) {
    KvMap kv;
    kv["model_kind"] = flat_kind ? "flat" : "hi";
    kv["d"] = std::to_string(cfg.d);
    kv["heads"] = std::to_string(cfg.heads);
    kv["layers"] = std::to_string(cfg.layers);
    kv["k_max"] = std::to_string(cfg.k_max);
    kv["m_max"] = std::to_string(cfg.m_max);
    kv["d_ff"] = std::to_string(cfg.d_ff);
    kv["vocab_size"] = std::to_string(cfg.vocab_size);
    kv["num_classes"] = std::to_string(cfg.num_classes);
    kv["dropout"] = format_double(cfg.dropout, 6);
    kv["flat_max_len"] = std::to_string(cfg.flat_max_len);
    kv["use_context_propagation"] = cfg.use_context_propagation ? "1" : "0";
    kv["pretrained_dim"] = std::to_string(cfg.pretrained_dim);
    kv["seed"] = std::to_string(cfg.seed);
    return kv;
}

ModelConfig model_config_from_kv(const KvMap& kv, bool& flat_kind) {
    auto need = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw data_error("model config missing key: " + key);
        return it->second;
    };
    ModelConfig cfg;
    flat_kind = need("model_kind") == "flat";
    cfg.d = std::stoi(need("d"));
    cfg.heads = std::stoi(need("heads"));
    cfg.layers = std::stoi(need("layers"));
    cfg.k_max = std::stoi(need("k_max"));
    cfg.m_max = std::stoi(need("m_max"));
    cfg.d_ff = std::stoi(need("d_ff"));
    cfg.vocab_size = std::stoi(need("vocab_size"));
    cfg.num_classes = std::stoi(need("num_classes"));
    cfg.dropout = std::stof(need("dropout"));
    cfg.flat_max_len = std::stoi(need("flat_max_len"));
    cfg.use_context_propagation = need("use_context_propagation") == "1";
    cfg.pretrained_dim = std::stoi(need("pretrained_dim"));
    cfg.seed = std::stoull(need("seed"));
    cfg.validate();
    return cfg;
}

int infer_num_classes(const std::vector<Document>& docs) {
    int32_t mx = 0;
    for (const auto& d : docs) mx = std::max(mx, d.label);
    return static_cast<int>(mx) + 1;
}

int run_train(const RunConfig& rc) {
    if (rc.dataset.empty()) throw config_error("train: --dataset is required");
    write_resolved(rc);
    auto docs = load_jsonl_dataset(rc.dataset);

    std::vector<Document> train_raw, val_raw;
    if (!rc.val_dataset.empty()) {
        train_raw = docs;
        val_raw = load_jsonl_dataset(rc.val_dataset);
    } else {
        if (rc.val_fraction <= 0.0 || rc.val_fraction >= 1.0)
            throw config_error("train: val_fraction must be in (0, 1) when no val_dataset is given");
        std::vector<size_t> idx(docs.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng splitter(rc.seed);
        splitter.shuffle(idx);
        const size_t n_val = std::max<size_t>(1, static_cast<size_t>(static_cast<double>(docs.size()) * rc.val_fraction));
        if (n_val >= docs.size()) throw config_error("train: validation split leaves no training documents");
        for (size_t i = 0; i < idx.size(); ++i)
            (i < n_val ? val_raw : train_raw).push_back(docs[idx[i]]);
    }

    const int num_classes = rc.num_classes > 0 ? rc.num_classes : std::max(infer_num_classes(docs), 2);
    auto vocab = build_vocab(train_raw, rc.min_count);
    auto train_docs = tokenize_documents(train_raw);
    auto val_docs = tokenize_documents(val_raw);

    std::vector<float> pretrained;
    int pretrained_dim = 0;
    if (!rc.embeddings.empty()) {
        auto load = load_embedding_table(rc.embeddings, vocab, rc.seed);
        pretrained = std::move(load.table);
        pretrained_dim = static_cast<int>(load.dim);
        std::cout << "embeddings: matched " << load.matched << " tokens, coverage "
                  << format_double(load.coverage, 4) << "\n";
    }

    ModelConfig cfg = model_config_from(rc, static_cast<int>(vocab.size()), num_classes, pretrained_dim);
    Rng init(cfg.seed);
    std::unique_ptr<TrainableModel> model;
    if (rc.flat)
        model = std::make_unique<FlatModel>(cfg, vocab, init, pretrained.empty() ? nullptr : &pretrained);
    else
        model = std::make_unique<HiModel>(cfg, vocab, init, pretrained.empty() ? nullptr : &pretrained);

    TrainConfig tc;
    tc.epochs = rc.epochs;
    tc.batch_size = rc.batch_size;
    tc.lr = rc.lr;
    tc.seed = rc.seed;
    auto history = train_epochs(*model, train_docs, val_docs, tc);

    const fs::path out(rc.out);
    write_history_csv((out / "history.csv").string(), history);
    save_checkpoint((out / "model.ckpt").string(), model->params());
    save_vocab((out / "vocab.txt").string(), vocab);
    save_kv_file((out / "model_config.txt").string(), model_config_kv(cfg, rc.flat));
    for (const auto& row : history)
        std::cout << "epoch " << row.epoch << ": train_loss " << format_double(row.train_loss, 4) << ", val_accuracy "
                  << format_double(row.val.accuracy, 4) << ", val_macro_f " << format_double(row.val.macro_f, 4)
                  << "\n";
    std::cout << "wrote " << (out / "history.csv").string() << ", " << (out / "model.ckpt").string() << "\n";
    return 0;
}

int run_eval(const RunConfig& rc) {
    if (rc.dataset.empty()) throw config_error("eval: --dataset is required");
    if (rc.checkpoint.empty()) throw config_error("eval: --checkpoint is required");
    write_resolved(rc);
    const fs::path ckpt_dir = fs::path(rc.checkpoint).parent_path();
    auto vocab = load_vocab((ckpt_dir / "vocab.txt").string());
    bool flat_kind = false;
    ModelConfig cfg = model_config_from_kv(load_kv_file((ckpt_dir / "model_config.txt").string()), flat_kind);

    Rng init(cfg.seed);
    std::unique_ptr<TrainableModel> model;
    if (flat_kind)
        model = std::make_unique<FlatModel>(cfg, vocab, init);
    else
        model = std::make_unique<HiModel>(cfg, vocab, init);
    load_checkpoint(rc.checkpoint, model->params());

    auto docs = tokenize_documents(load_jsonl_dataset(rc.dataset));
    Metrics m = evaluate_model(*model, docs, rc.batch_size);
    const std::string text = metrics_to_kv_text(m);
    std::cout << text;
    std::ofstream mt(fs::path(rc.out) / "metrics.txt", std::ios::trunc);
    mt << text;
    return 0;
}

int run_bench(const RunConfig& rc) {
    write_resolved(rc);
    BenchConfig bc;
    bc.m_list.clear();
    std::stringstream ss(rc.bench_m);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) bc.m_list.push_back(std::stoll(item));
    bc.k = rc.bench_k;
    bc.d = rc.bench_d;
    bc.heads = rc.bench_heads;
    bc.repeats = rc.bench_repeats;
    bc.seed = rc.seed;
    const std::string csv = (fs::path(rc.out) / "bench.csv").string();
    auto reports = scaling_benchmark(bc, csv);

    std::vector<std::pair<double, double>> hi_pts, flat_pts;
    for (const auto& r : reports) {
        std::cout << r.kind << " M=" << r.M << " K=" << r.K << " d=" << r.d << " L=" << r.M * r.K << " units "
                  << r.analytic_units << " median " << format_double(r.median_s, 6) << "s stddev "
                  << format_double(r.stddev_s, 6) << "s\n";
        (r.kind == "hi" ? hi_pts : flat_pts).push_back({static_cast<double>(r.M * r.K), r.median_s});
    }
    if (hi_pts.size() >= 2) std::cout << "hi log-log slope: " << format_double(loglog_slope(hi_pts), 3) << "\n";
    if (flat_pts.size() >= 2) std::cout << "flat log-log slope: " << format_double(loglog_slope(flat_pts), 3) << "\n";
    std::cout << "wrote " << csv << "\n";
    return 0;
}

int run_gradcheck(const RunConfig& rc) {
    if (!rc.tiny) throw config_error("gradcheck: pass --tiny to run the built-in miniature model check");
    write_resolved(rc);
    auto report = tiny_model_gradcheck<double>(rc.gradcheck_h, rc.gradcheck_tol);
    std::ostringstream os;
    for (const auto& p : report.per_param)
        os << p.name << ": max rel err " << format_double(p.max_rel_err, 10) << " over " << p.n_checked
           << " coordinates\n";
    os << "worst parameter: " << report.worst_param << "\n";
    os << "max rel err " << format_double(report.max_rel_err, 10) << (report.pass ? " <= " : " > ")
       << format_double(report.tol, 10) << " -> " << (report.pass ? "PASS" : "FAIL") << "\n";
    std::cout << os.str();
    std::ofstream rf(fs::path(rc.out) / "gradcheck.txt", std::ios::trunc);
    rf << os.str();
    if (!report.pass) throw invariant_error("gradcheck failed: max rel err exceeds tolerance");
    return 0;
}

int run_synth(const RunConfig& rc) {
    write_resolved(rc);
    auto docs = gen_synthetic_task(synth_kind_from_string(rc.kind), rc.n_docs, rc.synth_m, rc.synth_k, rc.synth_vocab,
                                   signal_policy_from_string(rc.policy), rc.late_boundary, rc.seed);
    const std::string path = (fs::path(rc.out) / "synth.jsonl").string();
    save_jsonl_dataset(path, docs);
    int64_t positives = 0;
    for (const auto& d : docs) positives += d.label == 1;
    std::cout << "wrote " << docs.size() << " documents (" << positives << " positive) to " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig rc;
    const RunConfig defaults;

    CLI::App app{"hierarchical long-document transformer"};
    app.require_subcommand(1);
    app.fallthrough();

    app.add_option("--config", rc.config_path, "flat key=value config file; command-line flags take precedence");
    app.add_option("--dataset", rc.dataset, "JSONL dataset ({\"label\": int, \"text\": str} per line)");
    app.add_option("--val-dataset", rc.val_dataset, "JSONL validation dataset (default: split from --dataset)");
    app.add_option("--embeddings", rc.embeddings, "pretrained embedding text file (token + 300 floats per line)");
    app.add_option("--checkpoint", rc.checkpoint, "checkpoint file for eval");
    app.add_option("--out", rc.out, "output directory");
    app.add_option("--seed", rc.seed, "master seed for init, shuffling, dropout, splits");
    app.add_option("--epochs", rc.epochs, "training epochs");
    app.add_option("--batch-size", rc.batch_size, "minibatch size");
    app.add_option("--lr", rc.lr, "Adam learning rate");
    app.add_option("--val-fraction", rc.val_fraction, "validation split fraction when no --val-dataset");
    app.add_option("--min-count", rc.min_count, "vocabulary frequency threshold");
    app.add_flag("--flat", rc.flat, "train/benchmark the flat baseline instead of the hierarchical model");
    app.add_flag("--ablate-propagation", rc.ablate_propagation, "disable the context propagation pass");
    app.add_option("--d", rc.d, "hidden dimension");
    app.add_option("--heads", rc.heads, "attention heads");
    app.add_option("--layers", rc.layers, "encoder layers");
    app.add_option("--k-max", rc.k_max, "max words per sentence");
    app.add_option("--m-max", rc.m_max, "max sentences per document");
    app.add_option("--d-ff", rc.d_ff, "feed-forward width (0 = 4*d)");
    app.add_option("--num-classes", rc.num_classes, "class count (0 = infer from data)");
    app.add_option("--dropout", rc.dropout, "dropout rate");
    app.add_option("--flat-max-len", rc.flat_max_len, "flat baseline input truncation");
    app.add_option("--kind", rc.kind, "synthetic task kind: keyword|xor");
    app.add_option("--policy", rc.policy, "signal position policy: uniform|late");
    app.add_option("--n-docs", rc.n_docs, "synthetic corpus size");
    app.add_option("--synth-m", rc.synth_m, "synthetic sentences per document");
    app.add_option("--synth-k", rc.synth_k, "synthetic words per sentence");
    app.add_option("--synth-vocab", rc.synth_vocab, "synthetic filler vocabulary size");
    app.add_option("--late-boundary", rc.late_boundary, "first token index eligible for late signals");
    app.add_option("--bench-m", rc.bench_m, "comma-separated sentence counts for the benchmark grid");
    app.add_option("--bench-k", rc.bench_k, "benchmark sentence length");
    app.add_option("--bench-d", rc.bench_d, "benchmark hidden dimension");
    app.add_option("--bench-heads", rc.bench_heads, "benchmark attention heads");
    app.add_option("--bench-repeats", rc.bench_repeats, "benchmark repeats per shape (>= 5)");
    app.add_flag("--tiny", rc.tiny, "gradcheck: use the built-in miniature full model");
    app.add_option("--gradcheck-h", rc.gradcheck_h, "finite difference step");
    app.add_option("--gradcheck-tol", rc.gradcheck_tol, "relative tolerance");

    auto* train_cmd = app.add_subcommand("train", "train a model and write history, checkpoint, vocab");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    auto* bench_cmd = app.add_subcommand("bench", "run the scaling benchmark and write the cost CSV");
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of the reverse-mode gradients");
    app.add_subcommand("synth", "generate a synthetic JSONL corpus");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 1;
    }

    try {
        check_thread_cap();
        if (!rc.config_path.empty()) apply_config_file(defaults, rc, app, rc.config_path);
        if (train_cmd->parsed()) {
            rc.subcommand = "train";
            return run_train(rc);
        }
        if (eval_cmd->parsed()) {
            rc.subcommand = "eval";
            return run_eval(rc);
        }
        if (bench_cmd->parsed()) {
            rc.subcommand = "bench";
            return run_bench(rc);
        }
        if (gradcheck_cmd->parsed()) {
            rc.subcommand = "gradcheck";
            return run_gradcheck(rc);
        }
        rc.subcommand = "synth";
        return run_synth(rc);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const bench_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
