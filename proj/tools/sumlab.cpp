// Batch command-line surface for the summarization lab: synthetic corpus
// generation, training, generation, evaluation, statistics, clustering and
// oracle extraction. Every run writes a manifest next to its outputs and is
// byte-reproducible under identical flags and seed.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sumlab/cluster.hpp"
#include "sumlab/data.hpp"
#include "sumlab/decode.hpp"
#include "sumlab/extractive.hpp"
#include "sumlab/metrics.hpp"
#include "sumlab/model.hpp"
#include "sumlab/text.hpp"
#include "sumlab/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sumlab;

namespace {

constexpr const char* kArtifactVersion = "sumlab-0.1.0";
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : Error {
    using Error::Error;
};

void write_text_file(const std::string& path, const std::string& content) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("failed writing: " + path);
}

/// Manifest goes next to the outputs before any long computation starts.
void write_manifest(const std::string& out_path, bool out_is_dir, const std::string& command,
                    const json& config) {
    json manifest;
    manifest["artifact_version"] = kArtifactVersion;
    manifest["command"] = command;
    manifest["config"] = config;
    const fs::path p = out_is_dir ? fs::path(out_path) / "manifest.json"
                                  : fs::path(out_path + ".manifest.json");
    write_text_file(p.string(), manifest.dump(2) + "\n");
}

void require_input_file(const std::string& path, const std::string& flag) {
    if (path.empty()) throw UsageError(flag + ": a value is required");
    if (!fs::exists(path)) throw UsageError(flag + ": no such file: " + path);
}

std::vector<Example> pick_split(const std::vector<Example>& corpus, const std::string& split,
                                std::uint64_t split_seed) {
    if (split == "all") return corpus;
    const CorpusSplits splits = split_corpus(corpus, {}, split_seed);
    if (split == "train") return splits.train;
    if (split == "eval") return splits.eval;
    if (split == "test") return splits.test;
    throw UsageError("--split: expected train, eval, test or all, got '" + split + "'");
}

Vocabulary vocab_from_examples(const std::vector<Example>& examples, int max_size, int min_freq) {
    std::vector<std::string> texts;
    texts.reserve(2 * examples.size());
    for (const auto& ex : examples) {
        texts.push_back(ex.source);
        texts.push_back(ex.summary);
    }
    return build_vocab(texts, max_size, min_freq);
}

json rouge_to_json(const CorpusRouge& r) {
    return json{{"rouge1", r.rouge1}, {"rouge2", r.rouge2}, {"rougeL", r.rougeL},
                {"n_pairs", r.n_pairs}};
}

// ------------------------------------------------------------------
// sumlab synth
// ------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    SyntheticTaskConfig cfg;
    std::string template_text = "the patient was diagnosed with";
};

int cmd_synth(const SynthArgs& args) {
    SyntheticTaskConfig cfg = args.cfg;
    cfg.template_tokens = tokenize(args.template_text);
    json config{{"out", args.out},
                {"vocab_size", cfg.vocab_size},
                {"n_examples", cfg.n_examples},
                {"source_len", cfg.source_len},
                {"key_sents", cfg.n_key_sents},
                {"template", args.template_text},
                {"seed", cfg.seed}};
    write_manifest(args.out, false, "synth", config);
    save_corpus(generate_synthetic(cfg), args.out);
    return 0;
}

// ------------------------------------------------------------------
// sumlab stats
// ------------------------------------------------------------------

int cmd_stats(const std::string& corpus_path, const std::string& out) {
    require_input_file(corpus_path, "--corpus");
    const auto corpus = load_corpus(corpus_path);
    const CorpusStats stats = corpus_stats(corpus);
    json report{{"n_examples", stats.n_examples},
                {"avg_source_words", stats.avg_source_words},
                {"avg_source_sents", stats.avg_source_sents},
                {"avg_summary_words", stats.avg_summary_words},
                {"avg_summary_sents", stats.avg_summary_sents},
                {"novel_bigram_pct", stats.novel_bigram_pct}};
    if (out.empty()) {
        std::cout << report.dump(2) << "\n";
    } else {
        write_manifest(out, false, "stats", json{{"corpus", corpus_path}, {"out", out}});
        write_text_file(out, report.dump(2) + "\n");
    }
    return 0;
}

// ------------------------------------------------------------------
// sumlab oracle
// ------------------------------------------------------------------

int cmd_oracle(const std::string& corpus_path, const std::string& out, int max_sents) {
    require_input_file(corpus_path, "--corpus");
    json config{{"corpus", corpus_path}, {"out", out}, {"max_sents", max_sents}};
    write_manifest(out, false, "oracle", config);
    const auto corpus = load_corpus(corpus_path);
    std::vector<Example> oracle_corpus;
    oracle_corpus.reserve(corpus.size());
    for (const auto& ex : corpus) {
        const auto sents = split_sentences(ex.source);
        const auto sel = oracle_extract(sents, ex.summary, static_cast<std::size_t>(max_sents));
        // Keep corpus format loadable: an empty selection falls back to the
        // first sentence so the record stays non-empty.
        const std::string text = sel.text.empty() ? sents.front() : sel.text;
        oracle_corpus.push_back({ex.id, ex.source, text});
    }
    save_corpus(oracle_corpus, out);
    return 0;
}

// ------------------------------------------------------------------
// sumlab train
// ------------------------------------------------------------------

struct TrainArgs {
    std::string corpus;
    std::string out = "run";
    std::string guidance = "none";
    std::string oracle_file;
    std::uint64_t split_seed = 0;
    TrainConfig tcfg;
    ModelConfig mcfg;
    int vocab_max = 10000;
    int vocab_min_freq = 1;
};

template <typename S>
int run_train(const TrainArgs& args) {
    const auto corpus = load_corpus(args.corpus);
    const CorpusSplits splits = split_corpus(corpus, {}, args.split_seed);

    Vocabulary vocab = vocab_from_examples(splits.train, args.vocab_max, args.vocab_min_freq);
    ModelConfig mcfg = args.mcfg;
    mcfg.vocab_size = vocab.size();
    mcfg.guidance_enabled = args.tcfg.guidance_mode != GuidanceMode::kNone;
    mcfg.validate();

    fs::create_directories(args.out);
    vocab.save((fs::path(args.out) / "vocab.txt").string());

    GuidancePool pool = GuidancePool::from_train_split(splits.train);
    if (args.tcfg.guidance_mode == GuidanceMode::kOracle)
        pool.attach_oracle(load_corpus(args.oracle_file));

    Rng init_rng(args.tcfg.seed);
    Model<S> model(mcfg, init_rng);
    Trainer<S> trainer(model, vocab, args.tcfg);

    const std::string log_path = (fs::path(args.out) / "train_log.jsonl").string();
    const std::string ckpt_path = (fs::path(args.out) / "checkpoint.bin").string();
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot open log for writing: " + log_path);

    const bool guided = args.tcfg.guidance_mode != GuidanceMode::kNone;
    const TrainResult result =
        trainer.run(splits.train, splits.eval, guided ? &pool : nullptr, &log, ckpt_path);

    json summary{{"steps_run", result.steps_run},
                 {"final_train_loss", result.final_train_loss},
                 {"best_train_loss", result.best_train_loss},
                 {"best_eval_rouge1", result.best_eval_rouge1},
                 {"best_eval_step", result.best_eval_step},
                 {"diverged", result.diverged}};
    write_text_file((fs::path(args.out) / "train_summary.json").string(), summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    if (result.diverged) {
        std::cerr << "training diverged; the last improving checkpoint was kept\n";
        return kExitRuntime;
    }
    return 0;
}

int cmd_train(const TrainArgs& args_in) {
    TrainArgs args = args_in;
    require_input_file(args.corpus, "--corpus");
    args.tcfg.guidance_mode = parse_guidance_mode(args.guidance);
    if (args.tcfg.guidance_mode == GuidanceMode::kOracle) {
        if (args.oracle_file.empty())
            throw UsageError(
                "--guidance oracle needs --oracle-file; run `sumlab oracle` first to build one");
        require_input_file(args.oracle_file, "--oracle-file");
    }
    args.tcfg.validate();

    json config{{"corpus", args.corpus},
                {"out", args.out},
                {"guidance", args.guidance},
                {"oracle_file", args.oracle_file},
                {"split_seed", args.split_seed},
                {"seed", args.tcfg.seed},
                {"epochs", args.tcfg.epochs},
                {"batch_size", args.tcfg.batch_size},
                {"lr", args.tcfg.lr_peak},
                {"warmup", args.tcfg.warmup_steps},
                {"weight_decay", args.tcfg.weight_decay},
                {"eval_interval_epochs", args.tcfg.eval_interval_epochs},
                {"precision", args.tcfg.precision},
                {"d_model", args.mcfg.d_model},
                {"n_heads", args.mcfg.n_heads},
                {"enc_layers", args.mcfg.n_enc_layers},
                {"dec_layers", args.mcfg.n_dec_layers},
                {"d_ffn", args.mcfg.d_ffn},
                {"max_src_len", args.mcfg.max_src_len},
                {"max_tgt_len", args.mcfg.max_tgt_len},
                {"max_guid_len", args.mcfg.max_guid_len},
                {"dropout", args.mcfg.dropout_rate},
                {"vocab_max", args.vocab_max},
                {"vocab_min_freq", args.vocab_min_freq}};
    fs::create_directories(args.out);
    write_manifest(args.out, true, "train", config);

    return args.tcfg.precision == 64 ? run_train<double>(args) : run_train<float>(args);
}

// ------------------------------------------------------------------
// sumlab generate
// ------------------------------------------------------------------

struct GenerateArgs {
    std::string checkpoint;
    std::string corpus;
    std::string split = "test";
    std::string out = "candidates.jsonl";
    std::string oracle_file;
    std::uint64_t split_seed = 0;
    std::uint64_t seed = 0;
    int beam_width = 6;
    int max_len = 128;
};

template <typename S>
int run_generate(const GenerateArgs& args, const CheckpointInfo& info) {
    auto loaded = load_checkpoint<S>(args.checkpoint);
    const Model<S>& model = loaded.model;

    const fs::path vocab_path = fs::path(args.checkpoint).parent_path() / "vocab.txt";
    if (!fs::exists(vocab_path))
        throw UsageError("--checkpoint: expected the training vocabulary at " +
                         vocab_path.string());
    const Vocabulary vocab = Vocabulary::load(vocab_path.string());
    if (vocab.size() != model.config().vocab_size)
        throw IntegrityError("vocabulary size does not match the checkpoint");

    const auto corpus = load_corpus(args.corpus);
    const auto examples = pick_split(corpus, args.split, args.split_seed);
    if (examples.empty()) throw InputError("selected split is empty");

    const GuidanceMode mode = parse_guidance_mode(info.guidance_mode);
    GuidancePool pool = GuidancePool::from_train_split(
        mode == GuidanceMode::kNone ? examples : pick_split(corpus, "train", args.split_seed));
    if (mode == GuidanceMode::kOracle) {
        if (args.oracle_file.empty())
            throw UsageError(
                "--oracle-file is required to decode an oracle-guided checkpoint");
        require_input_file(args.oracle_file, "--oracle-file");
        pool.attach_oracle(load_corpus(args.oracle_file));
    }

    const auto tokens = tokenize_split(examples, vocab, model.config());
    Rng guid_rng(args.seed ^ detail::kEvalGuidanceStream);
    std::ostringstream lines;
    for (const auto& ex : tokens) {
        std::vector<int> guid_ids;
        if (mode != GuidanceMode::kNone) {
            const std::string& text = sample_guidance(pool, ex.id, mode, guid_rng);
            guid_ids = encode(vocab, tokenize(text), model.config().max_guid_len, true, true).ids;
        }
        const std::vector<int> out_ids =
            args.beam_width == 1
                ? greedy_decode(model, ex.src_ids, guid_ids, args.max_len)
                : beam_search(model, ex.src_ids, guid_ids, args.beam_width, args.max_len);
        json record{{"id", ex.id}, {"candidate", ids_to_text(vocab, out_ids)}};
        lines << record.dump() << "\n";
    }
    write_text_file(args.out, lines.str());
    return 0;
}

int cmd_generate(const GenerateArgs& args) {
    require_input_file(args.checkpoint, "--checkpoint");
    require_input_file(args.corpus, "--corpus");
    if (args.beam_width < 1) throw UsageError("--beam-width must be >= 1");
    if (args.max_len < 1) throw UsageError("--max-len must be >= 1");

    json config{{"checkpoint", args.checkpoint}, {"corpus", args.corpus},
                {"split", args.split},           {"split_seed", args.split_seed},
                {"seed", args.seed},             {"beam_width", args.beam_width},
                {"max_len", args.max_len},       {"out", args.out},
                {"oracle_file", args.oracle_file}};
    write_manifest(args.out, false, "generate", config);

    const CheckpointInfo info = peek_checkpoint(args.checkpoint);
    return info.precision == 64 ? run_generate<double>(args, info)
                                : run_generate<float>(args, info);
}

// ------------------------------------------------------------------
// sumlab evaluate
// ------------------------------------------------------------------

int cmd_evaluate(const std::string& candidates_path, const std::string& corpus_path,
                 const std::string& split, std::uint64_t split_seed, const std::string& out) {
    require_input_file(candidates_path, "--candidates");
    require_input_file(corpus_path, "--corpus");

    const auto references = pick_split(load_corpus(corpus_path), split, split_seed);

    // Candidate file: corpus-format lines with fields id/candidate.
    std::ifstream in(candidates_path, std::ios::binary);
    std::map<std::string, std::string> candidates;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("candidates line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!record.contains("id") || !record.contains("candidate"))
            throw ParseError("candidates line " + std::to_string(line_no) +
                             ": needs fields id and candidate");
        if (!candidates.emplace(record["id"].get<std::string>(),
                                record["candidate"].get<std::string>())
                 .second)
            throw IntegrityError("duplicate candidate id at line " + std::to_string(line_no));
    }

    if (candidates.size() != references.size())
        throw IntegrityError("candidate ids do not match the reference split: " +
                             std::to_string(candidates.size()) + " candidates vs " +
                             std::to_string(references.size()) + " references");
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(references.size());
    for (const auto& ex : references) {
        const auto it = candidates.find(ex.id);
        if (it == candidates.end())
            throw IntegrityError("no candidate for reference id '" + ex.id + "'");
        pairs.emplace_back(it->second, ex.summary);
    }

    const CorpusRouge rouge = evaluate_corpus_text(pairs);
    json report = rouge_to_json(rouge);
    {
        std::ostringstream pretty;
        pretty.setf(std::ios::fixed);
        pretty.precision(2);
        pretty << "rouge1 " << rouge.rouge1 << "  rouge2 " << rouge.rouge2 << "  rougeL "
               << rouge.rougeL << "  (" << rouge.n_pairs << " pairs)";
        std::cout << pretty.str() << "\n";
    }
    if (!out.empty()) {
        write_manifest(out, false, "evaluate",
                       json{{"candidates", candidates_path},
                            {"corpus", corpus_path},
                            {"split", split},
                            {"split_seed", split_seed},
                            {"out", out}});
        write_text_file(out, report.dump(2) + "\n");
    }
    return 0;
}

// ------------------------------------------------------------------
// sumlab cluster
// ------------------------------------------------------------------

struct ClusterArgs {
    std::string corpus;
    std::string checkpoint;
    std::string embeddings;
    std::string split = "train";
    std::string out = "cluster_out";
    std::string k_list = "1,2,4,8,16";
    std::uint64_t split_seed = 0;
    std::uint64_t seed = 0;
    int gap_b = 10;
};

std::vector<int> parse_k_list(const std::string& text) {
    std::vector<int> ks;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        ks.push_back(std::stoi(item));
    }
    if (ks.empty()) throw UsageError("--k-list: no k values given");
    return ks;
}

EmbeddingSet load_embedding_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embeddings file: " + path);
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("embeddings line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!record.contains("id") || !record.contains("embedding"))
            throw ParseError("embeddings line " + std::to_string(line_no) +
                             ": needs fields id and embedding");
        ids.push_back(record["id"].get<std::string>());
        rows.push_back(record["embedding"].get<std::vector<double>>());
        if (rows.back().size() != rows.front().size())
            throw ParseError("embeddings line " + std::to_string(line_no) +
                             ": inconsistent dimension");
    }
    if (rows.empty()) throw InputError("embeddings file is empty");
    EmbeddingSet set;
    set.ids = std::move(ids);
    set.vectors.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            set.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return set;
}

template <typename S>
EmbeddingSet embeddings_from_checkpoint(const ClusterArgs& args) {
    auto loaded = load_checkpoint<S>(args.checkpoint);
    const fs::path vocab_path = fs::path(args.checkpoint).parent_path() / "vocab.txt";
    if (!fs::exists(vocab_path))
        throw UsageError("--checkpoint: expected the training vocabulary at " +
                         vocab_path.string());
    const Vocabulary vocab = Vocabulary::load(vocab_path.string());
    const auto examples = pick_split(load_corpus(args.corpus), args.split, args.split_seed);
    std::vector<std::string> ids, summaries;
    for (const auto& ex : examples) {
        ids.push_back(ex.id);
        summaries.push_back(ex.summary);
    }
    return pool_summary_embeddings(loaded.model, vocab, ids, summaries);
}

int cmd_cluster(const ClusterArgs& args) {
    const std::vector<int> ks = parse_k_list(args.k_list);
    if (args.embeddings.empty() && args.checkpoint.empty())
        throw UsageError("cluster needs --embeddings or --checkpoint (with --corpus)");

    json config{{"corpus", args.corpus},       {"checkpoint", args.checkpoint},
                {"embeddings", args.embeddings}, {"split", args.split},
                {"split_seed", args.split_seed}, {"seed", args.seed},
                {"k_list", args.k_list},         {"gap_b", args.gap_b},
                {"out", args.out}};
    fs::create_directories(args.out);
    write_manifest(args.out, true, "cluster", config);

    EmbeddingSet set;
    if (!args.embeddings.empty()) {
        require_input_file(args.embeddings, "--embeddings");
        set = load_embedding_file(args.embeddings);
    } else {
        require_input_file(args.checkpoint, "--checkpoint");
        require_input_file(args.corpus, "--corpus");
        const CheckpointInfo info = peek_checkpoint(args.checkpoint);
        set = info.precision == 64 ? embeddings_from_checkpoint<double>(args)
                                   : embeddings_from_checkpoint<float>(args);
    }

    const Eigen::MatrixXd coords = project_2d(set);
    const GapReport gap = gap_statistic(set, ks, args.gap_b, args.seed);

    json report;
    report["chosen_k"] = gap.chosen_k;
    report["B"] = args.gap_b;
    report["per_k"] = json::array();
    for (std::size_t i = 0; i < gap.entries.size(); ++i) {
        const auto& entry = gap.entries[i];
        const ClusterReport cl = kmeans_restarts(set, entry.k, args.seed, 4);
        report["per_k"].push_back(json{{"k", entry.k},
                                       {"gap", entry.gap},
                                       {"sk", entry.sk},
                                       {"log_wk", entry.log_wk},
                                       {"inertia", cl.inertia},
                                       {"silhouette", cl.silhouette}});
        std::ostringstream csv;
        csv << "id,label,x,y\n";
        for (std::size_t r = 0; r < set.ids.size(); ++r)
            csv << set.ids[r] << ',' << cl.assignments[r] << ','
                << coords(static_cast<Eigen::Index>(r), 0) << ','
                << coords(static_cast<Eigen::Index>(r), 1) << "\n";
        write_text_file(
            (fs::path(args.out) / ("clusters_k" + std::to_string(entry.k) + ".csv")).string(),
            csv.str());
    }
    write_text_file((fs::path(args.out) / "gap_report.json").string(), report.dump(2) + "\n");
    std::cout << "chosen_k " << gap.chosen_k << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sumlab: a desk-scale guided summarization laboratory"};
    app.require_subcommand(1);

    // synth
    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic template-task corpus");
    synth_cmd->add_option("--out", synth.out, "output corpus file")->required();
    synth_cmd->add_option("--vocab-size", synth.cfg.vocab_size, "distinct word types");
    synth_cmd->add_option("--n-examples", synth.cfg.n_examples, "number of examples");
    synth_cmd->add_option("--source-len", synth.cfg.source_len, "tokens per source");
    synth_cmd->add_option("--key-sents", synth.cfg.n_key_sents, "key sentences per source");
    synth_cmd->add_option("--template", synth.template_text, "shared summary template text");
    synth_cmd->add_option("--seed", synth.cfg.seed, "generator seed");

    // stats
    std::string stats_corpus, stats_out;
    auto* stats_cmd = app.add_subcommand("stats", "corpus statistics report");
    stats_cmd->add_option("--corpus", stats_corpus, "corpus file")->required();
    stats_cmd->add_option("--out", stats_out, "report file (stdout when omitted)");

    // oracle
    std::string oracle_corpus, oracle_out;
    int oracle_max_sents = 5;
    auto* oracle_cmd = app.add_subcommand("oracle", "greedy extractive oracle summaries");
    oracle_cmd->add_option("--corpus", oracle_corpus, "corpus file")->required();
    oracle_cmd->add_option("--out", oracle_out, "oracle corpus output file")->required();
    oracle_cmd->add_option("--max-sents", oracle_max_sents, "selection budget");

    // train
    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "train a model on a corpus");
    train_cmd->add_option("--corpus", train.corpus, "corpus file")->required();
    train_cmd->add_option("--out", train.out, "output directory");
    train_cmd->add_option("--guidance", train.guidance, "none, reference or oracle");
    train_cmd->add_option("--oracle-file", train.oracle_file, "oracle corpus for oracle mode");
    train_cmd->add_option("--split-seed", train.split_seed, "corpus split seed");
    train_cmd->add_option("--seed", train.tcfg.seed, "training seed");
    train_cmd->add_option("--epochs", train.tcfg.epochs, "training epochs");
    train_cmd->add_option("--batch-size", train.tcfg.batch_size, "batch size");
    train_cmd->add_option("--lr", train.tcfg.lr_peak, "peak learning rate");
    train_cmd->add_option("--warmup", train.tcfg.warmup_steps, "warmup steps");
    train_cmd->add_option("--weight-decay", train.tcfg.weight_decay, "decoupled weight decay");
    train_cmd->add_option("--eval-every", train.tcfg.eval_interval_epochs,
                          "evaluation interval in epochs");
    train_cmd->add_option("--precision", train.tcfg.precision, "32 or 64");
    train_cmd->add_option("--d-model", train.mcfg.d_model, "hidden width");
    train_cmd->add_option("--n-heads", train.mcfg.n_heads, "attention heads");
    train_cmd->add_option("--enc-layers", train.mcfg.n_enc_layers, "encoder layers");
    train_cmd->add_option("--dec-layers", train.mcfg.n_dec_layers, "decoder layers");
    train_cmd->add_option("--d-ffn", train.mcfg.d_ffn, "feed-forward width");
    train_cmd->add_option("--max-src-len", train.mcfg.max_src_len, "max source tokens");
    train_cmd->add_option("--max-tgt-len", train.mcfg.max_tgt_len, "max target tokens");
    train_cmd->add_option("--max-guid-len", train.mcfg.max_guid_len, "max guidance tokens");
    train_cmd->add_option("--dropout", train.mcfg.dropout_rate, "dropout rate");
    train_cmd->add_option("--vocab-max", train.vocab_max, "vocabulary cap");
    train_cmd->add_option("--vocab-min-freq", train.vocab_min_freq, "vocabulary frequency floor");

    // generate
    GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate", "decode a split with a trained checkpoint");
    gen_cmd->add_option("--checkpoint", gen.checkpoint, "checkpoint file")->required();
    gen_cmd->add_option("--corpus", gen.corpus, "corpus file")->required();
    gen_cmd->add_option("--split", gen.split, "train, eval, test or all");
    gen_cmd->add_option("--split-seed", gen.split_seed, "corpus split seed");
    gen_cmd->add_option("--seed", gen.seed, "guidance sampling seed");
    gen_cmd->add_option("--beam-width", gen.beam_width, "beam width (1 = greedy)");
    gen_cmd->add_option("--max-len", gen.max_len, "maximum generated tokens");
    gen_cmd->add_option("--out", gen.out, "candidates output file");
    gen_cmd->add_option("--oracle-file", gen.oracle_file, "oracle corpus for oracle-guided models");

    // evaluate
    std::string eval_candidates, eval_corpus, eval_split = "all", eval_out;
    std::uint64_t eval_split_seed = 0;
    auto* eval_cmd = app.add_subcommand("evaluate", "score candidates against references");
    eval_cmd->add_option("--candidates", eval_candidates, "candidates file")->required();
    eval_cmd->add_option("--corpus", eval_corpus, "reference corpus file")->required();
    eval_cmd->add_option("--split", eval_split, "train, eval, test or all");
    eval_cmd->add_option("--split-seed", eval_split_seed, "corpus split seed");
    eval_cmd->add_option("--out", eval_out, "report file");

    // cluster
    ClusterArgs cluster;
    auto* cluster_cmd = app.add_subcommand("cluster", "summary-embedding cluster analysis");
    cluster_cmd->add_option("--corpus", cluster.corpus, "corpus file");
    cluster_cmd->add_option("--checkpoint", cluster.checkpoint, "checkpoint for the encoder");
    cluster_cmd->add_option("--embeddings", cluster.embeddings,
                            "externally supplied embedding file");
    cluster_cmd->add_option("--split", cluster.split, "corpus split to embed");
    cluster_cmd->add_option("--split-seed", cluster.split_seed, "corpus split seed");
    cluster_cmd->add_option("--seed", cluster.seed, "analysis seed");
    cluster_cmd->add_option("--k-list", cluster.k_list, "comma-separated k grid");
    cluster_cmd->add_option("--gap-b", cluster.gap_b, "reference sets for the gap statistic");
    cluster_cmd->add_option("--out", cluster.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*synth_cmd) return cmd_synth(synth);
        if (*stats_cmd) return cmd_stats(stats_corpus, stats_out);
        if (*oracle_cmd) return cmd_oracle(oracle_corpus, oracle_out, oracle_max_sents);
        if (*train_cmd) return cmd_train(train);
        if (*gen_cmd) return cmd_generate(gen);
        if (*eval_cmd)
            return cmd_evaluate(eval_candidates, eval_corpus, eval_split, eval_split_seed,
                                eval_out);
        if (*cluster_cmd) return cmd_cluster(cluster);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
