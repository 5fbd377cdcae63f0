#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace {

namespace fs = std::filesystem;

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

const char* cli_binary() { return std::getenv("SUMLAB_BIN"); }

CliResult run_cli(const std::string& args, const fs::path& workdir) {
    const fs::path out_file = workdir / "cli_output.txt";
    std::ostringstream cmd;
    cmd << "cd " << workdir << " && " << cli_binary() << " " << args << " > "
        << out_file << " 2>&1";
    const int raw = std::system(cmd.str().c_str());
    CliResult result;
    result.exit_code = WEXITSTATUS(raw);
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    result.output = ss.str();
    return result;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("sumlab_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::string kSynthFlags =
    "--n-examples 40 --vocab-size 60 --source-len 30 --key-sents 2 "
    "--template \"t1 t2 t3 t4\" --seed 5";

const std::string kTrainFlags =
    "--seed 3 --epochs 12 --batch-size 8 --lr 2e-3 --warmup 20 --d-model 32 --n-heads 4 "
    "--d-ffn 64 --enc-layers 1 --dec-layers 1 --max-src-len 48 --max-tgt-len 16 "
    "--max-guid-len 16 --dropout 0.0 --eval-every 4";

}  // namespace

TEST_CASE("cli: synth determinism, stats, corpus errors" * doctest::skip(cli_binary() == nullptr)) {
    const auto dir = fresh_dir("synth");

    auto r1 = run_cli("synth --out a.jsonl " + kSynthFlags, dir);
    CHECK(r1.exit_code == 0);
    auto r2 = run_cli("synth --out b.jsonl " + kSynthFlags, dir);
    CHECK(r2.exit_code == 0);
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
    CHECK(fs::exists(dir / "a.jsonl.manifest.json"));

    auto stats = run_cli("stats --corpus a.jsonl", dir);
    CHECK(stats.exit_code == 0);
    CHECK(stats.output.find("novel_bigram_pct") != std::string::npos);

    auto missing = run_cli("stats --corpus nope.jsonl", dir);
    CHECK(missing.exit_code == 2);
    CHECK(missing.output.find("--corpus") != std::string::npos);

    fs::remove_all(dir);
}

TEST_CASE("cli: stats hand values on a one-example corpus" *
          doctest::skip(cli_binary() == nullptr)) {
    const auto dir = fresh_dir("stats");
    {
        std::ofstream out(dir / "one.jsonl");
        out << R"({"id":"a","source":"the cat sat on the mat","summary":"the cat slept well"})"
            << "\n";
    }
    auto r = run_cli("stats --corpus one.jsonl --out report.json", dir);
    CHECK(r.exit_code == 0);
    const std::string report = slurp(dir / "report.json");
    CHECK(report.find("66.6666") != std::string::npos);
    CHECK(report.find("\"n_examples\": 1") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli: train, generate, evaluate pipeline" *
          doctest::skip(cli_binary() == nullptr)) {
    const auto dir = fresh_dir("pipeline");
    REQUIRE(run_cli("synth --out corpus.jsonl " + kSynthFlags, dir).exit_code == 0);

    auto train = run_cli("train --corpus corpus.jsonl --out run " + kTrainFlags, dir);
    CHECK(train.exit_code == 0);
    CHECK(fs::exists(dir / "run" / "checkpoint.bin"));
    CHECK(fs::exists(dir / "run" / "train_log.jsonl"));
    CHECK(fs::exists(dir / "run" / "manifest.json"));
    CHECK(fs::exists(dir / "run" / "vocab.txt"));

    // Deterministic generation; width 1 takes the greedy path.
    auto gen = run_cli(
        "generate --checkpoint run/checkpoint.bin --corpus corpus.jsonl --split test "
        "--beam-width 1 --max-len 16 --out cand.jsonl",
        dir);
    CHECK(gen.exit_code == 0);
    auto gen2 = run_cli(
        "generate --checkpoint run/checkpoint.bin --corpus corpus.jsonl --split test "
        "--beam-width 1 --max-len 16 --out cand2.jsonl",
        dir);
    CHECK(gen2.exit_code == 0);
    CHECK(slurp(dir / "cand.jsonl") == slurp(dir / "cand2.jsonl"));

    auto eval = run_cli(
        "evaluate --candidates cand.jsonl --corpus corpus.jsonl --split test --out rep.json",
        dir);
    CHECK(eval.exit_code == 0);
    CHECK(slurp(dir / "rep.json").find("rouge1") != std::string::npos);

    // Missing checkpoint is a usage error.
    auto bad = run_cli("generate --checkpoint missing.bin --corpus corpus.jsonl", dir);
    CHECK(bad.exit_code == 2);

    fs::remove_all(dir);
}

TEST_CASE("cli: self-evaluation of references scores 100" *
          doctest::skip(cli_binary() == nullptr)) {
    const auto dir = fresh_dir("selfeval");
    REQUIRE(run_cli("synth --out corpus.jsonl " + kSynthFlags, dir).exit_code == 0);
    {
        // Candidates = the references themselves.
        std::ifstream in(dir / "corpus.jsonl");
        std::ofstream out(dir / "cand.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            const auto id_pos = line.find("\"id\":\"");
            const auto id_end = line.find('"', id_pos + 6);
            const std::string id = line.substr(id_pos + 6, id_end - id_pos - 6);
            const auto sum_pos = line.find("\"summary\":\"");
            const auto sum_end = line.find('"', sum_pos + 11);
            const std::string summary = line.substr(sum_pos + 11, sum_end - sum_pos - 11);
            out << "{\"id\":\"" << id << "\",\"candidate\":\"" << summary << "\"}\n";
        }
    }
    auto r = run_cli("evaluate --candidates cand.jsonl --corpus corpus.jsonl --split all", dir);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("rouge1 100.00") != std::string::npos);

    // Mismatched id sets are an integrity failure.
    {
        std::ofstream out(dir / "short.jsonl");
        out << R"({"id":"syn-0","candidate":"whatever"})" << "\n";
    }
    auto bad = run_cli("evaluate --candidates short.jsonl --corpus corpus.jsonl --split all", dir);
    CHECK(bad.exit_code == 1);

    fs::remove_all(dir);
}

TEST_CASE("cli: oracle guidance requires an oracle file first" *
          doctest::skip(cli_binary() == nullptr)) {
    const auto dir = fresh_dir("oracle_mode");
    REQUIRE(run_cli("synth --out corpus.jsonl " + kSynthFlags, dir).exit_code == 0);
    auto r = run_cli("train --corpus corpus.jsonl --guidance oracle " + kTrainFlags, dir);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("oracle") != std::string::npos);

    REQUIRE(run_cli("oracle --corpus corpus.jsonl --out oracle.jsonl", dir).exit_code == 0);
    auto ok = run_cli("train --corpus corpus.jsonl --guidance oracle --oracle-file oracle.jsonl "
                      "--out run_o " + kTrainFlags,
                      dir);
    CHECK(ok.exit_code == 0);
    fs::remove_all(dir);
}

TEST_CASE("cli: cluster on an external embedding file over the k grid" *
          doctest::skip(cli_binary() == nullptr)) {
    const auto dir = fresh_dir("cluster");
    {
        // Three tight blobs in 3-D, 8 points each.
        std::ofstream out(dir / "emb.jsonl");
        int id = 0;
        for (double cx : {0.0, 20.0, 40.0})
            for (int i = 0; i < 8; ++i) {
                out << "{\"id\":\"e" << id++ << "\",\"embedding\":[" << cx + 0.1 * i << ","
                    << 0.05 * i << "," << cx - 0.07 * i << "]}\n";
            }
    }
    auto r = run_cli("cluster --embeddings emb.jsonl --k-list 1,2,4,8,16 --gap-b 10 --seed 4 "
                     "--out clus",
                     dir);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "clus" / "gap_report.json"));
    for (int k : {1, 2, 4, 8, 16})
        CHECK(fs::exists(dir / "clus" / ("clusters_k" + std::to_string(k) + ".csv")));

    auto rerun = run_cli("cluster --embeddings emb.jsonl --k-list 1,2,4,8,16 --gap-b 10 --seed 4 "
                         "--out clus2",
                         dir);
    CHECK(rerun.exit_code == 0);
    CHECK(slurp(dir / "clus" / "gap_report.json") == slurp(dir / "clus2" / "gap_report.json"));
    fs::remove_all(dir);
}

TEST_CASE("cli: 64-bit training runs are byte-identical" *
          doctest::skip(cli_binary() == nullptr)) {
    const auto dir = fresh_dir("repro");
    REQUIRE(run_cli("synth --out corpus.jsonl " + kSynthFlags, dir).exit_code == 0);
    const std::string flags =
        "--corpus corpus.jsonl --guidance reference --precision 64 " + kTrainFlags;
    REQUIRE(run_cli("train " + flags + " --out r1", dir).exit_code == 0);
    REQUIRE(run_cli("train " + flags + " --out r2", dir).exit_code == 0);
    CHECK(slurp(dir / "r1" / "checkpoint.bin") == slurp(dir / "r2" / "checkpoint.bin"));
    CHECK(slurp(dir / "r1" / "train_log.jsonl") == slurp(dir / "r2" / "train_log.jsonl"));
    CHECK_FALSE(slurp(dir / "r1" / "checkpoint.bin").empty());
    fs::remove_all(dir);
}
