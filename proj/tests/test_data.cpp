#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "sumlab/data.hpp"
#include "sumlab/text.hpp"

using namespace sumlab;

namespace {

std::vector<Example> numbered_corpus(int n) {
    std::vector<Example> corpus;
    for (int i = 0; i < n; ++i)
        corpus.push_back({"ex-" + std::to_string(i), "source text " + std::to_string(i) + ".",
                          "summary " + std::to_string(i)});
    return corpus;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("corpus file round-trip and load errors") {
    const auto path = temp_file("sumlab_corpus_test.jsonl");
    save_corpus(numbered_corpus(3), path.string());
    const auto loaded = load_corpus(path.string());
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0].id == "ex-0");
    CHECK(loaded[2].summary == "summary 2");

    {
        std::ofstream out(path);
        out << R"({"id":"a","source":"s","summary":"x"})" << "\n";
        out << R"({"id":"b","source":"s"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(load_corpus(path.string()),
                         doctest::Contains("line 2"), ParseError);

    {
        std::ofstream out(path);
        out << R"({"id":"a","source":"s","summary":"x"})" << "\n";
        out << R"({"id":"a","source":"t","summary":"y"})" << "\n";
    }
    CHECK_THROWS_AS(load_corpus(path.string()), IntegrityError);
    std::filesystem::remove(path);
}

TEST_CASE("split_corpus: sizes, determinism, partition") {
    const auto corpus = numbered_corpus(10);
    const auto s = split_corpus(corpus, {}, 42);
    CHECK(s.train.size() == 8);
    CHECK(s.eval.size() == 1);
    CHECK(s.test.size() == 1);

    const auto s2 = split_corpus(corpus, {}, 42);
    for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i].id == s2.train[i].id);
    CHECK(s.eval[0].id == s2.eval[0].id);
    CHECK(s.test[0].id == s2.test[0].id);

    const auto twelve = split_corpus(numbered_corpus(12), {}, 7);
    CHECK(twelve.train.size() == 10);  // remainder goes to train
    CHECK(twelve.eval.size() == 1);
    CHECK(twelve.test.size() == 1);

    // Disjoint union equals the corpus id set.
    const auto big = numbered_corpus(57);
    const auto sb = split_corpus(big, {}, 3);
    std::set<std::string> ids;
    for (const auto* part : {&sb.train, &sb.eval, &sb.test})
        for (const auto& ex : *part) CHECK(ids.insert(ex.id).second);
    CHECK(ids.size() == big.size());

    CHECK_THROWS_AS(split_corpus(numbered_corpus(9), {}, 1), InputError);
}

TEST_CASE("corpus_stats: novel bigram hand case") {
    std::vector<Example> one{{"a", "the cat sat on the mat", "the cat slept well"}};
    const auto stats = corpus_stats(one);
    CHECK(stats.n_examples == 1);
    CHECK(stats.avg_source_words == doctest::Approx(6.0));
    CHECK(stats.avg_summary_words == doctest::Approx(4.0));
    CHECK(stats.novel_bigram_pct == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-12));

    std::vector<Example> prefix{{"b", "alpha beta gamma delta", "alpha beta gamma"}};
    CHECK(corpus_stats(prefix).novel_bigram_pct == doctest::Approx(0.0));

    std::vector<Example> disjoint{{"c", "one two three", "four five six"}};
    CHECK(corpus_stats(disjoint).novel_bigram_pct == doctest::Approx(100.0));

    std::vector<Example> shorty{{"d", "one two three", "four"}};
    CHECK(corpus_stats(shorty).novel_bigram_pct == doctest::Approx(0.0));
}

TEST_CASE("novel bigram is 0 for substrings, 100 for disjoint") {
    for (int start = 0; start < 3; ++start) {
        const std::string source = "w1 w2 w3 w4 w5 w6 w7";
        const auto tokens = tokenize(source);
        std::string summary;
        for (int i = start; i < start + 4; ++i) {
            if (!summary.empty()) summary.push_back(' ');
            summary += tokens[static_cast<std::size_t>(i)];
        }
        std::vector<Example> corpus{{"s", source, summary}};
        CHECK(corpus_stats(corpus).novel_bigram_pct == doctest::Approx(0.0));
    }
}

TEST_CASE("synthetic corpus: determinism and construction rules") {
    SyntheticTaskConfig cfg;
    cfg.vocab_size = 40;
    cfg.n_examples = 12;
    cfg.source_len = 36;
    cfg.n_key_sents = 2;
    cfg.template_tokens = {"t1", "t2", "t3", "t4", "t5"};
    cfg.seed = 99;

    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    REQUIRE(a.size() == 12);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].source == b[i].source);
        CHECK(a[i].summary == b[i].summary);
    }

    for (const auto& ex : a) {
        const auto summary_tokens = tokenize(ex.summary);
        // template length 5 + 2 key sentences x 2 content tokens = 9.
        CHECK(summary_tokens.size() == 9);
        for (std::size_t i = 0; i < cfg.template_tokens.size(); ++i)
            CHECK(summary_tokens[i] == cfg.template_tokens[i]);
        // All key-content tokens appear in the source.
        const auto src_tokens = tokenize(ex.source);
        for (std::size_t i = cfg.template_tokens.size(); i < summary_tokens.size(); ++i)
            CHECK(std::find(src_tokens.begin(), src_tokens.end(), summary_tokens[i]) !=
                  src_tokens.end());
    }

    cfg.n_examples = 1;
    const auto single = generate_synthetic(cfg);
    REQUIRE(single.size() == 1);
    CHECK(tokenize(single[0].summary)[0] == "t1");

    SyntheticTaskConfig bad = cfg;
    bad.vocab_size = static_cast<int>(bad.template_tokens.size()) + 10;
    CHECK_THROWS_AS(generate_synthetic(bad), InputError);
}
