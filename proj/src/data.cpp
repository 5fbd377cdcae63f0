#include "sumlab/data.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include "sumlab/text.hpp"

namespace sumlab {

using nlohmann::json;

std::vector<Example> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::vector<Example> corpus;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        for (const char* field : {"id", "source", "summary"})
            if (!record.contains(field) || !record[field].is_string())
                throw ParseError("corpus line " + std::to_string(line_no) +
                                 ": missing string field '" + std::string(field) + "'");
        Example ex{record["id"].get<std::string>(), record["source"].get<std::string>(),
                   record["summary"].get<std::string>()};
        if (ex.id.empty() || ex.source.empty() || ex.summary.empty())
            throw ParseError("corpus line " + std::to_string(line_no) + ": empty field");
        if (!seen_ids.insert(ex.id).second)
            throw IntegrityError("duplicate example id '" + ex.id + "' at line " +
                                 std::to_string(line_no));
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

void save_corpus(const std::vector<Example>& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open corpus file for writing: " + path);
    for (const auto& ex : corpus) {
        json record{{"id", ex.id}, {"source", ex.source}, {"summary", ex.summary}};
        out << record.dump() << "\n";
    }
    if (!out) throw IoError("failed writing corpus file: " + path);
}

CorpusSplits split_corpus(const std::vector<Example>& corpus, const SplitRatios& ratios,
                          std::uint64_t seed) {
    if (std::abs(ratios.train + ratios.eval + ratios.test - 1.0) > 1e-9)
        throw InputError("split ratios must sum to 1");
    if (corpus.size() < 10)
        throw InputError("split_corpus needs at least 10 examples, got " +
                         std::to_string(corpus.size()));

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const auto n = corpus.size();
    const auto n_eval = static_cast<std::size_t>(std::floor(ratios.eval * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(n)));
    const auto n_train = n - n_eval - n_test;  // remainder goes to train

    CorpusSplits splits;
    splits.train.reserve(n_train);
    splits.eval.reserve(n_eval);
    splits.test.reserve(n_test);
    for (std::size_t i = 0; i < n; ++i) {
        const Example& ex = corpus[order[i]];
        if (i < n_train)
            splits.train.push_back(ex);
        else if (i < n_train + n_eval)
            splits.eval.push_back(ex);
        else
            splits.test.push_back(ex);
    }
    return splits;
}

namespace {

std::set<std::pair<std::string, std::string>> bigram_set(const std::vector<std::string>& tokens) {
    std::set<std::pair<std::string, std::string>> bigrams;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
        bigrams.emplace(tokens[i], tokens[i + 1]);
    return bigrams;
}

}  // namespace

CorpusStats corpus_stats(const std::vector<Example>& corpus) {
    if (corpus.empty()) throw InputError("corpus_stats: empty corpus");
    CorpusStats stats;
    stats.n_examples = corpus.size();
    double novel_sum = 0.0;
    for (const auto& ex : corpus) {
        const auto src_tokens = tokenize(ex.source);
        const auto sum_tokens = tokenize(ex.summary);
        stats.avg_source_words += static_cast<double>(src_tokens.size());
        stats.avg_summary_words += static_cast<double>(sum_tokens.size());
        stats.avg_source_sents += static_cast<double>(split_sentences(ex.source).size());
        stats.avg_summary_sents += static_cast<double>(split_sentences(ex.summary).size());

        if (sum_tokens.size() >= 2) {
            const auto src_bigrams = bigram_set(src_tokens);
            std::size_t novel = 0;
            const std::size_t total = sum_tokens.size() - 1;
            for (std::size_t i = 0; i + 1 < sum_tokens.size(); ++i)
                if (!src_bigrams.count({sum_tokens[i], sum_tokens[i + 1]})) ++novel;
            novel_sum += 100.0 * static_cast<double>(novel) / static_cast<double>(total);
        }
    }
    const double n = static_cast<double>(corpus.size());
    stats.avg_source_words /= n;
    stats.avg_source_sents /= n;
    stats.avg_summary_words /= n;
    stats.avg_summary_sents /= n;
    stats.novel_bigram_pct = novel_sum / n;
    return stats;
}

std::vector<Example> generate_synthetic(const SyntheticTaskConfig& cfg) {
    if (cfg.template_tokens.empty())
        throw InputError("synthetic task: template must be non-empty");
    if (cfg.vocab_size <= static_cast<int>(cfg.template_tokens.size()) + 10)
        throw InputError("synthetic task: vocab_size must exceed template length + 10");
    if (cfg.n_key_sents < 1) throw InputError("synthetic task: n_key_sents must be >= 1");
    if (cfg.n_examples < 1) throw InputError("synthetic task: n_examples must be >= 1");

    // Word budget: template tokens plus the key marker are fixed types; the
    // remainder splits evenly between key-content and noise pools.
    const int remaining = cfg.vocab_size - static_cast<int>(cfg.template_tokens.size()) - 1;
    const int n_content = remaining / 2;
    const int n_noise = remaining - n_content;

    const auto word = [](const char* prefix, int i) {
        return std::string(prefix) + (i < 10 ? "0" : "") + std::to_string(i);
    };
    std::vector<std::string> content_pool, noise_pool;
    for (int i = 0; i < n_content; ++i) content_pool.push_back(word("c", i));
    for (int i = 0; i < n_noise; ++i) noise_pool.push_back(word("x", i));

    Rng rng(cfg.seed);
    std::vector<Example> corpus;
    corpus.reserve(static_cast<std::size_t>(cfg.n_examples));
    const int key_len = 1 + kKeyContentTokens;  // marker + content
    constexpr int kNoiseSentLen = 6;

    for (int e = 0; e < cfg.n_examples; ++e) {
        // Key content for this example.
        std::vector<std::vector<std::string>> key_sents;
        std::vector<std::string> key_content;
        for (int k = 0; k < cfg.n_key_sents; ++k) {
            std::vector<std::string> sent{"key"};
            for (int j = 0; j < kKeyContentTokens; ++j) {
                const auto& w = content_pool[rng.below(content_pool.size())];
                sent.push_back(w);
                key_content.push_back(w);
            }
            key_sents.push_back(std::move(sent));
        }

        // Noise sentences fill the source up to source_len tokens, with the
        // key sentences inserted at seeded positions.
        const int key_tokens = cfg.n_key_sents * (key_len + 1);  // + '.' terminator
        int noise_budget = cfg.source_len - key_tokens;
        std::vector<std::vector<std::string>> sentences;
        while (noise_budget > 0) {
            const int len = std::min(kNoiseSentLen, std::max(1, noise_budget - 1));
            std::vector<std::string> sent;
            for (int j = 0; j < len; ++j) sent.push_back(noise_pool[rng.below(noise_pool.size())]);
            noise_budget -= len + 1;
            sentences.push_back(std::move(sent));
        }
        for (auto& ks : key_sents) {
            const std::size_t at = rng.below(sentences.size() + 1);
            sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at), std::move(ks));
        }

        std::string source;
        for (const auto& sent : sentences) {
            for (const auto& w : sent) {
                source += w;
                source.push_back(' ');
            }
            source += ".";
            source.push_back(' ');
        }
        if (!source.empty()) source.pop_back();

        std::string summary;
        for (const auto& w : cfg.template_tokens) {
            summary += w;
            summary.push_back(' ');
        }
        for (const auto& w : key_content) {
            summary += w;
            summary.push_back(' ');
        }
        if (!summary.empty()) summary.pop_back();

        corpus.push_back({"syn-" + std::to_string(e), std::move(source), std::move(summary)});
    }
    return corpus;
}

}  // namespace sumlab
