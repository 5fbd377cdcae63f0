#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sumlab/common.hpp"

namespace sumlab {

struct Example {
    std::string id;
    std::string source;
    std::string summary;
};

struct CorpusSplits {
    std::vector<Example> train;
    std::vector<Example> eval;
    std::vector<Example> test;
};

struct CorpusStats {
    std::size_t n_examples = 0;
    double avg_source_words = 0.0;
    double avg_source_sents = 0.0;
    double avg_summary_words = 0.0;
    double avg_summary_sents = 0.0;
    double novel_bigram_pct = 0.0;  // in [0, 100]
};

struct SplitRatios {
    double train = 0.8;
    double eval = 0.1;
    double test = 0.1;
};

struct SyntheticTaskConfig {
    int vocab_size = 120;            // distinct word types the generator may emit
    int n_examples = 100;
    int source_len = 48;             // tokens per source document
    int n_key_sents = 2;
    std::vector<std::string> template_tokens;  // shared summary prefix
    std::uint64_t seed = 0;
};

// Content tokens carried by each marked key sentence.
inline constexpr int kKeyContentTokens = 2;

/// One JSON record per line with fields id/source/summary.
std::vector<Example> load_corpus(const std::string& path);
void save_corpus(const std::vector<Example>& corpus, const std::string& path);

/// Deterministic shuffle under seed, then floor-sized eval/test partitions
/// with the remainder going to train.
CorpusSplits split_corpus(const std::vector<Example>& corpus, const SplitRatios& ratios,
                          std::uint64_t seed);

CorpusStats corpus_stats(const std::vector<Example>& corpus);

/// Template task: sources hold marked key sentences among noise; summaries
/// are the shared template followed by the key content. Pure function of
/// the config (including seed).
std::vector<Example> generate_synthetic(const SyntheticTaskConfig& cfg);

}  // namespace sumlab
