#pragma once

#include <string>
#include <vector>

#include "sumlab/common.hpp"

namespace sumlab {

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct CorpusRouge {
    double rouge1 = 0.0;  // mean F1 x 100
    double rouge2 = 0.0;
    double rougeL = 0.0;
    std::size_t n_pairs = 0;
};

/// Clipped n-gram overlap (multiset intersection). Empty n-gram sets on
/// either side yield a zero score.
RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n);

/// Longest common subsequence over the whole token sequences.
RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference);

/// Arithmetic mean of per-pair F1 scores, scaled by 100.
CorpusRouge evaluate_corpus(
    const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>& pairs);

/// Convenience: tokenize both texts with the shared tokenizer, then score.
RougeScore rouge_n_text(const std::string& candidate, const std::string& reference, int n);
RougeScore rouge_l_text(const std::string& candidate, const std::string& reference);
CorpusRouge evaluate_corpus_text(
    const std::vector<std::pair<std::string, std::string>>& candidate_reference_pairs);

}  // namespace sumlab
