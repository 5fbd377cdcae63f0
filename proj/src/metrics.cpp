#include "sumlab/metrics.hpp"

#include <algorithm>
#include <map>

#include "sumlab/text.hpp"

namespace sumlab {

namespace {

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::map<std::vector<std::string>, long long> ngram_counts(const std::vector<std::string>& tokens,
                                                           int n) {
    std::map<std::vector<std::string>, long long> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i) +
                                              n)];
    return counts;
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int n) {
    if (n < 1) throw InputError("rouge_n: n must be >= 1");
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    long long cand_total = 0, ref_total = 0, overlap = 0;
    for (const auto& [g, c] : cand) cand_total += c;
    for (const auto& [g, c] : ref) ref_total += c;
    for (const auto& [g, c] : cand) {
        auto it = ref.find(g);
        if (it != ref.end()) overlap += std::min(c, it->second);
    }
    RougeScore score;
    if (cand_total == 0 || ref_total == 0) return score;
    score.precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
    score.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
    score.f1 = f1_of(score.precision, score.recall);
    return score;
}

RougeScore rouge_l(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference) {
    RougeScore score;
    const std::size_t m = candidate.size(), n = reference.size();
    if (m == 0 || n == 0) return score;
    if (m * n > 100000000ULL)
        throw InputError("rouge_l: inputs too long for the quadratic LCS table");

    // Two-row LCS table.
    std::vector<long long> prev(n + 1, 0), curr(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            if (candidate[i - 1] == reference[j - 1])
                curr[j] = prev[j - 1] + 1;
            else
                curr[j] = std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    const auto lcs = static_cast<double>(prev[n]);
    score.precision = lcs / static_cast<double>(m);
    score.recall = lcs / static_cast<double>(n);
    score.f1 = f1_of(score.precision, score.recall);
    return score;
}

CorpusRouge evaluate_corpus(
    const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>& pairs) {
    if (pairs.empty()) throw InputError("evaluate_corpus: no pairs");
    CorpusRouge out;
    out.n_pairs = pairs.size();
    for (const auto& [cand, ref] : pairs) {
        out.rouge1 += rouge_n(cand, ref, 1).f1;
        out.rouge2 += rouge_n(cand, ref, 2).f1;
        out.rougeL += rouge_l(cand, ref).f1;
    }
    const double n = static_cast<double>(pairs.size());
    out.rouge1 = 100.0 * out.rouge1 / n;
    out.rouge2 = 100.0 * out.rouge2 / n;
    out.rougeL = 100.0 * out.rougeL / n;
    return out;
}

RougeScore rouge_n_text(const std::string& candidate, const std::string& reference, int n) {
    return rouge_n(tokenize(candidate), tokenize(reference), n);
}

RougeScore rouge_l_text(const std::string& candidate, const std::string& reference) {
    return rouge_l(tokenize(candidate), tokenize(reference));
}

CorpusRouge evaluate_corpus_text(
    const std::vector<std::pair<std::string, std::string>>& candidate_reference_pairs) {
    std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> pairs;
    pairs.reserve(candidate_reference_pairs.size());
    for (const auto& [cand, ref] : candidate_reference_pairs)
        pairs.emplace_back(tokenize(cand), tokenize(ref));
    return evaluate_corpus(pairs);
}

}  // namespace sumlab
