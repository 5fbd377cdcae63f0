#include "sumlab/extractive.hpp"

#include <algorithm>

#include "sumlab/metrics.hpp"
#include "sumlab/text.hpp"

namespace sumlab {

GuidanceMode parse_guidance_mode(const std::string& name) {
    if (name == "none") return GuidanceMode::kNone;
    if (name == "reference") return GuidanceMode::kReference;
    if (name == "oracle") return GuidanceMode::kOracle;
    throw ConfigError("unknown guidance mode '" + name + "' (expected none, reference or oracle)");
}

std::string guidance_mode_name(GuidanceMode mode) {
    switch (mode) {
        case GuidanceMode::kNone: return "none";
        case GuidanceMode::kReference: return "reference";
        case GuidanceMode::kOracle: return "oracle";
    }
    return "none";
}

GuidancePool GuidancePool::from_train_split(const std::vector<Example>& train) {
    if (train.empty()) throw InputError("guidance pool needs a non-empty train split");
    GuidancePool pool;
    pool.entries_.reserve(train.size());
    for (const auto& ex : train) pool.entries_.push_back({ex.id, ex.summary, {}});
    return pool;
}

void GuidancePool::attach_oracle(const std::vector<Example>& oracle_corpus) {
    std::size_t matched = 0;
    for (auto& entry : entries_) {
        for (const auto& ex : oracle_corpus) {
            if (ex.id == entry.example_id) {
                entry.oracle = ex.summary;
                ++matched;
                break;
            }
        }
    }
    if (matched != entries_.size())
        throw IntegrityError("oracle file covers " + std::to_string(matched) + " of " +
                             std::to_string(entries_.size()) + " train examples");
    has_oracle_ = true;
}

const std::string& sample_guidance(const GuidancePool& pool, const std::string& current_id,
                                   GuidanceMode mode, Rng& rng) {
    const auto& entries = pool.entries();
    if (entries.empty()) throw InputError("sample_guidance: empty pool");
    if (mode == GuidanceMode::kNone)
        throw InputError("sample_guidance called with guidance mode 'none'");
    if (mode == GuidanceMode::kOracle && !pool.has_oracle())
        throw InputError("sample_guidance: pool has no oracle summaries attached");

    // Self-exclusion: drawing the example's own reference would leak the
    // label, so re-draw unless the pool offers no alternative.
    std::size_t pick = rng.below(entries.size());
    if (entries[pick].example_id == current_id && entries.size() > 1) {
        const std::size_t shifted = rng.below(entries.size() - 1);
        pick = shifted < pick ? shifted : shifted + 1;
    }
    const GuidancePool::Entry& entry = entries[pick];
    return mode == GuidanceMode::kOracle ? entry.oracle : entry.reference;
}

std::string lead3(const std::string& source) {
    const auto sentences = split_sentences(source);
    std::string out;
    const std::size_t take = std::min<std::size_t>(3, sentences.size());
    for (std::size_t i = 0; i < take; ++i) {
        if (i) out.push_back(' ');
        out += sentences[i];
    }
    return out;
}

namespace {

double rouge_mean_objective(const std::vector<std::string>& cand_tokens,
                            const std::vector<std::string>& ref_tokens) {
    const double r1 = rouge_n(cand_tokens, ref_tokens, 1).f1;
    const double r2 = rouge_n(cand_tokens, ref_tokens, 2).f1;
    return 0.5 * (r1 + r2);
}

}  // namespace

OracleSelection oracle_extract(const std::vector<std::string>& source_sents,
                               const std::string& reference, std::size_t max_sents) {
    if (source_sents.empty()) throw InputError("oracle_extract: no source sentences");
    if (reference.empty()) throw InputError("oracle_extract: empty reference");

    const auto ref_tokens = tokenize(reference);
    std::vector<std::vector<std::string>> sent_tokens;
    sent_tokens.reserve(source_sents.size());
    for (const auto& s : source_sents) sent_tokens.push_back(tokenize(s));

    std::vector<bool> selected(source_sents.size(), false);
    double best_objective = 0.0;
    std::size_t n_selected = 0;

    while (n_selected < max_sents) {
        double round_best = best_objective;
        std::size_t round_pick = source_sents.size();
        for (std::size_t i = 0; i < source_sents.size(); ++i) {
            if (selected[i]) continue;
            // Candidate = current selection plus sentence i, in source order.
            std::vector<std::string> cand;
            for (std::size_t j = 0; j < source_sents.size(); ++j)
                if (selected[j] || j == i)
                    cand.insert(cand.end(), sent_tokens[j].begin(), sent_tokens[j].end());
            const double obj = rouge_mean_objective(cand, ref_tokens);
            if (obj > round_best) {
                round_best = obj;
                round_pick = i;
            }
        }
        if (round_pick == source_sents.size()) break;  // no sentence improves the objective
        selected[round_pick] = true;
        best_objective = round_best;
        ++n_selected;
    }

    OracleSelection result;
    result.objective = best_objective;
    for (std::size_t i = 0; i < source_sents.size(); ++i) {
        if (!selected[i]) continue;
        result.indices.push_back(i);
        if (!result.text.empty()) result.text.push_back(' ');
        result.text += source_sents[i];
    }
    return result;
}

}  // namespace sumlab
