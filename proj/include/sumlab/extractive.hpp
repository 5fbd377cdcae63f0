#pragma once

#include <string>
#include <vector>

#include "sumlab/common.hpp"
#include "sumlab/data.hpp"

namespace sumlab {

enum class GuidanceMode { kNone, kReference, kOracle };

GuidanceMode parse_guidance_mode(const std::string& name);
std::string guidance_mode_name(GuidanceMode mode);

/// Train-split summaries (and optional oracle summaries) available as
/// guidance. Immutable once built; sampling takes the caller's RNG so
/// parallel workers can use disjoint streams.
class GuidancePool {
public:
    struct Entry {
        std::string example_id;
        std::string reference;
        std::string oracle;  // empty unless an oracle file was supplied
    };

    static GuidancePool from_train_split(const std::vector<Example>& train);
    void attach_oracle(const std::vector<Example>& oracle_corpus);

    const std::vector<Entry>& entries() const { return entries_; }
    bool has_oracle() const { return has_oracle_; }

private:
    std::vector<Entry> entries_;
    bool has_oracle_ = false;
};

/// Uniform draw over pool entries, excluding the current example's own
/// entry whenever an alternative exists.
const std::string& sample_guidance(const GuidancePool& pool, const std::string& current_id,
                                   GuidanceMode mode, Rng& rng);

/// First min(3, n) sentences joined by single spaces.
std::string lead3(const std::string& source);

struct OracleSelection {
    std::vector<std::size_t> indices;  // in source order
    std::string text;
    double objective = 0.0;  // mean of ROUGE-1 and ROUGE-2 F1 vs the reference
};

/// Greedy sentence selection maximizing mean(ROUGE-1 F1, ROUGE-2 F1)
/// against the reference; stops when no sentence improves the objective or
/// max_sents is reached.
OracleSelection oracle_extract(const std::vector<std::string>& source_sents,
                               const std::string& reference, std::size_t max_sents = 5);

}  // namespace sumlab
