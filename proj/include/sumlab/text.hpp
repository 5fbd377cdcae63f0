#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "sumlab/common.hpp"

namespace sumlab {

// Reserved token ids. PAD must be 0 so right-padded batches zero-fill.
enum SpecialId : int {
    kPadId = 0,
    kBosId = 1,
    kEosId = 2,
    kUnkId = 3,
    kGuideSepId = 4,
};
inline constexpr int kNumSpecials = 5;

/// Immutable after build; safe for concurrent reads.
class Vocabulary {
public:
    Vocabulary();

    int id_of(const std::string& token) const;  // UNK for unknown tokens
    const std::string& token_of(int id) const;
    bool contains(const std::string& token) const;
    int size() const { return static_cast<int>(id_to_token_.size()); }

    void add_token(const std::string& token);

    /// "vocab-v1 <size>" header, then one "token<TAB>id" line per entry.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

struct TokenSequence {
    std::vector<int> ids;
};

/// Lowercase, split on whitespace, punctuation characters become their own
/// tokens. Deterministic; empty text yields an empty sequence.
std::vector<std::string> tokenize(const std::string& text);

/// Split on '.', '!' or '?' followed by whitespace or end of text. The
/// terminator stays with its sentence; no empty sentences are returned.
std::vector<std::string> split_sentences(const std::string& text);

/// Frequency-ranked vocabulary (ties broken lexicographically), truncated
/// to max_size entries including the specials.
Vocabulary build_vocab(const std::vector<std::string>& corpus, int max_size, int min_freq = 1);

/// Map tokens to ids, truncating to max_len. When add_eos is set the EOS
/// survives truncation (content is cut to make room).
TokenSequence encode(const Vocabulary& v, const std::vector<std::string>& tokens, int max_len,
                     bool add_bos, bool add_eos);

/// Inverse of encode for in-vocabulary tokens; specials are skipped.
std::vector<std::string> decode(const Vocabulary& v, const TokenSequence& seq);

/// Join tokens with single spaces.
std::string detokenize(const std::vector<std::string>& tokens);

}  // namespace sumlab
