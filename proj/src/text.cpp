#include "sumlab/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace sumlab {

namespace {

const char* kSpecialTokens[kNumSpecials] = {"<pad>", "<s>", "</s>", "<unk>", "<guide>"};

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

}  // namespace

Vocabulary::Vocabulary() {
    for (int i = 0; i < kNumSpecials; ++i) add_token(kSpecialTokens[i]);
}

void Vocabulary::add_token(const std::string& token) {
    if (token_to_id_.count(token))
        throw IntegrityError("vocabulary already contains token '" + token + "'");
    token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(token);
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size())
        throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                         std::to_string(size()));
    return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open vocabulary file for writing: " + path);
    out << "vocab-v1 " << size() << "\n";
    for (int i = 0; i < size(); ++i) out << id_to_token_[static_cast<std::size_t>(i)] << '\t' << i << "\n";
    if (!out) throw IoError("failed writing vocabulary file: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open vocabulary file: " + path);
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    int declared = -1;
    hs >> magic >> declared;
    if (magic != "vocab-v1" || declared < kNumSpecials)
        throw ParseError("bad vocabulary header: '" + header + "'");

    Vocabulary v;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("vocabulary line " + std::to_string(line_no) + " has no tab");
        const std::string token = line.substr(0, tab);
        const int id = std::stoi(line.substr(tab + 1));
        if (id < kNumSpecials) {
            if (token != kSpecialTokens[id])
                throw ParseError("vocabulary line " + std::to_string(line_no) +
                                 ": special id mismatch");
            continue;
        }
        if (id != v.size())
            throw ParseError("vocabulary line " + std::to_string(line_no) +
                             ": ids must be dense and ascending");
        v.add_token(token);
    }
    if (v.size() != declared)
        throw ParseError("vocabulary size " + std::to_string(v.size()) +
                         " does not match declared " + std::to_string(declared));
    return v;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!current.empty()) {
                tokens.push_back(current);
                current.clear();
            }
        } else if (is_word_char(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!current.empty()) {
                tokens.push_back(current);
                current.clear();
            }
            tokens.emplace_back(1, static_cast<char>(c));
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> sentences;
    std::string current;
    const auto flush = [&] {
        // Trim surrounding whitespace; drop empty pieces.
        std::size_t b = current.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) {
            current.clear();
            return;
        }
        std::size_t e = current.find_last_not_of(" \t\r\n");
        sentences.push_back(current.substr(b, e - b + 1));
        current.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        current.push_back(c);
        if (c == '.' || c == '!' || c == '?') {
            const bool at_end = i + 1 == text.size();
            if (at_end || std::isspace(static_cast<unsigned char>(text[i + 1]))) flush();
        }
    }
    flush();
    return sentences;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, int max_size, int min_freq) {
    if (corpus.empty()) throw InputError("build_vocab: empty corpus");
    if (max_size < kNumSpecials)
        throw InputError("build_vocab: max_size must be at least " + std::to_string(kNumSpecials));

    std::map<std::string, long long> freq;
    for (const auto& text : corpus)
        for (const auto& tok : tokenize(text)) ++freq[tok];

    std::vector<std::pair<std::string, long long>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    for (const auto& [tok, count] : ranked) {
        if (v.size() >= max_size) break;
        if (count < min_freq) break;  // ranked by frequency, so the rest are below too
        v.add_token(tok);
    }
    return v;
}

TokenSequence encode(const Vocabulary& v, const std::vector<std::string>& tokens, int max_len,
                     bool add_bos, bool add_eos) {
    const int reserved = (add_bos ? 1 : 0) + (add_eos ? 1 : 0);
    if (max_len < 1 + reserved)
        throw InputError("encode: max_len " + std::to_string(max_len) +
                         " leaves no room for content");
    TokenSequence seq;
    seq.ids.reserve(static_cast<std::size_t>(std::min<std::size_t>(
        tokens.size() + static_cast<std::size_t>(reserved), static_cast<std::size_t>(max_len))));
    if (add_bos) seq.ids.push_back(kBosId);
    const int content_budget = max_len - reserved;
    for (std::size_t i = 0; i < tokens.size() && static_cast<int>(i) < content_budget; ++i)
        seq.ids.push_back(v.id_of(tokens[i]));
    if (add_eos) seq.ids.push_back(kEosId);
    return seq;
}

std::vector<std::string> decode(const Vocabulary& v, const TokenSequence& seq) {
    std::vector<std::string> tokens;
    tokens.reserve(seq.ids.size());
    for (int id : seq.ids) {
        if (id < kNumSpecials) continue;
        tokens.push_back(v.token_of(id));
    }
    return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

}  // namespace sumlab
