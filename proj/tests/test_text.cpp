#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "sumlab/text.hpp"

using namespace sumlab;

TEST_CASE("tokenize: lowercase, whitespace, punctuation") {
    CHECK(tokenize("The cat sat.") == std::vector<std::string>{"the", "cat", "sat", "."});
    CHECK(tokenize("").empty());
    CHECK(tokenize("a  b") == std::vector<std::string>{"a", "b"});
    CHECK(tokenize("don't stop!") == std::vector<std::string>{"don", "'", "t", "stop", "!"});
    CHECK(tokenize("  x ") == std::vector<std::string>{"x"});
}

TEST_CASE("split_sentences keeps terminators and drops empties") {
    CHECK(split_sentences("A b. C d.") == std::vector<std::string>{"A b.", "C d."});
    CHECK(split_sentences("no terminator") == std::vector<std::string>{"no terminator"});
    CHECK(split_sentences("").empty());
    CHECK(split_sentences("Hi!? Ok.") == std::vector<std::string>{"Hi!?", "Ok."});
    CHECK(split_sentences("x. ") == std::vector<std::string>{"x."});
    CHECK(split_sentences("a.b c") == std::vector<std::string>{"a.b c"});
}

TEST_CASE("split_sentences preserves non-whitespace characters") {
    const std::string inputs[] = {"A b. C d.", "one two!  three?", "  padded . sentence ",
                                  "a.b..c. end"};
    for (const auto& input : inputs) {
        std::string joined;
        for (const auto& s : split_sentences(input)) {
            CHECK_FALSE(s.empty());
            joined += s;
        }
        std::string expect, got;
        for (char c : input)
            if (!std::isspace(static_cast<unsigned char>(c))) expect.push_back(c);
        for (char c : joined)
            if (!std::isspace(static_cast<unsigned char>(c))) got.push_back(c);
        CHECK(got == expect);
    }
}

TEST_CASE("build_vocab ranks by frequency then lexicographically") {
    Vocabulary v = build_vocab({"a a b"}, 100);
    CHECK(v.contains("a"));
    CHECK(v.contains("b"));
    CHECK(v.id_of("a") < v.id_of("b"));
    CHECK(v.id_of("a") == kNumSpecials);

    Vocabulary tiny = build_vocab({"a a b"}, kNumSpecials);
    CHECK(tiny.size() == kNumSpecials);
    CHECK(tiny.id_of("a") == kUnkId);

    Vocabulary freq = build_vocab({"a b", "a c"}, 100, 2);
    CHECK(freq.contains("a"));
    CHECK_FALSE(freq.contains("b"));
    CHECK_FALSE(freq.contains("c"));

    CHECK_THROWS_AS(build_vocab({}, 100), InputError);
}

TEST_CASE("vocabulary invariants: specials pinned, inverse mapping") {
    Vocabulary v = build_vocab({"the cat sat on the mat ."}, 50);
    CHECK(v.id_of("<pad>") == kPadId);
    CHECK(kPadId == 0);
    CHECK(v.token_of(kBosId) == "<s>");
    CHECK(v.token_of(kEosId) == "</s>");
    CHECK(v.token_of(kUnkId) == "<unk>");
    CHECK(v.token_of(kGuideSepId) == "<guide>");
    for (int id = 0; id < v.size(); ++id) CHECK(v.id_of(v.token_of(id)) == id);
}

TEST_CASE("encode: specials, unknowns, truncation") {
    Vocabulary v = build_vocab({"a b c d e f g h i j"}, 100);

    TokenSequence plain = encode(v, {"a", "b"}, 10, true, true);
    CHECK(plain.ids.front() == kBosId);
    CHECK(plain.ids.back() == kEosId);
    CHECK(plain.ids.size() == 4);

    TokenSequence unk = encode(v, {"a", "zzz", "b"}, 10, false, false);
    CHECK(unk.ids[1] == kUnkId);

    std::vector<std::string> ten(10, "a");
    TokenSequence trunc = encode(v, ten, 5, false, true);
    CHECK(trunc.ids.size() == 5);
    CHECK(trunc.ids.back() == kEosId);
    for (int i = 0; i < 4; ++i) CHECK(trunc.ids[static_cast<std::size_t>(i)] == v.id_of("a"));

    CHECK_THROWS_AS(encode(v, {"a"}, 2, true, true), InputError);
}

TEST_CASE("decode(encode(x)) round-trips in-vocabulary tokens") {
    const std::string text = "the quick brown fox jumps over the lazy dog .";
    Vocabulary v = build_vocab({text}, 100);
    const auto tokens = tokenize(text);
    TokenSequence seq = encode(v, tokens, 100, true, true);
    CHECK(decode(v, seq) == tokens);
}

TEST_CASE("vocabulary file round-trip") {
    Vocabulary v = build_vocab({"alpha beta gamma alpha"}, 100);
    const auto path = std::filesystem::temp_directory_path() / "sumlab_vocab_test.txt";
    v.save(path.string());
    Vocabulary loaded = Vocabulary::load(path.string());
    CHECK(loaded.size() == v.size());
    for (int id = 0; id < v.size(); ++id) CHECK(loaded.token_of(id) == v.token_of(id));
    std::filesystem::remove(path);

    CHECK_THROWS_AS(Vocabulary::load("/nonexistent/vocab.txt"), IoError);
}
