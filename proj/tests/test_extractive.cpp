#include <doctest.h>

#include <map>

#include "sumlab/extractive.hpp"
#include "sumlab/metrics.hpp"
#include "sumlab/text.hpp"

using namespace sumlab;

namespace {

std::vector<Example> train_of(std::initializer_list<std::pair<const char*, const char*>> rows) {
    std::vector<Example> out;
    int i = 0;
    for (const auto& [src, sum] : rows)
        out.push_back({"t" + std::to_string(i++), src, sum});
    return out;
}

double oracle_objective(const std::string& cand, const std::string& ref) {
    const auto c = tokenize(cand);
    const auto r = tokenize(ref);
    return 0.5 * (rouge_n(c, r, 1).f1 + rouge_n(c, r, 2).f1);
}

}  // namespace

TEST_CASE("sample_guidance: forced choice and no-exclusion cases") {
    auto pool = GuidancePool::from_train_split(
        train_of({{"s0", "summary zero"}, {"s1", "summary one"}}));
    Rng rng(5);
    for (int i = 0; i < 50; ++i)
        CHECK(sample_guidance(pool, "t0", GuidanceMode::kReference, rng) == "summary one");

    // Unknown id (a test example): every entry is eligible.
    bool saw0 = false, saw1 = false;
    for (int i = 0; i < 200; ++i) {
        const auto& s = sample_guidance(pool, "not-in-pool", GuidanceMode::kReference, rng);
        saw0 = saw0 || s == "summary zero";
        saw1 = saw1 || s == "summary one";
    }
    CHECK(saw0);
    CHECK(saw1);

    // Single-entry pool: self is permitted.
    auto solo = GuidancePool::from_train_split(train_of({{"s", "only"}}));
    CHECK(sample_guidance(solo, "t0", GuidanceMode::kReference, rng) == "only");

    CHECK_THROWS_AS(sample_guidance(pool, "t0", GuidanceMode::kOracle, rng), InputError);
    CHECK_THROWS_AS(GuidancePool::from_train_split({}), InputError);
}

TEST_CASE("sample_guidance is uniform over eligible entries") {
    auto pool = GuidancePool::from_train_split(train_of(
        {{"s0", "g0"}, {"s1", "g1"}, {"s2", "g2"}, {"s3", "g3"}, {"s4", "g4"}}));
    Rng rng(20240229);
    std::map<std::string, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i)
        ++counts[sample_guidance(pool, "none-of-them", GuidanceMode::kReference, rng)];
    // Uniform p = 1/5: each count within 3 sigma of np.
    const double expected = draws / 5.0;
    const double sigma = std::sqrt(draws * 0.2 * 0.8);
    for (const auto& [text, count] : counts) {
        CHECK(count > expected - 3 * sigma);
        CHECK(count < expected + 3 * sigma);
    }
    CHECK(counts.size() == 5);

    // Self-exclusion: the current example's own entry never shows up.
    std::map<std::string, int> excl_counts;
    for (int i = 0; i < 5000; ++i)
        ++excl_counts[sample_guidance(pool, "t2", GuidanceMode::kReference, rng)];
    CHECK(excl_counts.count("g2") == 0);
    const double expected4 = 5000 / 4.0;
    const double sigma4 = std::sqrt(5000 * 0.25 * 0.75);
    for (const auto& [text, count] : excl_counts) {
        CHECK(count > expected4 - 3 * sigma4);
        CHECK(count < expected4 + 3 * sigma4);
    }
}

TEST_CASE("oracle mode returns oracle text") {
    auto pool = GuidancePool::from_train_split(train_of({{"s0", "ref zero"}, {"s1", "ref one"}}));
    std::vector<Example> oracle_corpus{{"t0", "s0", "oracle zero"}, {"t1", "s1", "oracle one"}};
    pool.attach_oracle(oracle_corpus);
    Rng rng(3);
    CHECK(sample_guidance(pool, "t0", GuidanceMode::kOracle, rng) == "oracle one");
    CHECK(sample_guidance(pool, "t0", GuidanceMode::kReference, rng) == "ref one");
}

TEST_CASE("lead3 takes the first three sentences") {
    CHECK(lead3("One. Two. Three. Four. Five.") == "One. Two. Three.");
    CHECK(lead3("Only one. And two.") == "Only one. And two.");
    CHECK(lead3("") == "");

    const std::string doc = "A b. C d. E f. G h.";
    const auto sents = split_sentences(doc);
    const std::string lead = lead3(doc);
    const auto lead_sents = split_sentences(lead);
    REQUIRE(lead_sents.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(lead_sents[i] == sents[i]);
}

TEST_CASE("oracle_extract: perfect match and no-gain cases") {
    const std::vector<std::string> sents{"alpha beta gamma.", "delta epsilon.",
                                         "the exact target sentence.", "noise words here."};
    auto sel = oracle_extract(sents, "the exact target sentence.");
    REQUIRE(sel.indices.size() == 1);
    CHECK(sel.indices[0] == 2);
    CHECK(sel.objective == doctest::Approx(1.0));
    CHECK(sel.text == "the exact target sentence.");

    auto none = oracle_extract(sents, "zz yy xx");
    CHECK(none.indices.empty());
    CHECK(none.objective == doctest::Approx(0.0));

    CHECK_THROWS_AS(oracle_extract({}, "ref"), InputError);
    CHECK_THROWS_AS(oracle_extract(sents, ""), InputError);
}

TEST_CASE("oracle_extract: greedy is monotone and beats lead3") {
    Rng rng(31337);
    const auto random_sentence = [&](int len) {
        std::string s;
        for (int i = 0; i < len; ++i) {
            if (i) s.push_back(' ');
            s += "w" + std::to_string(rng.below(12));
        }
        return s + ".";
    };
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<std::string> sents;
        for (int i = 0; i < 6; ++i) sents.push_back(random_sentence(4));
        // Reference borrows tokens from two random sentences.
        const std::string reference =
            sents[rng.below(6)] + " " + sents[rng.below(6)];

        const auto sel = oracle_extract(sents, reference, 6);
        CHECK(std::is_sorted(sel.indices.begin(), sel.indices.end()));
        CHECK(sel.objective >= oracle_objective(lead3(detokenize(sents)), reference) - 1e-12);
        CHECK(sel.objective == doctest::Approx(oracle_objective(sel.text, reference)));
    }
}

TEST_CASE("oracle_extract approaches the exhaustive subset optimum") {
    Rng rng(4242);
    const auto random_sentence = [&](int len) {
        std::string s;
        for (int i = 0; i < len; ++i) {
            if (i) s.push_back(' ');
            s += "w" + std::to_string(rng.below(10));
        }
        return s + ".";
    };
    double greedy_sum = 0.0, best_sum = 0.0;
    const int docs = 40;
    for (int rep = 0; rep < docs; ++rep) {
        std::vector<std::string> sents;
        for (int i = 0; i < 6; ++i) sents.push_back(random_sentence(4));
        std::string reference = sents[rng.below(6)];
        reference += " " + sents[rng.below(6)];

        greedy_sum += oracle_extract(sents, reference, 6).objective;

        double best = 0.0;
        for (int mask = 1; mask < (1 << 6); ++mask) {
            std::string cand;
            for (int i = 0; i < 6; ++i) {
                if (!(mask & (1 << i))) continue;
                if (!cand.empty()) cand.push_back(' ');
                cand += sents[static_cast<std::size_t>(i)];
            }
            best = std::max(best, oracle_objective(cand, reference));
        }
        best_sum += best;
    }
    CHECK(greedy_sum >= 0.90 * best_sum);
}
