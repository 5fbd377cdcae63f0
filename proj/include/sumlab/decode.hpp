#pragma once

#include <algorithm>
#include <vector>

#include "sumlab/model.hpp"
#include "sumlab/text.hpp"

namespace sumlab {

struct Hypothesis {
    std::vector<int> ids;   // starts with BOS
    double log_prob = 0.0;  // cumulative token log-probability, <= 0
    bool finished = false;  // last id is EOS
};

namespace detail {

/// log-softmax of a logits row, computed in double for stable cumulative
/// scores regardless of the model scalar.
template <typename S>
std::vector<double> log_probs_from_logits(const VectorX<S>& logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < logits.size(); ++i)
        mx = std::max(mx, static_cast<double>(logits[i]));
    double z = 0.0;
    for (Index i = 0; i < logits.size(); ++i)
        z += std::exp(static_cast<double>(logits[i]) - mx);
    const double log_z = std::log(z) + mx;
    std::vector<double> out(static_cast<std::size_t>(logits.size()));
    for (Index i = 0; i < logits.size(); ++i)
        out[static_cast<std::size_t>(i)] = static_cast<double>(logits[i]) - log_z;
    return out;
}

/// Lexicographic token-id ordering for deterministic tie-breaks.
inline bool sequence_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace detail

/// Precomputed encoder state shared by all decoding steps of one example.
template <typename S>
struct DecodeContext {
    Tensor<S> src_enc;
    std::vector<bool> src_valid;
    Tensor<S> guid_enc;  // undefined when the model has no guidance branch
    std::vector<bool> guid_valid;
    bool guided = false;
};

template <typename S>
DecodeContext<S> make_decode_context(const Model<S>& model, const std::vector<int>& source_ids,
                                     const std::vector<int>& guidance_ids) {
    NoGradGuard off;
    DecodeContext<S> ctx;
    ctx.src_enc = model.encode(source_ids);
    ctx.src_valid.resize(source_ids.size());
    for (std::size_t i = 0; i < source_ids.size(); ++i)
        ctx.src_valid[i] = source_ids[i] != kPadId;
    if (model.config().guidance_enabled) {
        if (guidance_ids.empty())
            throw InputError("guided model needs guidance ids for decoding");
        ctx.guided = true;
        ctx.guid_enc = model.encode(guidance_ids);
        ctx.guid_valid.resize(guidance_ids.size());
        for (std::size_t i = 0; i < guidance_ids.size(); ++i)
            ctx.guid_valid[i] = guidance_ids[i] != kPadId;
    }
    return ctx;
}

template <typename S>
std::vector<double> next_log_probs(const Model<S>& model, const DecodeContext<S>& ctx,
                                   const std::vector<int>& prefix) {
    const VectorX<S> logits = model.next_token_logits(
        prefix, ctx.src_enc, ctx.src_valid, ctx.guided ? &ctx.guid_enc : nullptr,
        ctx.guided ? &ctx.guid_valid : nullptr);
    return detail::log_probs_from_logits(logits);
}

/// Argmax decoding; ties break toward the smallest token id. Stops at EOS
/// or after max_len generated tokens. The result starts with BOS and keeps
/// a final EOS when one was emitted.
template <typename S>
std::vector<int> greedy_decode(const Model<S>& model, const std::vector<int>& source_ids,
                               const std::vector<int>& guidance_ids, int max_len) {
    if (max_len < 1) throw InputError("greedy_decode: max_len must be >= 1");
    const DecodeContext<S> ctx = make_decode_context(model, source_ids, guidance_ids);
    std::vector<int> prefix{kBosId};
    const int limit = std::min(max_len, model.config().max_tgt_len - 1);
    for (int step = 0; step < limit; ++step) {
        const auto lp = next_log_probs(model, ctx, prefix);
        int best = 0;
        for (std::size_t i = 1; i < lp.size(); ++i)
            if (lp[i] > lp[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
        prefix.push_back(best);
        if (best == kEosId) break;
    }
    return prefix;
}

/// Standard beam search without length normalization. Each step expands
/// every live hypothesis over the full vocabulary and keeps the top-width
/// by cumulative log-probability (ties by lexicographic token order);
/// finished hypotheses retire to a completed pool. Returns the best
/// completed hypothesis, or the best live one when nothing finished.
template <typename S>
std::vector<int> beam_search(const Model<S>& model, const std::vector<int>& source_ids,
                             const std::vector<int>& guidance_ids, int width, int max_len) {
    if (width < 1) throw InputError("beam_search: width must be >= 1");
    if (max_len < 1) throw InputError("beam_search: max_len must be >= 1");
    const DecodeContext<S> ctx = make_decode_context(model, source_ids, guidance_ids);

    const auto better = [](const Hypothesis& a, const Hypothesis& b) {
        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
        return detail::sequence_less(a.ids, b.ids);
    };

    std::vector<Hypothesis> live{{std::vector<int>{kBosId}, 0.0, false}};
    std::vector<Hypothesis> completed;
    const int limit = std::min(max_len, model.config().max_tgt_len - 1);

    for (int step = 0; step < limit && !live.empty(); ++step) {
        std::vector<Hypothesis> expanded;
        expanded.reserve(live.size() * 8);
        for (const auto& hyp : live) {
            const auto lp = next_log_probs(model, ctx, hyp.ids);
            for (std::size_t tok = 0; tok < lp.size(); ++tok) {
                Hypothesis next;
                next.ids = hyp.ids;
                next.ids.push_back(static_cast<int>(tok));
                next.log_prob = hyp.log_prob + lp[tok];
                next.finished = static_cast<int>(tok) == kEosId;
                expanded.push_back(std::move(next));
            }
        }
        std::sort(expanded.begin(), expanded.end(), better);
        if (static_cast<int>(expanded.size()) > width)
            expanded.resize(static_cast<std::size_t>(width));

        live.clear();
        for (auto& hyp : expanded) {
            if (hyp.finished)
                completed.push_back(std::move(hyp));
            else
                live.push_back(std::move(hyp));
        }
    }

    // Candidates: everything that finished plus whatever is still live at
    // the length limit.
    const Hypothesis* best = nullptr;
    for (const auto& hyp : completed)
        if (!best || better(hyp, *best)) best = &hyp;
    for (const auto& hyp : live)
        if (!best || better(hyp, *best)) best = &hyp;
    return best->ids;
}

/// Strip specials and map ids back to text.
inline std::string ids_to_text(const Vocabulary& vocab, const std::vector<int>& ids) {
    TokenSequence seq{ids};
    return detokenize(decode(vocab, seq));
}

}  // namespace sumlab
