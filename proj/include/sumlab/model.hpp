#pragma once

#include <json.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sumlab/tensor.hpp"
#include "sumlab/text.hpp"

namespace sumlab {

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_enc_layers = 2;
    int n_dec_layers = 2;
    int d_ffn = 256;
    int vocab_size = 0;
    int max_src_len = 1024;
    int max_tgt_len = 128;
    int max_guid_len = 128;
    bool guidance_enabled = false;
    double dropout_rate = 0.1;

    void validate() const {
        if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
            throw ConfigError("d_model must be a positive multiple of n_heads");
        if (n_enc_layers <= 0 || n_dec_layers <= 0 || d_ffn <= 0)
            throw ConfigError("layer counts and d_ffn must be positive");
        if (vocab_size <= kNumSpecials)
            throw ConfigError("vocab_size must exceed the reserved specials");
        if (max_src_len < 2 || max_tgt_len < 2 || max_guid_len < 2)
            throw ConfigError("maximum lengths must be at least 2");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("dropout_rate must lie in [0, 1)");
    }

    int d_head() const { return d_model / n_heads; }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"d_model", c.d_model},
                       {"n_heads", c.n_heads},
                       {"n_enc_layers", c.n_enc_layers},
                       {"n_dec_layers", c.n_dec_layers},
                       {"d_ffn", c.d_ffn},
                       {"vocab_size", c.vocab_size},
                       {"max_src_len", c.max_src_len},
                       {"max_tgt_len", c.max_tgt_len},
                       {"max_guid_len", c.max_guid_len},
                       {"guidance_enabled", c.guidance_enabled},
                       {"dropout_rate", c.dropout_rate}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("d_model").get_to(c.d_model);
    j.at("n_heads").get_to(c.n_heads);
    j.at("n_enc_layers").get_to(c.n_enc_layers);
    j.at("n_dec_layers").get_to(c.n_dec_layers);
    j.at("d_ffn").get_to(c.d_ffn);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("max_src_len").get_to(c.max_src_len);
    j.at("max_tgt_len").get_to(c.max_tgt_len);
    j.at("max_guid_len").get_to(c.max_guid_len);
    j.at("guidance_enabled").get_to(c.guidance_enabled);
    j.at("dropout_rate").get_to(c.dropout_rate);
}

/// Ordered name -> tensor registry. Order is creation order, which pins the
/// initialization draw sequence and the checkpoint layout.
template <typename S>
class ParamStore {
public:
    Tensor<S>& add(const std::string& name, Shape shape) {
        if (index_.count(name)) throw IntegrityError("duplicate parameter name: " + name);
        index_.emplace(name, items_.size());
        items_.emplace_back(name, Tensor<S>::param(std::move(shape), name));
        return items_.back().second;
    }
    Tensor<S>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw InputError("unknown parameter: " + name);
        return items_[it->second].second;
    }
    const Tensor<S>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw InputError("unknown parameter: " + name);
        return items_[it->second].second;
    }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    std::vector<std::pair<std::string, Tensor<S>>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor<S>>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }

    void zero_grads() {
        for (auto& [name, t] : items_) t.zero_grad();
    }

private:
    std::vector<std::pair<std::string, Tensor<S>>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Multi-head scaled dot-product attention over projected inputs.
///
/// Q, K, V are [m x d], [n x d], [n x d] with the head dimension folded into
/// d. mask(i, j) == true means key j is attendable from query i; passing no
/// mask attends everything. The per-head outputs are concatenated; the
/// output projection is applied by the caller.
template <typename S>
Tensor<S> attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, int n_heads,
                    const std::optional<MaskMatrix>& mask = std::nullopt) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw ShapeError("attention inputs must be rank-2");
    const Index d = q.cols();
    if (k.cols() != d || v.cols() != d || k.rows() != v.rows())
        throw ShapeError("attention shapes disagree: Q " + shape_str(q.shape()) + ", K " +
                         shape_str(k.shape()) + ", V " + shape_str(v.shape()));
    if (d % n_heads != 0) throw ShapeError("attention width not divisible by head count");
    if (mask && (mask->rows() != q.rows() || mask->cols() != k.rows()))
        throw ShapeError("attention mask must be [queries x keys]");

    const Index dh = d / n_heads;
    const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
    std::vector<Tensor<S>> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        Tensor<S> qh = slice_cols(q, h * dh, dh);
        Tensor<S> kh = slice_cols(k, h * dh, dh);
        Tensor<S> vh = slice_cols(v, h * dh, dh);
        Tensor<S> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
        Tensor<S> weights = mask ? masked_softmax_rows(scores, *mask) : softmax_rows(scores);
        heads.push_back(matmul(weights, vh));
    }
    return n_heads == 1 ? heads.front() : concat_cols(heads);
}

inline MaskMatrix causal_mask(Index m) {
    MaskMatrix mask(m, m);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j) mask(i, j) = j <= i;
    return mask;
}

/// Broadcast a key-validity row over all queries.
inline MaskMatrix key_mask(Index queries, const std::vector<bool>& key_valid) {
    MaskMatrix mask(queries, static_cast<Index>(key_valid.size()));
    for (Index i = 0; i < queries; ++i)
        for (Index j = 0; j < mask.cols(); ++j) mask(i, j) = key_valid[static_cast<std::size_t>(j)];
    return mask;
}

/// Optional dropout stream; absent during evaluation and gradient checks.
template <typename S>
struct DropoutCtx {
    double rate = 0.0;
    Rng* rng = nullptr;
    Tensor<S> operator()(const Tensor<S>& x) const {
        if (rate == 0.0 || rng == nullptr) return x;
        return dropout(x, rate, *rng);
    }
};

/// Padded single-example views used by forward passes.
struct EncodedBatch {
    std::vector<std::vector<int>> src_ids;    // right-padded with PAD
    std::vector<std::vector<int>> guid_ids;   // empty when guidance is off
    std::vector<std::vector<int>> tgt_input;  // BOS-shifted decoder inputs
    std::vector<std::vector<int>> tgt_labels; // labels ending with EOS, PAD elsewhere

    std::size_t size() const { return src_ids.size(); }
};

/// Assemble a padded batch from per-example id sequences. Target rows hold
/// [BOS, y...] inputs versus [y..., EOS] labels; every sequence is
/// right-padded to the batch maximum with PAD.
inline EncodedBatch make_batch(const std::vector<std::vector<int>>& sources,
                               const std::vector<std::vector<int>>& guidances,
                               const std::vector<std::vector<int>>& targets) {
    if (sources.empty() || sources.size() != targets.size())
        throw InputError("make_batch: sources and targets must align and be non-empty");
    if (!guidances.empty() && guidances.size() != sources.size())
        throw InputError("make_batch: guidance rows must align with sources");

    const auto pad_to = [](std::vector<int> ids, std::size_t len) {
        ids.resize(len, kPadId);
        return ids;
    };
    std::size_t src_max = 0, guid_max = 0, tgt_max = 0;
    for (const auto& s : sources) src_max = std::max(src_max, s.size());
    for (const auto& g : guidances) guid_max = std::max(guid_max, g.size());
    for (const auto& t : targets) tgt_max = std::max(tgt_max, t.size());

    EncodedBatch batch;
    for (std::size_t e = 0; e < sources.size(); ++e) {
        if (sources[e].empty()) throw InputError("make_batch: empty source row");
        if (targets[e].empty()) throw InputError("make_batch: empty target row");
        batch.src_ids.push_back(pad_to(sources[e], src_max));
        if (!guidances.empty()) {
            if (guidances[e].empty()) throw InputError("make_batch: empty guidance row");
            batch.guid_ids.push_back(pad_to(guidances[e], guid_max));
        }
        // Teacher forcing: input is the target shifted right behind BOS,
        // labels are the target followed by EOS.
        std::vector<int> input{kBosId};
        input.insert(input.end(), targets[e].begin(), targets[e].end());
        std::vector<int> labels(targets[e].begin(), targets[e].end());
        labels.push_back(kEosId);
        batch.tgt_input.push_back(pad_to(std::move(input), tgt_max + 1));
        batch.tgt_labels.push_back(pad_to(std::move(labels), tgt_max + 1));
    }
    return batch;
}

template <typename S>
struct ForwardResult {
    Tensor<S> loss;
    std::vector<Tensor<S>> logits;  // one [m x V] tensor per example
};

/// Transformer encoder-decoder with an optional guidance branch.
///
/// The encoder is shared between source and guidance inputs. Each decoder
/// layer runs causal self-attention, then (when enabled) a pre-norm
/// additive guidance cross-attention, then source cross-attention and the
/// feed-forward block, with residual + post-norm around the standard three
/// sub-blocks.
template <typename S>
class Model {
public:
    Model(ModelConfig config, Rng& init_rng) : config_(config) {
        config_.validate();
        build_params();
        initialize(init_rng);
    }

    const ModelConfig& config() const { return config_; }
    ParamStore<S>& params() { return params_; }
    const ParamStore<S>& params() const { return params_; }

    /// Encode a token sequence with the shared encoder. pad-masked
    /// self-attention keeps PAD keys invisible to content positions.
    Tensor<S> encode(const std::vector<int>& ids, const DropoutCtx<S>& drop = {}) const {
        const Index len = static_cast<Index>(ids.size());
        if (len == 0) throw InputError("encode: empty sequence");
        if (len > std::max(config_.max_src_len, config_.max_guid_len))
            throw InputError("encode: sequence of length " + std::to_string(len) +
                             " exceeds the configured maximum");
        std::vector<bool> valid(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) valid[i] = ids[i] != kPadId;
        const MaskMatrix mask = key_mask(len, valid);

        Tensor<S> x = add(embedding_rows(params_.at("enc.tok_emb"), ids),
                          slice_rows(params_.at("enc.pos_emb"), 0, len));
        for (int l = 0; l < config_.n_enc_layers; ++l) {
            const std::string p = "enc.l" + std::to_string(l) + ".";
            Tensor<S> attn = project_attention(p + "self", x, x, mask, drop);
            x = norm(p + "ln1", add(x, attn));
            x = norm(p + "ln2", add(x, drop(ffn(p, x))));
        }
        return x;
    }

    /// One decoder pass over the whole (teacher-forced) prefix.
    Tensor<S> decode_states(const std::vector<int>& tgt_input, const Tensor<S>& src_enc,
                            const std::vector<bool>& src_valid,
                            const Tensor<S>* guid_enc = nullptr,
                            const std::vector<bool>* guid_valid = nullptr,
                            const DropoutCtx<S>& drop = {}) const {
        const Index m = static_cast<Index>(tgt_input.size());
        if (m == 0) throw InputError("decode_states: empty target");
        if (m > config_.max_tgt_len)
            throw InputError("decode_states: target length exceeds configured maximum");
        if (config_.guidance_enabled && guid_enc == nullptr)
            throw InputError("guided model requires an encoded guidance");

        // Causal plus PAD-key masking. Row 0 is BOS, so no row ends up with
        // zero attendable keys.
        std::vector<bool> tgt_valid(tgt_input.size());
        for (std::size_t i = 0; i < tgt_input.size(); ++i) tgt_valid[i] = tgt_input[i] != kPadId;
        MaskMatrix self_mask = causal_mask(m);
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < m; ++j)
                self_mask(i, j) = self_mask(i, j) && tgt_valid[static_cast<std::size_t>(j)];
        const MaskMatrix src_mask = key_mask(m, src_valid);

        Tensor<S> x = add(embedding_rows(params_.at("dec.tok_emb"), tgt_input),
                          slice_rows(params_.at("dec.pos_emb"), 0, m));
        for (int l = 0; l < config_.n_dec_layers; ++l) {
            const std::string p = "dec.l" + std::to_string(l) + ".";
            Tensor<S> self_attn = project_attention(p + "self", x, x, self_mask, drop);
            x = norm(p + "ln1", add(x, self_attn));
            if (config_.guidance_enabled) {
                // Pre-norm additive branch: a zeroed output projection makes
                // this an exact identity.
                const MaskMatrix guid_mask = key_mask(m, *guid_valid);
                Tensor<S> queries = norm(p + "guid_ln", x);
                Tensor<S> guided = project_attention(p + "guid", queries, *guid_enc, guid_mask, drop);
                x = add(x, guided);
            }
            Tensor<S> cross = project_attention(p + "src", x, src_enc, src_mask, drop);
            x = norm(p + "ln2", add(x, cross));
            x = norm(p + "ln3", add(x, drop(ffn(p, x))));
        }
        return x;
    }

    Tensor<S> logits_from_states(const Tensor<S>& states) const {
        return add_bias_rows(matmul(states, params_.at("lm.w")), params_.at("lm.b"));
    }

    /// Teacher-forced loss over a padded batch: mean NLL over every
    /// non-PAD label position in the batch.
    ForwardResult<S> forward_train(const EncodedBatch& batch, const DropoutCtx<S>& drop = {}) const {
        if (batch.size() == 0) throw InputError("forward_train: empty batch");
        if (config_.guidance_enabled && batch.guid_ids.size() != batch.size())
            throw InputError("forward_train: guided model needs guidance rows");

        ForwardResult<S> result;
        std::vector<Tensor<S>> losses;
        Index total_positions = 0;
        for (std::size_t e = 0; e < batch.size(); ++e) {
            const auto& src = batch.src_ids[e];
            std::vector<bool> src_valid(src.size());
            for (std::size_t i = 0; i < src.size(); ++i) src_valid[i] = src[i] != kPadId;
            Tensor<S> src_enc = encode(src, drop);

            Tensor<S> states;
            if (config_.guidance_enabled) {
                const auto& guid = batch.guid_ids[e];
                std::vector<bool> guid_valid(guid.size());
                for (std::size_t i = 0; i < guid.size(); ++i) guid_valid[i] = guid[i] != kPadId;
                Tensor<S> guid_enc = encode(guid, drop);
                states = decode_states(batch.tgt_input[e], src_enc, src_valid, &guid_enc,
                                       &guid_valid, drop);
            } else {
                states = decode_states(batch.tgt_input[e], src_enc, src_valid, nullptr, nullptr,
                                       drop);
            }
            Tensor<S> logits = logits_from_states(states);
            Index count = 0;
            losses.push_back(cross_entropy_sum(logits, batch.tgt_labels[e], kPadId, &count));
            total_positions += count;
            result.logits.push_back(std::move(logits));
        }
        if (total_positions == 0)
            throw NumericError("forward_train: batch has no unpadded label positions");
        Tensor<S> total = losses.front();
        for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
        result.loss = scale(total, S(1) / static_cast<S>(total_positions));
        return result;
    }

    /// Next-token logits for an incremental prefix (no dropout, no graph).
    VectorX<S> next_token_logits(const std::vector<int>& prefix, const Tensor<S>& src_enc,
                                 const std::vector<bool>& src_valid,
                                 const Tensor<S>* guid_enc = nullptr,
                                 const std::vector<bool>* guid_valid = nullptr) const {
        NoGradGuard off;
        Tensor<S> states = decode_states(prefix, src_enc, src_valid, guid_enc, guid_valid);
        Tensor<S> last = slice_rows(states, static_cast<Index>(prefix.size()) - 1, 1);
        Tensor<S> logits = logits_from_states(last);
        return logits.flat();
    }

private:
    Tensor<S> norm(const std::string& prefix, const Tensor<S>& x) const {
        return layer_norm(x, params_.at(prefix + ".gain"), params_.at(prefix + ".bias"),
                          S(kLayerNormEps));
    }

    Tensor<S> ffn(const std::string& layer_prefix, const Tensor<S>& x) const {
        Tensor<S> hidden = gelu(add_bias_rows(matmul(x, params_.at(layer_prefix + "ffn.w1")),
                                              params_.at(layer_prefix + "ffn.b1")));
        return add_bias_rows(matmul(hidden, params_.at(layer_prefix + "ffn.w2")),
                             params_.at(layer_prefix + "ffn.b2"));
    }

    /// QKV projection + multi-head attention + output projection.
    Tensor<S> project_attention(const std::string& prefix, const Tensor<S>& queries,
                                const Tensor<S>& memory, const MaskMatrix& mask,
                                const DropoutCtx<S>& drop) const {
        Tensor<S> q = matmul(queries, params_.at(prefix + ".wq"));
        Tensor<S> k = matmul(memory, params_.at(prefix + ".wk"));
        Tensor<S> v = matmul(memory, params_.at(prefix + ".wv"));
        Tensor<S> out = attention(q, k, v, config_.n_heads, mask);
        return drop(matmul(out, params_.at(prefix + ".wo")));
    }

    void add_attention_block(const std::string& prefix) {
        const Index d = config_.d_model;
        params_.add(prefix + ".wq", {d, d});
        params_.add(prefix + ".wk", {d, d});
        params_.add(prefix + ".wv", {d, d});
        params_.add(prefix + ".wo", {d, d});
    }

    void add_norm(const std::string& prefix) {
        const Index d = config_.d_model;
        params_.add(prefix + ".gain", {d});
        params_.add(prefix + ".bias", {d});
    }

    void build_params() {
        const Index d = config_.d_model;
        const Index v = config_.vocab_size;
        params_.add("enc.tok_emb", {v, d});
        params_.add("enc.pos_emb", {std::max(config_.max_src_len, config_.max_guid_len), d});
        params_.add("dec.tok_emb", {v, d});
        params_.add("dec.pos_emb", {config_.max_tgt_len, d});
        for (int l = 0; l < config_.n_enc_layers; ++l) {
            const std::string p = "enc.l" + std::to_string(l) + ".";
            add_attention_block(p + "self");
            add_norm(p + "ln1");
            params_.add(p + "ffn.w1", {d, config_.d_ffn});
            params_.add(p + "ffn.b1", {config_.d_ffn});
            params_.add(p + "ffn.w2", {config_.d_ffn, d});
            params_.add(p + "ffn.b2", {d});
            add_norm(p + "ln2");
        }
        for (int l = 0; l < config_.n_dec_layers; ++l) {
            const std::string p = "dec.l" + std::to_string(l) + ".";
            add_attention_block(p + "self");
            add_norm(p + "ln1");
            if (config_.guidance_enabled) {
                add_norm(p + "guid_ln");
                add_attention_block(p + "guid");
            }
            add_attention_block(p + "src");
            add_norm(p + "ln2");
            params_.add(p + "ffn.w1", {d, config_.d_ffn});
            params_.add(p + "ffn.b1", {config_.d_ffn});
            params_.add(p + "ffn.w2", {config_.d_ffn, d});
            params_.add(p + "ffn.b2", {d});
            add_norm(p + "ln3");
        }
        params_.add("lm.w", {d, v});
        params_.add("lm.b", {v});
    }

    void initialize(Rng& rng) {
        for (auto& [name, t] : params_.items()) {
            if (name.ends_with(".gain")) {
                t.flat_mut().setOnes();
            } else if (name.ends_with(".bias") || name.ends_with(".b1") ||
                       name.ends_with(".b2") || name == "lm.b") {
                t.flat_mut().setZero();
            } else if (name.ends_with("emb")) {
                for (Index i = 0; i < t.size(); ++i)
                    t.flat_mut()[i] = static_cast<S>(rng.normal(0.0, 0.02));
            } else {
                // Fan-scaled uniform for projections.
                const double fan_in = static_cast<double>(t.rows());
                const double fan_out = static_cast<double>(t.cols());
                const double bound = std::sqrt(6.0 / (fan_in + fan_out));
                for (Index i = 0; i < t.size(); ++i)
                    t.flat_mut()[i] = static_cast<S>(rng.uniform(-bound, bound));
            }
        }
    }

    static constexpr double kLayerNormEps = 1e-5;

    ModelConfig config_;
    ParamStore<S> params_;
};

}  // namespace sumlab
