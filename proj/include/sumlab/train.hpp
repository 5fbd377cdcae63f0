#pragma once

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "sumlab/data.hpp"
#include "sumlab/decode.hpp"
#include "sumlab/extractive.hpp"
#include "sumlab/metrics.hpp"
#include "sumlab/model.hpp"
#include "sumlab/tensor.hpp"
#include "sumlab/text.hpp"

namespace sumlab {

struct TrainConfig {
    int batch_size = 8;
    double lr_peak = 5e-5;
    double weight_decay = 0.01;
    int warmup_steps = 1000;
    int epochs = 10;
    double eval_interval_epochs = 0.3;
    GuidanceMode guidance_mode = GuidanceMode::kNone;
    std::uint64_t seed = 0;
    int precision = 32;  // 32 or 64
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;  // 0 disables clipping

    void validate() const;
};

/// Linear warmup to lr_peak over warmup_steps, then linear decay to zero at
/// total_steps.
double lr_at(long long step, long long total_steps, const TrainConfig& cfg);

/// One decoupled-weight-decay Adam update on a flat parameter vector.
/// step_count is the 1-based update index used for bias correction.
template <typename S>
void adamw_update(Eigen::Ref<VectorX<S>> values, const VectorX<S>& grads, VectorX<S>& m,
                  VectorX<S>& v, long long step_count, double lr, double beta1, double beta2,
                  double eps, double weight_decay, const std::string& tensor_name = {}) {
    if (values.size() != grads.size() || values.size() != m.size() || values.size() != v.size())
        throw ShapeError("adamw_update: buffer sizes disagree for " + tensor_name);
    if (!grads.allFinite())
        throw NumericError("adamw_update: non-finite gradient in '" + tensor_name + "'");
    const S b1 = static_cast<S>(beta1), b2 = static_cast<S>(beta2);
    const S bias1 = S(1) - static_cast<S>(std::pow(beta1, static_cast<double>(step_count)));
    const S bias2 = S(1) - static_cast<S>(std::pow(beta2, static_cast<double>(step_count)));
    for (Index i = 0; i < values.size(); ++i) {
        const S g = grads[i];
        m[i] = b1 * m[i] + (S(1) - b1) * g;
        v[i] = b2 * v[i] + (S(1) - b2) * g * g;
        const S m_hat = m[i] / bias1;
        const S v_hat = v[i] / bias2;
        values[i] -= static_cast<S>(lr) * (m_hat / (std::sqrt(v_hat) + static_cast<S>(eps)) +
                                           static_cast<S>(weight_decay) * values[i]);
    }
}

/// Per-parameter Adam moments plus the shared step counter.
template <typename S>
class AdamW {
public:
    AdamW(const TrainConfig& cfg, ParamStore<S>& params) : cfg_(cfg) {
        for (auto& [name, t] : params.items()) {
            moments_m_[name] = VectorX<S>::Zero(t.size());
            moments_v_[name] = VectorX<S>::Zero(t.size());
        }
    }

    void step(ParamStore<S>& params, double lr) {
        ++step_count_;
        for (auto& [name, t] : params.items()) {
            if (!t.has_grad()) continue;  // parameter unused by this graph
            adamw_update<S>(t.flat_mut(), t.grad(), moments_m_.at(name), moments_v_.at(name),
                            step_count_, lr, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps,
                            cfg_.weight_decay, name);
        }
    }

    long long step_count() const { return step_count_; }
    void set_step_count(long long n) { step_count_ = n; }
    std::map<std::string, VectorX<S>>& moments_m() { return moments_m_; }
    std::map<std::string, VectorX<S>>& moments_v() { return moments_v_; }

private:
    TrainConfig cfg_;
    long long step_count_ = 0;
    std::map<std::string, VectorX<S>> moments_m_;
    std::map<std::string, VectorX<S>> moments_v_;
};

/// Scale all grads so the global L2 norm is at most max_norm. Returns the
/// pre-clip norm.
template <typename S>
double clip_grad_norm(ParamStore<S>& params, double max_norm) {
    double total_sq = 0.0;
    for (auto& [name, t] : params.items())
        if (t.has_grad()) total_sq += static_cast<double>(t.grad().squaredNorm());
    const double norm = std::sqrt(total_sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const S factor = static_cast<S>(max_norm / norm);
        for (auto& [name, t] : params.items())
            if (t.has_grad()) t.set_grad((t.grad() * factor).eval());
    }
    return norm;
}

// ---------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------

inline constexpr char kCheckpointMagic[6] = {'G', 'S', 'L', 'A', 'B', '1'};
inline constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
    int version = kCheckpointVersion;
    int precision = 32;  // payload scalar width
    ModelConfig config;
    long long step = 0;
    double best_eval_rouge1 = -1.0;
    std::string guidance_mode = "none";  // how the model was trained
};

namespace detail {

template <typename S>
void append_payload(std::string& out, const VectorX<S>& v) {
    // Little-endian scalars. The build targets little-endian hosts; the
    // loader rejects foreign files via the magic rather than byte-swapping.
    out.append(reinterpret_cast<const char*>(v.data()), sizeof(S) * static_cast<std::size_t>(v.size()));
}

nlohmann::json read_checkpoint_header(std::ifstream& in, const std::string& path,
                                      std::uint64_t* payload_offset);

}  // namespace detail

/// Magic, little-endian u64 header length, JSON header (config + tensor
/// directory), then raw scalar payloads. Optimizer moments are stored under
/// "opt.m."/"opt.v." tensor names.
template <typename S>
void save_checkpoint(const std::string& path, const Model<S>& model, AdamW<S>* optimizer,
                     const CheckpointInfo& info) {
    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["dtype"] = sizeof(S) == 8 ? "f64" : "f32";
    header["model_config"] = model.config();
    header["step"] = info.step;
    header["best_eval_rouge1"] = info.best_eval_rouge1;
    header["guidance_mode"] = info.guidance_mode;
    if (optimizer) header["opt_step_count"] = optimizer->step_count();

    std::string payload;
    nlohmann::json directory = nlohmann::json::array();
    const auto add_tensor = [&](const std::string& name, const Shape& shape,
                                const VectorX<S>& values) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = shape;
        entry["offset"] = payload.size();
        entry["nbytes"] = sizeof(S) * static_cast<std::size_t>(values.size());
        directory.push_back(entry);
        detail::append_payload(payload, values);
    };
    for (const auto& [name, t] : model.params().items()) add_tensor(name, t.shape(), t.flat());
    if (optimizer) {
        for (const auto& [name, t] : model.params().items()) {
            add_tensor("opt.m." + name, t.shape(), optimizer->moments_m().at(name));
            add_tensor("opt.v." + name, t.shape(), optimizer->moments_v().at(name));
        }
    }
    header["tensors"] = std::move(directory);

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

template <typename S>
struct LoadedCheckpoint {
    CheckpointInfo info;
    Model<S> model;
    std::map<std::string, VectorX<S>> moments_m;
    std::map<std::string, VectorX<S>> moments_v;
    long long opt_step_count = 0;
};

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::uint64_t payload_offset = 0;
    const nlohmann::json header = detail::read_checkpoint_header(in, path, &payload_offset);

    CheckpointInfo info;
    info.version = header.at("version").get<int>();
    const std::string dtype = header.at("dtype").get<std::string>();
    info.precision = dtype == "f64" ? 64 : 32;
    info.config = header.at("model_config").get<ModelConfig>();
    info.step = header.at("step").get<long long>();
    info.best_eval_rouge1 = header.at("best_eval_rouge1").get<double>();
    if (header.contains("guidance_mode"))
        info.guidance_mode = header.at("guidance_mode").get<std::string>();

    Rng throwaway(0);
    LoadedCheckpoint<S> loaded{info, Model<S>(info.config, throwaway), {}, {}, 0};
    if (header.contains("opt_step_count"))
        loaded.opt_step_count = header.at("opt_step_count").get<long long>();

    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());

    const auto read_values = [&](const nlohmann::json& entry, Index expect_size,
                                 const std::string& name) {
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        const std::uint64_t nbytes = entry.at("nbytes").get<std::uint64_t>();
        const std::size_t width = dtype == "f64" ? 8 : 4;
        if (nbytes != width * static_cast<std::uint64_t>(expect_size))
            throw ShapeError("checkpoint tensor '" + name + "' has " + std::to_string(nbytes) +
                             " bytes, expected " + std::to_string(width * expect_size));
        if (payload_offset + offset + nbytes > file_size)
            throw TruncationError("checkpoint truncated while reading tensor '" + name + "'");
        in.seekg(static_cast<std::streamoff>(payload_offset + offset));
        VectorX<S> values(expect_size);
        if (dtype == "f64") {
            VectorX<double> raw(expect_size);
            in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(nbytes));
            values = raw.template cast<S>();
        } else {
            VectorX<float> raw(expect_size);
            in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(nbytes));
            values = raw.template cast<S>();
        }
        if (!in) throw TruncationError("checkpoint truncated while reading tensor '" + name + "'");
        return values;
    };

    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& entry : header.at("tensors")) {
        by_name[entry.at("name").get<std::string>()] = &entry;
    }
    for (auto& [name, t] : loaded.model.params().items()) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw ShapeError("checkpoint is missing tensor '" + name + "'");
        const auto& entry = *it->second;
        const Shape stored = entry.at("shape").template get<Shape>();
        if (stored != t.shape())
            throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(stored) +
                             ", expected " + shape_str(t.shape()));
        t.flat_mut() = read_values(entry, t.size(), name);
    }
    for (const auto& [name, t] : loaded.model.params().items()) {
        const auto mit = by_name.find("opt.m." + name);
        const auto vit = by_name.find("opt.v." + name);
        if (mit == by_name.end() || vit == by_name.end()) continue;
        loaded.moments_m[name] = read_values(*mit->second, t.size(), "opt.m." + name);
        loaded.moments_v[name] = read_values(*vit->second, t.size(), "opt.v." + name);
    }
    return loaded;
}

CheckpointInfo peek_checkpoint(const std::string& path);

// ---------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------

struct TrainResult {
    long long steps_run = 0;
    double final_train_loss = 0.0;
    double best_train_loss = std::numeric_limits<double>::infinity();
    double best_eval_rouge1 = -1.0;
    long long best_eval_step = -1;
    bool diverged = false;
    std::vector<double> train_losses;  // one entry per step
    std::vector<std::pair<long long, CorpusRouge>> eval_history;
};

/// Pre-tokenized pair ready for batching. Target ids exclude BOS/EOS (batch
/// assembly adds them).
struct TokenizedExample {
    std::string id;
    std::vector<int> src_ids;
    std::vector<int> tgt_ids;
    std::string reference;
};

std::vector<TokenizedExample> tokenize_split(const std::vector<Example>& split,
                                             const Vocabulary& vocab, const ModelConfig& config);

namespace detail {
// Stream tags keep data order, guidance draws and dropout independent.
inline constexpr std::uint64_t kDataStream = 0x64617461ULL;
inline constexpr std::uint64_t kGuidanceStream = 0x67756964ULL;
inline constexpr std::uint64_t kDropoutStream = 0x64726f70ULL;
inline constexpr std::uint64_t kEvalGuidanceStream = 0x6576616cULL;
}  // namespace detail

template <typename S>
class Trainer {
public:
    Trainer(Model<S>& model, const Vocabulary& vocab, TrainConfig cfg)
        : model_(model), vocab_(vocab), cfg_(cfg) {
        cfg_.validate();
    }

    /// Runs the optimization loop. Writes one machine-readable JSON line
    /// per event to log_out when non-null. When checkpoint_path is set, the
    /// checkpoint is rewritten whenever eval ROUGE-1 strictly improves.
    TrainResult run(const std::vector<Example>& train_split,
                    const std::vector<Example>& eval_split, const GuidancePool* pool,
                    std::ostream* log_out = nullptr, const std::string& checkpoint_path = {}) {
        if (train_split.empty() || eval_split.empty())
            throw InputError("train: empty train or eval split");
        const bool guided = cfg_.guidance_mode != GuidanceMode::kNone;
        if (guided && pool == nullptr)
            throw InputError("train: guidance mode requires a guidance pool");
        if (guided != model_.config().guidance_enabled)
            throw ConfigError("train: guidance mode does not match the model's guidance branch");

        const auto train_tok = tokenize_split(train_split, vocab_, model_.config());
        const auto eval_tok = tokenize_split(eval_split, vocab_, model_.config());

        const long long steps_per_epoch =
            (static_cast<long long>(train_tok.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
        const long long total_steps = static_cast<long long>(cfg_.epochs) * steps_per_epoch;
        const long long eval_every = std::max<long long>(
            1, static_cast<long long>(cfg_.eval_interval_epochs * static_cast<double>(steps_per_epoch)));
        if (total_steps <= cfg_.warmup_steps)
            throw ConfigError("train: total steps (" + std::to_string(total_steps) +
                              ") must exceed warmup (" + std::to_string(cfg_.warmup_steps) + ")");

        Rng data_rng(cfg_.seed ^ detail::kDataStream);
        Rng guid_rng(cfg_.seed ^ detail::kGuidanceStream);
        Rng drop_rng(cfg_.seed ^ detail::kDropoutStream);
        DropoutCtx<S> drop;
        if (model_.config().dropout_rate > 0.0) {
            drop.rate = model_.config().dropout_rate;
            drop.rng = &drop_rng;
        }

        AdamW<S> optimizer(cfg_, model_.params());
        TrainResult result;
        const auto log_json = [&](const nlohmann::json& j) {
            if (log_out) (*log_out) << j.dump() << "\n";
        };

        long long step = 0;
        for (int epoch = 0; epoch < cfg_.epochs && !result.diverged; ++epoch) {
            std::vector<std::size_t> order(train_tok.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            data_rng.shuffle(order);

            for (std::size_t at = 0; at < order.size() && !result.diverged;
                 at += static_cast<std::size_t>(cfg_.batch_size)) {
                ++step;
                const double lr = lr_at(step, total_steps, cfg_);

                std::vector<std::vector<int>> sources, guidances, targets;
                for (std::size_t b = at;
                     b < std::min(order.size(), at + static_cast<std::size_t>(cfg_.batch_size));
                     ++b) {
                    const TokenizedExample& ex = train_tok[order[b]];
                    sources.push_back(ex.src_ids);
                    targets.push_back(ex.tgt_ids);
                    if (guided) {
                        const std::string& text =
                            sample_guidance(*pool, ex.id, cfg_.guidance_mode, guid_rng);
                        guidances.push_back(encode_guidance(text));
                    }
                }
                const EncodedBatch batch = make_batch(sources, guidances, targets);
                ForwardResult<S> fwd = model_.forward_train(batch, drop);
                const double loss = static_cast<double>(fwd.loss.item());
                result.train_losses.push_back(loss);
                result.final_train_loss = loss;
                result.best_train_loss = std::min(result.best_train_loss, loss);
                result.steps_run = step;

                if (!std::isfinite(loss)) {
                    // Divergence guard: stop and leave the last good
                    // checkpoint in place.
                    result.diverged = true;
                    log_json({{"step", step}, {"split", "train"}, {"event", "diverged"}});
                    break;
                }

                fwd.loss.backward();
                if (cfg_.clip_norm > 0.0) clip_grad_norm(model_.params(), cfg_.clip_norm);
                optimizer.step(model_.params(), lr);
                model_.params().zero_grads();
                log_json({{"step", step}, {"split", "train"}, {"loss", loss}, {"lr", lr}});

                if (step % eval_every == 0 || step == total_steps) {
                    const CorpusRouge rouge = evaluate_split(eval_tok, pool);
                    result.eval_history.emplace_back(step, rouge);
                    log_json({{"step", step},
                              {"split", "eval"},
                              {"rouge1", rouge.rouge1},
                              {"rouge2", rouge.rouge2},
                              {"rougeL", rouge.rougeL}});
                    if (rouge.rouge1 > result.best_eval_rouge1) {
                        result.best_eval_rouge1 = rouge.rouge1;
                        result.best_eval_step = step;
                        if (!checkpoint_path.empty()) {
                            CheckpointInfo info;
                            info.precision = cfg_.precision;
                            info.config = model_.config();
                            info.step = step;
                            info.best_eval_rouge1 = rouge.rouge1;
                            info.guidance_mode = guidance_mode_name(cfg_.guidance_mode);
                            save_checkpoint(checkpoint_path, model_, &optimizer, info);
                        }
                    }
                }
            }
        }
        return result;
    }

    /// Greedy-decode a tokenized split and score it against the references.
    CorpusRouge evaluate_split(const std::vector<TokenizedExample>& examples,
                               const GuidancePool* pool) {
        const bool guided = model_.config().guidance_enabled;
        // Inference guidance is fixed per example: the stream restarts from
        // the same seed on every evaluation.
        Rng eval_guid_rng(cfg_.seed ^ detail::kEvalGuidanceStream);
        std::vector<std::pair<std::string, std::string>> pairs;
        pairs.reserve(examples.size());
        for (const auto& ex : examples) {
            std::vector<int> guid_ids;
            if (guided) {
                const std::string& text =
                    sample_guidance(*pool, ex.id, cfg_.guidance_mode, eval_guid_rng);
                guid_ids = encode_guidance(text);
            }
            const std::vector<int> out =
                greedy_decode(model_, ex.src_ids, guid_ids, model_.config().max_tgt_len - 1);
            pairs.emplace_back(ids_to_text(vocab_, out), ex.reference);
        }
        return evaluate_corpus_text(pairs);
    }

    std::vector<int> encode_guidance(const std::string& text) const {
        return encode(vocab_, tokenize(text), model_.config().max_guid_len, true, true).ids;
    }

private:
    Model<S>& model_;
    const Vocabulary& vocab_;
    TrainConfig cfg_;
};

}  // namespace sumlab
