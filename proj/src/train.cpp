#include "sumlab/train.hpp"

#include <cstring>

namespace sumlab {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr_peak <= 0.0) throw ConfigError("lr_peak must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (eval_interval_epochs <= 0.0) throw ConfigError("eval_interval_epochs must be positive");
    if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
        throw ConfigError("Adam betas must lie in [0, 1)");
    if (adam_eps <= 0.0) throw ConfigError("Adam eps must be positive");
    if (clip_norm < 0.0) throw ConfigError("clip_norm must be nonnegative");
}

double lr_at(long long step, long long total_steps, const TrainConfig& cfg) {
    if (total_steps <= cfg.warmup_steps)
        throw ConfigError("lr schedule: total_steps must exceed warmup_steps");
    if (step < 0 || step > total_steps)
        throw InputError("lr schedule: step outside [0, total_steps]");
    if (step <= cfg.warmup_steps)
        return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    return cfg.lr_peak * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - cfg.warmup_steps);
}

namespace detail {

nlohmann::json read_checkpoint_header(std::ifstream& in, const std::string& path,
                                      std::uint64_t* payload_offset) {
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw ParseError("not a checkpoint file (bad magic): " + path);
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in) throw TruncationError("checkpoint truncated in header length: " + path);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw TruncationError("checkpoint truncated in header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion)
        throw VersionError("checkpoint version " + std::to_string(version) +
                           " is not supported (expected " + std::to_string(kCheckpointVersion) +
                           ")");
    if (payload_offset)
        *payload_offset = sizeof(kCheckpointMagic) + sizeof(header_len) + header_len;
    return header;
}

}  // namespace detail

CheckpointInfo peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    const nlohmann::json header = detail::read_checkpoint_header(in, path, nullptr);
    CheckpointInfo info;
    info.version = header.at("version").get<int>();
    info.precision = header.at("dtype").get<std::string>() == "f64" ? 64 : 32;
    info.config = header.at("model_config").get<ModelConfig>();
    info.step = header.at("step").get<long long>();
    info.best_eval_rouge1 = header.at("best_eval_rouge1").get<double>();
    if (header.contains("guidance_mode"))
        info.guidance_mode = header.at("guidance_mode").get<std::string>();
    return info;
}

std::vector<TokenizedExample> tokenize_split(const std::vector<Example>& split,
                                             const Vocabulary& vocab, const ModelConfig& config) {
    std::vector<TokenizedExample> out;
    out.reserve(split.size());
    for (const auto& ex : split) {
        TokenizedExample tok;
        tok.id = ex.id;
        tok.src_ids = encode(vocab, tokenize(ex.source), config.max_src_len, true, true).ids;
        tok.tgt_ids = encode(vocab, tokenize(ex.summary), config.max_tgt_len - 1, false, false).ids;
        tok.reference = ex.summary;
        out.push_back(std::move(tok));
    }
    return out;
}

}  // namespace sumlab
