#include "egomem/envmemory.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "egomem/checkpoint.hpp"

namespace egomem {

RelativePose relative_pose(const PoseC& p_t, const PoseC& p_q) {
    const double dx = p_t.x - p_q.x;
    const double dz = p_t.z - p_q.z;
    const double c = std::cos(p_q.theta), s = std::sin(p_q.theta);
    RelativePose rel;
    rel.dx = dx * c - dz * s;
    rel.dz = dx * s + dz * c;
    rel.sin_dt = std::sin(p_t.theta - p_q.theta);
    rel.cos_dt = std::cos(p_t.theta - p_q.theta);
    return rel;
}

PoseC inverse_relative_pose(const RelativePose& rel, const PoseC& p_q) {
    const double c = std::cos(p_q.theta), s = std::sin(p_q.theta);
    PoseC p;
    p.x = p_q.x + rel.dx * c + rel.dz * s;
    p.z = p_q.z - rel.dx * s + rel.dz * c;
    p.theta = p_q.theta + std::atan2(rel.sin_dt, rel.cos_dt);
    return p;
}

PoseC add_pose_noise(const PoseC& pose, Rng& rng, const NoiseParams& params) {
    if (!params.enabled) return pose;
    PoseC p = pose;
    p.x += rng.uniform(-params.pos_range, params.pos_range);
    p.z += rng.uniform(-params.pos_range, params.pos_range);
    p.theta += rng.uniform(-params.heading_range, params.heading_range);
    return p;
}

RelativePose pose_input(PoseMode mode, const PoseC& p_t, const PoseC& p_q) {
    switch (mode) {
        case PoseMode::relative:
            return relative_pose(p_t, p_q);
        case PoseMode::global:
            return {p_t.x, p_t.z, std::sin(p_t.theta), std::cos(p_t.theta)};
        case PoseMode::none:
            return {0, 0, 0, 1};
    }
    return {};
}

std::vector<std::size_t> sample_memory_frames(std::size_t T, std::size_t K, SampleMode mode,
                                              Rng& rng) {
    if (K > T) throw std::invalid_argument("sample_memory_frames: K exceeds walkthrough length");
    if (K == 0) throw std::invalid_argument("sample_memory_frames: K must be positive");
    std::vector<std::size_t> steps(K);
    for (std::size_t i = 0; i < K; ++i) {
        const std::size_t base = i * T / K;
        const std::size_t cell = (i + 1) * T / K - base;
        steps[i] = mode == SampleMode::train ? base + rng.uniform_int(cell) : base;
    }
    return steps;
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["d"] = d;
    j["heads"] = heads;
    j["layers_enc"] = layers_enc;
    j["layers_dec"] = layers_dec;
    j["K"] = K;
    j["T"] = T;
    j["rays"] = rays;
    j["num_classes"] = num_classes;
    j["pose_dim"] = pose_dim;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig c;
    c.d = j["d"].get<std::size_t>();
    c.heads = j["heads"].get<std::size_t>();
    c.layers_enc = j["layers_enc"].get<std::size_t>();
    c.layers_dec = j["layers_dec"].get<std::size_t>();
    c.K = j["K"].get<std::size_t>();
    c.T = j["T"].get<std::size_t>();
    c.rays = j["rays"].get<std::size_t>();
    c.num_classes = j["num_classes"].get<std::size_t>();
    c.pose_dim = j["pose_dim"].get<std::size_t>();
    return c;
}

ModelConfig desk_preset() { return ModelConfig{}; }

ModelConfig paper_preset() {
    ModelConfig c;
    c.d = 128;
    c.heads = 8;
    c.K = 32;
    c.T = 512;
    return c;
}

Linear Linear::init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    Linear l;
    l.w = Tensor::param(in, out, in, rng);
    l.b = Tensor::zeros(1, out, true);
    return l;
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

Tensor linear(Tape& tape, const Tensor& x, const Linear& l) {
    return add_row(tape, matmul(tape, x, l.w), l.b);
}

LayerNormParams LayerNormParams::init(std::size_t d) {
    LayerNormParams p;
    p.gain = Tensor::full(1, d, 1.0, true);
    p.bias = Tensor::zeros(1, d, true);
    return p;
}

void LayerNormParams::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".bias", bias});
}

EncoderLayer EncoderLayer::init(std::size_t d, std::mt19937_64& rng) {
    EncoderLayer l;
    l.attn = AttentionParams::init(d, rng);
    l.ln1 = LayerNormParams::init(d);
    l.ln2 = LayerNormParams::init(d);
    l.ff1 = Linear::init(d, 4 * d, rng);
    l.ff2 = Linear::init(4 * d, d, rng);
    return l;
}

void EncoderLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    attn.collect(prefix + ".attn", out);
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    ff1.collect(prefix + ".ff1", out);
    ff2.collect(prefix + ".ff2", out);
}

DecoderLayer DecoderLayer::init(std::size_t d, std::mt19937_64& rng) {
    DecoderLayer l;
    l.self_attn = AttentionParams::init(d, rng);
    l.cross_attn = AttentionParams::init(d, rng);
    l.ln1 = LayerNormParams::init(d);
    l.ln2 = LayerNormParams::init(d);
    l.ln3 = LayerNormParams::init(d);
    l.ff1 = Linear::init(d, 4 * d, rng);
    l.ff2 = Linear::init(4 * d, d, rng);
    return l;
}

void DecoderLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    self_attn.collect(prefix + ".self", out);
    cross_attn.collect(prefix + ".cross", out);
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    ln3.collect(prefix + ".ln3", out);
    ff1.collect(prefix + ".ff1", out);
    ff2.collect(prefix + ".ff2", out);
}

EnvMemoryModel EnvMemoryModel::init(const ModelConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    EnvMemoryModel m;
    m.config = config;
    m.pose_embed = Linear::init(4, config.pose_dim, rng);
    m.m_p = Linear::init(config.F() + config.pose_dim, config.d, rng);
    for (std::size_t i = 0; i < config.layers_enc; ++i)
        m.encoder.push_back(EncoderLayer::init(config.d, rng));
    m.enc_norm = LayerNormParams::init(config.d);
    for (std::size_t i = 0; i < config.layers_dec; ++i)
        m.decoder.push_back(DecoderLayer::init(config.d, rng));
    m.dec_norm = LayerNormParams::init(config.d);
    m.m_h = Linear::init(config.F() + config.d, config.num_classes * 5, rng);
    return m;
}

std::vector<NamedParam> EnvMemoryModel::parameters() const {
    std::vector<NamedParam> out;
    pose_embed.collect("pose_embed", out);
    m_p.collect("m_p", out);
    for (std::size_t i = 0; i < encoder.size(); ++i)
        encoder[i].collect("enc" + std::to_string(i), out);
    enc_norm.collect("enc_norm", out);
    for (std::size_t i = 0; i < decoder.size(); ++i)
        decoder[i].collect("dec" + std::to_string(i), out);
    dec_norm.collect("dec_norm", out);
    m_h.collect("m_h", out);
    return out;
}

void EnvMemoryModel::save(const std::string& path) const {
    save_checkpoint(path, parameters(), config.to_json());
}

EnvMemoryModel EnvMemoryModel::load(const std::string& path) {
    const LoadedCheckpoint loaded = load_checkpoint(path);
    EnvMemoryModel m = init(ModelConfig::from_json(loaded.hyper_json), 0);
    restore_params(m.parameters(), loaded);
    return m;
}

Tensor positional_encoding(std::size_t slot, std::size_t d) {
    Tensor pe(1, d, false);
    for (std::size_t j = 0; j < d; ++j) {
        const std::size_t pair = j - j % 2;
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(pair) / d);
        pe[j] = (j % 2 == 0) ? std::sin(slot * freq) : std::cos(slot * freq);
    }
    return pe;
}

Tensor encode_observation(Tape& tape, const EnvMemoryModel& model, const FrameFeature& f,
                          const RelativePose& rel, std::size_t slot, bool has_slot) {
    if (f.values.size() != model.config.F())
        throw std::invalid_argument("encode_observation: feature size " +
                                    std::to_string(f.values.size()) + " does not match model F=" +
                                    std::to_string(model.config.F()));
    const Tensor feat = Tensor::from_values(1, f.values.size(), f.values);
    const Tensor pose = Tensor::from_values(1, 4, {rel.dx, rel.dz, rel.sin_dt, rel.cos_dt});
    const Tensor embedded = linear(tape, pose, model.pose_embed);
    Tensor x = linear(tape, concat_cols(tape, {feat, embedded}), model.m_p);
    if (has_slot) x = add_row(tape, x, positional_encoding(slot, model.config.d));
    return x;
}

namespace {

Tensor feed_forward(Tape& tape, const Tensor& x, const Linear& ff1, const Linear& ff2) {
    return linear(tape, gelu(tape, linear(tape, x, ff1)), ff2);
}

}  // namespace

Tensor build_memory(Tape& tape, const EnvMemoryModel& model,
                    const std::vector<FrameFeature>& frames,
                    const std::vector<RelativePose>& rel_poses) {
    if (frames.empty() || frames.size() != rel_poses.size())
        throw std::invalid_argument("build_memory: frame/pose count mismatch or empty");
    std::vector<Tensor> rows;
    rows.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i)
        rows.push_back(encode_observation(tape, model, frames[i], rel_poses[i], i));
    Tensor x = concat_rows(tape, rows);
    for (const EncoderLayer& l : model.encoder) {
        const Tensor n1 = layer_norm(tape, x, l.ln1.gain, l.ln1.bias);
        x = add(tape, x, multi_head_attention(tape, n1, n1, n1, l.attn, model.config.heads).output);
        const Tensor n2 = layer_norm(tape, x, l.ln2.gain, l.ln2.bias);
        x = add(tape, x, feed_forward(tape, n2, l.ff1, l.ff2));
    }
    return layer_norm(tape, x, model.enc_norm.gain, model.enc_norm.bias);
}

Tensor encode_query_token(Tape& tape, const EnvMemoryModel& model, const Tensor& feat_row) {
    if (feat_row.rows() != 1 || feat_row.cols() != model.config.F())
        throw std::invalid_argument("encode_query_token: feature row shape mismatch");
    const Tensor pose = Tensor::from_values(1, 4, {0, 0, 0, 1});
    const Tensor embedded = linear(tape, pose, model.pose_embed);
    return linear(tape, concat_cols(tape, {feat_row, embedded}), model.m_p);
}

DecodeResult decode_query(Tape& tape, const EnvMemoryModel& model, const Tensor& memory,
                          const FrameFeature& f_q) {
    if (f_q.values.size() != model.config.F())
        throw std::invalid_argument("decode_query: query feature size mismatch");
    return decode_query_token(
        tape, model, memory,
        encode_query_token(tape, model, Tensor::from_values(1, f_q.values.size(), f_q.values)));
}

DecodeResult decode_query_token(Tape& tape, const EnvMemoryModel& model, const Tensor& memory,
                                const Tensor& token) {
    if (memory.rows() == 0) throw std::invalid_argument("decode_query: empty memory");
    DecodeResult result;
    Tensor x = token;
    for (const DecoderLayer& l : model.decoder) {
        const Tensor n1 = layer_norm(tape, x, l.ln1.gain, l.ln1.bias);
        x = add(tape, x,
                multi_head_attention(tape, n1, n1, n1, l.self_attn, model.config.heads).output);
        const Tensor n2 = layer_norm(tape, x, l.ln2.gain, l.ln2.bias);
        AttentionResult cross =
            multi_head_attention(tape, n2, memory, memory, l.cross_attn, model.config.heads);
        result.cross_attention.push_back(cross.attn_weights);
        x = add(tape, x, cross.output);
        const Tensor n3 = layer_norm(tape, x, l.ln3.gain, l.ln3.bias);
        x = add(tape, x, feed_forward(tape, n3, l.ff1, l.ff2));
    }
    result.h_q = layer_norm(tape, x, model.dec_norm.gain, model.dec_norm.bias);
    return result;
}

Tensor predict_local_state(Tape& tape, const EnvMemoryModel& model, const Tensor& h_q,
                           const FrameFeature& f_q) {
    if (h_q.rows() != 1 || h_q.cols() != model.config.d)
        throw std::invalid_argument("predict_local_state: h_q shape mismatch");
    const Tensor feat = Tensor::from_values(1, f_q.values.size(), f_q.values);
    const Tensor logits = linear(tape, concat_cols(tape, {feat, h_q}), model.m_h);
    return reshape(tape, logits, model.config.num_classes, 5);
}

EnvFeatureResult environment_feature(const EnvMemoryModel& model,
                                     const std::vector<FrameFeature>& features,
                                     const std::vector<Pose>& poses, std::size_t query_step,
                                     std::size_t K, SampleMode mode, Rng& rng, PoseMode pose_mode,
                                     const NoiseParams& noise) {
    if (query_step >= features.size())
        throw std::out_of_range("environment_feature: query step out of range");
    if (features.size() != poses.size())
        throw std::invalid_argument("environment_feature: feature/pose count mismatch");

    EnvFeatureResult result;
    result.memory_steps = sample_memory_frames(features.size(), K, mode, rng);

    const PoseC p_q = add_pose_noise(PoseC(poses[query_step]), rng, noise);
    std::vector<FrameFeature> frames;
    std::vector<RelativePose> rels;
    frames.reserve(K);
    rels.reserve(K);
    for (std::size_t s : result.memory_steps) {
        frames.push_back(features[s]);
        rels.push_back(pose_input(pose_mode, add_pose_noise(PoseC(poses[s]), rng, noise), p_q));
    }

    Tape tape;
    const Tensor memory = build_memory(tape, model, frames, rels);
    DecodeResult decoded = decode_query(tape, model, memory, features[query_step]);
    result.h = decoded.h_q.values();
    result.cross_attention = std::move(decoded.cross_attention);
    return result;
}

}  // namespace egomem
