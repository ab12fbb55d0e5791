#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egomem/agent.hpp"
#include "egomem/attention.hpp"
#include "egomem/observation.hpp"
#include "egomem/tensor.hpp"
#include "egomem/util.hpp"

namespace egomem {

// Pose with continuous heading, the working representation once noise is
// applied. Discrete-bin poses convert losslessly.
struct PoseC {
    double x = 0, z = 0, theta = 0;

    PoseC() = default;
    PoseC(double x_, double z_, double theta_) : x(x_), z(z_), theta(theta_) {}
    PoseC(const Pose& p) : x(p.x), z(p.z), theta(p.theta()) {}
};

// Observation pose expressed in the query frame: translate by -p_q, rotate
// by -theta_q; the heading difference travels as (sin, cos).
struct RelativePose {
    double dx = 0, dz = 0;
    double sin_dt = 0, cos_dt = 1;
};

RelativePose relative_pose(const PoseC& p_t, const PoseC& p_q);
// Applies the inverse transform; relative_pose then inverse recovers p_t.
PoseC inverse_relative_pose(const RelativePose& rel, const PoseC& p_q);

struct NoiseParams {
    bool enabled = false;
    double pos_range = 0.0125;     // meters, uniform +-
    double heading_range = 0.157;  // radians, uniform +-
};

PoseC add_pose_noise(const PoseC& pose, Rng& rng, const NoiseParams& params);

// How the per-frame pose enters the observation encoding. `relative` is the
// full model; `global` feeds raw absolute pose; `none` zeroes the pose input.
enum class PoseMode { relative = 0, global = 1, none = 2 };

RelativePose pose_input(PoseMode mode, const PoseC& p_t, const PoseC& p_q);

enum class SampleMode { train = 0, inference = 1 };

// K ascending step indices in [0, T): an even grid, jittered inside each grid
// cell in train mode.
std::vector<std::size_t> sample_memory_frames(std::size_t T, std::size_t K, SampleMode mode,
                                              Rng& rng);

struct ModelConfig {
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t layers_enc = 2;
    std::size_t layers_dec = 2;
    std::size_t K = 16;
    std::size_t T = 128;
    std::size_t rays = kDefaultRays;
    std::size_t num_classes = 8;
    std::size_t pose_dim = 16;

    std::size_t F() const { return rays * (num_classes + 2); }

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

ModelConfig desk_preset();
ModelConfig paper_preset();  // d=128, heads=8, K=32, T=512

struct Linear {
    Tensor w, b;  // in x out, 1 x out

    static Linear init(std::size_t in, std::size_t out, std::mt19937_64& rng);
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

Tensor linear(Tape& tape, const Tensor& x, const Linear& l);

struct LayerNormParams {
    Tensor gain, bias;  // 1 x d each

    static LayerNormParams init(std::size_t d);
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Pre-norm transformer blocks: x += attn(ln(x)); x += ff(ln(x)).
struct EncoderLayer {
    AttentionParams attn;
    LayerNormParams ln1, ln2;
    Linear ff1, ff2;  // d -> 4d -> d, GELU

    static EncoderLayer init(std::size_t d, std::mt19937_64& rng);
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct DecoderLayer {
    AttentionParams self_attn, cross_attn;
    LayerNormParams ln1, ln2, ln3;
    Linear ff1, ff2;

    static DecoderLayer init(std::size_t d, std::mt19937_64& rng);
    void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Pose-joint observation encoder, memory self-attention encoder, query
// cross-attention decoder, and the local-state classifier head.
struct EnvMemoryModel {
    ModelConfig config;
    Linear pose_embed;  // 4 -> pose_dim
    Linear m_p;         // F + pose_dim -> d
    std::vector<EncoderLayer> encoder;
    LayerNormParams enc_norm;
    std::vector<DecoderLayer> decoder;
    LayerNormParams dec_norm;
    Linear m_h;  // F + d -> num_classes * 5

    static EnvMemoryModel init(const ModelConfig& config, std::uint64_t seed);
    std::vector<NamedParam> parameters() const;

    void save(const std::string& path) const;
    static EnvMemoryModel load(const std::string& path);
};

// Sinusoidal positional encoding of a memory slot index (1 x d, constant).
Tensor positional_encoding(std::size_t slot, std::size_t d);

// x_t = M_p([f_t ; pose_embed(rel)]) + PE(slot). Pass has_slot=false for the
// query token, which carries no positional term.
Tensor encode_observation(Tape& tape, const EnvMemoryModel& model, const FrameFeature& f,
                          const RelativePose& rel, std::size_t slot, bool has_slot = true);

// Encoder output, one d-vector per memory slot (K x d).
Tensor build_memory(Tape& tape, const EnvMemoryModel& model,
                    const std::vector<FrameFeature>& frames,
                    const std::vector<RelativePose>& rel_poses);

struct DecodeResult {
    Tensor h_q;                                           // 1 x d
    std::vector<std::vector<double>> cross_attention;     // per decoder layer, length K
};

DecodeResult decode_query(Tape& tape, const EnvMemoryModel& model, const Tensor& memory,
                          const FrameFeature& f_q);

// Lower-level entry points for objectives that substitute the query feature
// (e.g. a learned mask token). feat_row is 1 x F and may carry gradients.
Tensor encode_query_token(Tape& tape, const EnvMemoryModel& model, const Tensor& feat_row);
DecodeResult decode_query_token(Tape& tape, const EnvMemoryModel& model, const Tensor& memory,
                                const Tensor& token);

// Logits (num_classes x 5); softmax over each row is the direction
// distribution for that class.
Tensor predict_local_state(Tape& tape, const EnvMemoryModel& model, const Tensor& h_q,
                           const FrameFeature& f_q);

struct EnvFeatureResult {
    std::vector<double> h;                             // d, detached
    std::vector<std::size_t> memory_steps;             // the K sampled indices
    std::vector<std::vector<double>> cross_attention;  // per decoder layer
};

// Full pipeline for downstream use: sample memory frames, relative poses
// w.r.t. the query pose, build memory, decode.
EnvFeatureResult environment_feature(const EnvMemoryModel& model,
                                     const std::vector<FrameFeature>& features,
                                     const std::vector<Pose>& poses, std::size_t query_step,
                                     std::size_t K, SampleMode mode, Rng& rng,
                                     PoseMode pose_mode = PoseMode::relative,
                                     const NoiseParams& noise = {});

}  // namespace egomem
