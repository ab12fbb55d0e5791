#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "egomem/envmemory.hpp"
#include "egomem/pretrain.hpp"

namespace egomem {

// One room-prediction instance: a query step, its N-step window (clipped by
// boundary repetition) and the ground-truth room label at the query pose.
struct RoomInstance {
    bool from_val = false;
    std::size_t item = 0;
    std::size_t step = 0;
    int label = 0;
    std::vector<double> h;  // precomputed environment feature; empty if unused
};

struct RoomConfig {
    bool use_env = true;
    bool freeze_env = true;
    std::size_t window = 8;
    std::size_t g_prime = 64;   // fused feature width
    std::size_t hidden = 128;   // classifier hidden (512 under the paper preset)
    std::size_t epochs = 10;
    double lr = 1e-3;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::size_t queries_per_walkthrough = 4;
    PoseMode pose_mode = PoseMode::relative;
};

// Window classifier: optional fuse layer (Eq.-5-style linear over [g; h]),
// max-pool over the window, 2-layer GELU classifier.
struct RoomModel {
    bool use_env = true;
    std::size_t G = 0, d = 0, n_rooms = 0;
    Linear fuse;  // G + d -> g_prime (absent when use_env == false)
    Linear mlp1, mlp2;

    static RoomModel init(const RoomConfig& config, std::size_t G, std::size_t d,
                          std::size_t n_rooms, std::uint64_t seed);
    std::vector<NamedParam> parameters() const;
    void save(const std::string& path) const;
    static RoomModel load(const std::string& path);
};

// g' = W^T [g; h] + b, rows independently.
Tensor fuse(Tape& tape, const Tensor& g, const Tensor& h, const Linear& l);

// Query steps on a fixed stride grid; steps whose pose sits in a doorway
// (no room label) are skipped.
std::vector<RoomInstance> make_room_instances(const Dataset& dataset, bool from_val,
                                              std::size_t per_walkthrough);

// Fills RoomInstance::h with the frozen-model environment feature.
void attach_env_features(std::vector<RoomInstance>& instances, const Dataset& dataset,
                         const EnvMemoryModel& model, PoseMode pose_mode, std::size_t workers);

struct RoomTrainResult {
    RoomModel model;
    std::vector<double> loss_curve;
};

// env_model may be null when config.use_env is false. With freeze_env the
// instances must carry precomputed h; otherwise the environment model is
// fine-tuned jointly through the fused head.
RoomTrainResult train_room(const Dataset& dataset, const std::vector<RoomInstance>& instances,
                           const RoomConfig& config, EnvMemoryModel* env_model);

// Class-probability rows (n_rooms each) for every instance.
std::vector<std::vector<double>> room_probs(const RoomModel& model, const Dataset& dataset,
                                            const std::vector<RoomInstance>& instances,
                                            const RoomConfig& config, std::size_t workers);

struct EntropySplit {
    std::vector<std::size_t> easy, hard;  // indices into the instance list
};

// The hard_fraction highest-entropy instances (by the given probability rows)
// form the hard set; ties resolve in input order.
EntropySplit entropy_split(const std::vector<std::vector<double>>& probs, double hard_fraction);

double prediction_entropy(const std::vector<double>& probs);

struct RoomEval {
    std::optional<double> all, easy, hard;
    std::string to_json() const;
};

RoomEval eval_room(const std::vector<std::vector<double>>& probs,
                   const std::vector<RoomInstance>& instances, const EntropySplit& split);

}  // namespace egomem
