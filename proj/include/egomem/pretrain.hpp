#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egomem/envmemory.hpp"
#include "egomem/localstate.hpp"
#include "egomem/observation.hpp"
#include "egomem/worldgen.hpp"

namespace egomem {

// One walkthrough with everything training needs: per-step features, poses
// and local-state labels. env_index points into Dataset::envs.
struct DatasetItem {
    std::size_t env_index = 0;
    std::string walkthrough_id;
    std::vector<FrameFeature> features;
    std::vector<Pose> poses;
    std::vector<LocalStateLabel> labels;

    std::size_t T() const { return poses.size(); }
};

struct Dataset {
    std::vector<EnvironmentSpec> envs;
    std::vector<DatasetItem> train;
    std::vector<DatasetItem> val;
};

enum class Objective { env_state = 0, ssl_masked = 1, pano_feat = 2, none = 3 };

Objective objective_from_string(const std::string& name);
std::string objective_to_string(Objective o);
PoseMode pose_mode_from_string(const std::string& name);
std::string pose_mode_to_string(PoseMode m);

struct PretrainConfig {
    Objective objective = Objective::env_state;
    PoseMode pose_mode = PoseMode::relative;
    bool noise_enabled = true;
    std::size_t epochs = 40;
    double lr = 1e-4;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct PretrainResult {
    std::vector<double> loss_curve;  // one entry per optimizer step
    std::vector<double> val_curve;   // one entry per epoch
    std::size_t best_epoch = 0;      // epoch whose weights were kept
};

// Local-state objective: cross-entropy per class over 5 directions, mean over
// classes, one (query, memory) instance per walkthrough per epoch. Keeps the
// weights from the epoch with the lowest held-out loss. Objective `none`
// returns immediately (the scratch baseline).
PretrainResult pretrain(const Dataset& dataset, const PretrainConfig& config,
                        EnvMemoryModel& model);

// Masked-query variant: the query feature is replaced by a learned mask token
// and a regression head reconstructs it from the decoded state (L2).
PretrainResult pretrain_ssl(const Dataset& dataset, const PretrainConfig& config,
                            EnvMemoryModel& model);

// Panoramic variant: regress the query-position features at heading offsets
// {0, 90, 180, 270} degrees through a 4-way regression head (L2).
PretrainResult pretrain_pano(const Dataset& dataset, const PretrainConfig& config,
                             EnvMemoryModel& model);

// Regression target of the panoramic variant: the four cardinal-offset
// features concatenated (length 4F); the first block is the query's own.
std::vector<double> pano_targets(const EnvironmentSpec& env, const Pose& q, std::size_t rays);

struct EvalReport {
    // AP per direction 1..4 (forward, right, behind, left); absent when the
    // direction has no positives in the eval pool.
    std::array<std::optional<double>, 4> ap;
    double map = 0;
    std::size_t n_instances = 0;
    // fraction of positive instances whose class appears in < k memory frames
    std::map<int, double> rare_fractions;

    std::string to_json() const;
};

// Uninterpolated AP of (score, is_positive) pairs: mean precision-at-rank
// over positives, stable descending sort; nullopt when nothing is positive.
std::optional<double> average_precision(std::vector<std::pair<double, bool>> scored);

// Uninterpolated AP over all (query, class) pairs, per direction; queries on
// a fixed stride-(T/16) grid with inference-mode memory.
EvalReport eval_ap(const EnvMemoryModel& model, const Dataset& dataset,
                   PoseMode pose_mode = PoseMode::relative, std::size_t workers = 1);

// Fraction of positive train instances whose target class appears in fewer
// than k of the K inference-grid memory frames, for k in {1, 2, 4, 8}.
std::map<int, double> rare_object_stats(const Dataset& dataset, std::size_t K);

}  // namespace egomem
