#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egomem/envmemory.hpp"
#include "egomem/pretrain.hpp"

namespace egomem {

// Inclusive step interval.
struct Interval {
    int s = 0, e = 0;
    int length() const { return e - s + 1; }
    auto operator<=>(const Interval&) const = default;
};

// |a intersect b| / |a union b| in step counts, inclusive intervals.
double iou(Interval a, Interval b);

enum class Template : int {
    see_o = 0,
    see_o_in_r = 1,
    see_o_then_o = 2,
    visit_r_then_r = 3,
    visit_or = 4,  // visit an object class or a room
    visit_o_then_o = 5,
    visit_o_in_r = 6,
};

enum class Qualifier : int { none = 0, first = 1, last = 2 };

inline constexpr int kNumTemplates = 7;
inline constexpr int kThenGapSteps = 16;  // max gap for "then" templates

// Structured episodic-memory query with its ground-truth moment.
// Slot layout: slot1 holds an object class (or the first room for
// visit_r_then_r); slot2 holds an object class for then-templates with an
// object second argument, or n_objects + room for room-valued slots
// (see_o_in_r, visit_o_in_r, visit_r_then_r, visit_or). Unused slots are -1.
struct MomentQuery {
    std::string walkthrough_id;
    Template tmpl = Template::see_o;
    int slot1 = -1;
    int slot2 = -1;
    Qualifier qual = Qualifier::none;
    Interval gt;
};

bool is_visit_template(Template t);

// Instantiates every template wherever its predicate pattern occurs in the
// walkthrough. Queries with several candidate moments are emitted twice with
// first/last qualifiers; unique ones carry qualifier none.
std::vector<MomentQuery> generate_queries(const EnvironmentSpec& env,
                                          const std::vector<Pose>& poses,
                                          const std::string& walkthrough_id);

// Independent predicate replay: recomputes the per-step predicates and checks
// the moment's boundary/maximality/qualifier conditions for its template.
bool verify_query(const EnvironmentSpec& env, const std::vector<Pose>& poses,
                  const MomentQuery& q);

std::string query_to_jsonl(const MomentQuery& q);
MomentQuery query_from_jsonl(const std::string& line);

// one-hot(template) + one-hot(slot1 over |O|) + one-hot(slot2 over |O|+|R|)
// + one-hot(qualifier); length 7 + |O| + (|O|+|R|) + 3.
std::vector<double> raw_query_encoding(const MomentQuery& q, std::size_t n_objects,
                                       std::size_t n_rooms);

struct LocalizerConfig {
    bool use_env = true;
    bool freeze_env = true;
    std::size_t n_clips = 32;
    std::size_t max_span = 16;  // candidate windows span < max_span clips... see N_c/2
    std::size_t d_q = 32;       // query embedding width
    std::size_t g_prime = 64;   // fused clip feature width
    std::size_t hidden = 128;
    std::size_t epochs = 8;
    double lr = 1e-3;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    PoseMode pose_mode = PoseMode::relative;
};

// Exhaustive-window proposal scorer over N_c clips: fuse clip features with
// environment features, max-pool each candidate window, score with an MLP
// conditioned on the query embedding.
struct LocalizerModel {
    bool use_env = true;
    std::size_t G = 0, d = 0;
    std::size_t n_objects = 0, n_rooms = 0;
    std::size_t n_clips = 32, max_span = 16;
    Linear fuse;        // G + d -> g_prime (absent when use_env == false)
    Linear query_proj;  // raw encoding -> d_q
    Linear mlp1, mlp2;  // [pooled; q] -> hidden -> 1

    static LocalizerModel init(const LocalizerConfig& config, std::size_t G, std::size_t d,
                               std::size_t n_objects, std::size_t n_rooms, std::uint64_t seed);
    std::vector<NamedParam> parameters() const;
    void save(const std::string& path) const;
    static LocalizerModel load(const std::string& path);
};

// Per-walkthrough clip features: g = mean frame feature per clip, h =
// environment feature at the clip center (empty when unused).
struct ClipFeatures {
    std::vector<std::vector<double>> g;  // n_clips x G
    std::vector<std::vector<double>> h;  // n_clips x d, or empty
    std::vector<std::size_t> centers;    // center step per clip
    std::vector<Interval> clip_steps;    // step range per clip
};

ClipFeatures make_clip_features(const DatasetItem& item, std::size_t n_clips,
                                const EnvMemoryModel* env_model, PoseMode pose_mode);

// All candidate windows (i, j) with 0 <= i <= j < n_clips and span <= max_span,
// enumerated in (start, end) order.
std::vector<Interval> candidate_windows(std::size_t n_clips, std::size_t max_span);

struct ScoredWindow {
    Interval clips;  // window in clip indices
    Interval steps;  // same window in step indices
    double score = 0;
};

// Windows sorted by score descending; ties by earlier start, then earlier end.
std::vector<ScoredWindow> localize(const LocalizerModel& model, const ClipFeatures& clips,
                                   const MomentQuery& q);

// True iff any of the top n windows overlaps gt with IoU > m.
bool rank_at(const std::vector<ScoredWindow>& ranked, Interval gt, std::size_t n, double m);

// Training target per window (2D-TAN-style IoU scaling).
double window_target(Interval window_steps, Interval gt);

struct EpmInstance {
    bool from_val = false;
    std::size_t item = 0;  // index into the split
    MomentQuery query;
};

struct EpmTrainResult {
    LocalizerModel model;
    std::vector<double> loss_curve;
    std::size_t dropped_long = 0;  // gt longer than max_span clips
};

// clip feature tables are per item, parallel to the dataset splits.
struct ClipTable {
    std::vector<ClipFeatures> train, val;
};

ClipTable make_clip_table(const Dataset& dataset, std::size_t n_clips,
                          const EnvMemoryModel* env_model, PoseMode pose_mode,
                          std::size_t workers);

EpmTrainResult train_localizer(const Dataset& dataset, const ClipTable& clips,
                               const std::vector<EpmInstance>& instances,
                               const LocalizerConfig& config);

struct EpmEval {
    // R1 at each IoU threshold, overall and per group/template
    std::map<std::string, std::map<std::string, double>> r1;  // group -> "0.3" -> value
    std::map<std::string, std::size_t> counts;
    std::string to_json() const;
};

EpmEval eval_localizer(const LocalizerModel& model, const Dataset& dataset,
                       const ClipTable& clips, const std::vector<EpmInstance>& instances,
                       const std::vector<double>& thresholds, std::size_t workers);

}  // namespace egomem
