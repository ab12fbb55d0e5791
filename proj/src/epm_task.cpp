#include "egomem/epm_task.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "egomem/checkpoint.hpp"
#include "egomem/observation.hpp"
#include "egomem/util.hpp"

namespace egomem {

double iou(Interval a, Interval b) {
    if (a.s > a.e || b.s > b.e) throw std::invalid_argument("iou: malformed interval");
    const int inter = std::min(a.e, b.e) - std::max(a.s, b.s) + 1;
    if (inter <= 0) return 0.0;
    const int uni = std::max(a.e, b.e) - std::min(a.s, b.s) + 1;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

bool is_visit_template(Template t) {
    return t == Template::visit_r_then_r || t == Template::visit_or ||
           t == Template::visit_o_then_o || t == Template::visit_o_in_r;
}

namespace {

const char* template_name(Template t) {
    switch (t) {
        case Template::see_o: return "see_o";
        case Template::see_o_in_r: return "see_o_in_r";
        case Template::see_o_then_o: return "see_o_then_o";
        case Template::visit_r_then_r: return "visit_r_then_r";
        case Template::visit_or: return "visit_or";
        case Template::visit_o_then_o: return "visit_o_then_o";
        case Template::visit_o_in_r: return "visit_o_in_r";
    }
    return "?";
}

// Per-step predicate tracks for one walkthrough.
struct Tracks {
    // [class][t] / [room][t]
    std::vector<std::vector<bool>> seen_obj;
    std::vector<std::vector<bool>> visited_obj;
    std::vector<std::vector<bool>> in_room;
};

Tracks compute_tracks(const EnvironmentSpec& env, const std::vector<Pose>& poses) {
    const std::size_t T = poses.size();
    const std::size_t C = env.object_taxonomy.size();
    const std::size_t R = env.room_taxonomy.size();
    Tracks tr;
    tr.seen_obj.assign(C, std::vector<bool>(T, false));
    tr.visited_obj.assign(C, std::vector<bool>(T, false));
    tr.in_room.assign(R, std::vector<bool>(T, false));
    for (std::size_t t = 0; t < T; ++t) {
        const Pose& p = poses[t];
        for (std::size_t i = 0; i < env.objects.size(); ++i) {
            const std::size_t c = env.objects[i].class_id;
            if (!tr.seen_obj[c][t] &&
                seen_fraction(env, p, static_cast<int>(i)) >= kSeenThreshold)
                tr.seen_obj[c][t] = true;
            if (!tr.visited_obj[c][t] && is_visited_object(env, p.x, p.z, static_cast<int>(i)))
                tr.visited_obj[c][t] = true;
        }
        const auto room = room_at(env, p.x, p.z);
        if (room) tr.in_room[*room][t] = true;
    }
    return tr;
}

std::vector<Interval> maximal_intervals(const std::vector<bool>& track) {
    std::vector<Interval> out;
    int start = -1;
    for (std::size_t t = 0; t <= track.size(); ++t) {
        const bool v = t < track.size() && track[t];
        if (v && start < 0) start = static_cast<int>(t);
        if (!v && start >= 0) {
            out.push_back({start, static_cast<int>(t) - 1});
            start = -1;
        }
    }
    return out;
}

std::vector<bool> logical_and(const std::vector<bool>& a, const std::vector<bool>& b) {
    std::vector<bool> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
    return out;
}

// "A then B" moments: end-of-A to end-of-B, B not earlier than A, gap between
// A's end and B's start at most kThenGapSteps.
std::vector<Interval> then_moments(const std::vector<Interval>& first,
                                   const std::vector<Interval>& second) {
    std::vector<Interval> out;
    for (const Interval& a : first)
        for (const Interval& b : second) {
            if (b.s < a.s || b.e < a.e) continue;
            if (b == a) continue;
            if (b.s - a.e > kThenGapSteps) continue;
            out.push_back({a.e, b.e});
        }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void emit(std::vector<MomentQuery>& out, const std::string& walkthrough_id, Template tmpl,
          int slot1, int slot2, std::vector<Interval> candidates) {
    if (candidates.empty()) return;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    MomentQuery q;
    q.walkthrough_id = walkthrough_id;
    q.tmpl = tmpl;
    q.slot1 = slot1;
    q.slot2 = slot2;
    if (candidates.size() == 1) {
        q.qual = Qualifier::none;
        q.gt = candidates.front();
        out.push_back(q);
        return;
    }
    q.qual = Qualifier::first;
    q.gt = candidates.front();
    out.push_back(q);
    q.qual = Qualifier::last;
    q.gt = candidates.back();
    out.push_back(q);
}

}  // namespace

std::vector<MomentQuery> generate_queries(const EnvironmentSpec& env,
                                          const std::vector<Pose>& poses,
                                          const std::string& walkthrough_id) {
    const Tracks tr = compute_tracks(env, poses);
    const int C = static_cast<int>(env.object_taxonomy.size());
    const int R = static_cast<int>(env.room_taxonomy.size());
    std::vector<MomentQuery> out;

    std::vector<std::vector<Interval>> seen(C), visited(C), rooms(R);
    for (int c = 0; c < C; ++c) seen[c] = maximal_intervals(tr.seen_obj[c]);
    for (int c = 0; c < C; ++c) visited[c] = maximal_intervals(tr.visited_obj[c]);
    for (int r = 0; r < R; ++r) rooms[r] = maximal_intervals(tr.in_room[r]);

    for (int c = 0; c < C; ++c) emit(out, walkthrough_id, Template::see_o, c, -1, seen[c]);

    for (int c = 0; c < C; ++c)
        for (int r = 0; r < R; ++r)
            emit(out, walkthrough_id, Template::see_o_in_r, c, C + r,
                 maximal_intervals(logical_and(tr.seen_obj[c], tr.in_room[r])));

    for (int c1 = 0; c1 < C; ++c1)
        for (int c2 = 0; c2 < C; ++c2) {
            if (c1 == c2) continue;
            emit(out, walkthrough_id, Template::see_o_then_o, c1, c2,
                 then_moments(seen[c1], seen[c2]));
        }

    for (int r1 = 0; r1 < R; ++r1)
        for (int r2 = 0; r2 < R; ++r2) {
            if (r1 == r2) continue;
            emit(out, walkthrough_id, Template::visit_r_then_r, r1, C + r2,
                 then_moments(rooms[r1], rooms[r2]));
        }

    for (int c = 0; c < C; ++c) emit(out, walkthrough_id, Template::visit_or, -1, c, visited[c]);
    for (int r = 0; r < R; ++r) emit(out, walkthrough_id, Template::visit_or, -1, C + r, rooms[r]);

    for (int c1 = 0; c1 < C; ++c1)
        for (int c2 = 0; c2 < C; ++c2) {
            if (c1 == c2) continue;
            emit(out, walkthrough_id, Template::visit_o_then_o, c1, c2,
                 then_moments(visited[c1], visited[c2]));
        }

    for (int c = 0; c < C; ++c)
        for (int r = 0; r < R; ++r)
            emit(out, walkthrough_id, Template::visit_o_in_r, c, C + r,
                 maximal_intervals(logical_and(tr.visited_obj[c], tr.in_room[r])));

    return out;
}

namespace {

// Verification-side predicate evaluation, written directly against the
// geometry predicates rather than reusing the generation helpers.
bool step_pred_object_seen(const EnvironmentSpec& env, const Pose& p, int c) {
    for (std::size_t i = 0; i < env.objects.size(); ++i)
        if (env.objects[i].class_id == c &&
            seen_fraction(env, p, static_cast<int>(i)) >= kSeenThreshold)
            return true;
    return false;
}

bool step_pred_object_visited(const EnvironmentSpec& env, const Pose& p, int c) {
    for (std::size_t i = 0; i < env.objects.size(); ++i)
        if (env.objects[i].class_id == c && is_visited_object(env, p.x, p.z, static_cast<int>(i)))
            return true;
    return false;
}

bool step_pred_in_room(const EnvironmentSpec& env, const Pose& p, int r) {
    return is_visited_room(env, p.x, p.z, r);
}

// Per-step truth value of a simple (non-"then") template's predicate.
std::vector<bool> replay_track(const EnvironmentSpec& env, const std::vector<Pose>& poses,
                               const MomentQuery& q) {
    const int C = static_cast<int>(env.object_taxonomy.size());
    std::vector<bool> track(poses.size(), false);
    for (std::size_t t = 0; t < poses.size(); ++t) {
        const Pose& p = poses[t];
        switch (q.tmpl) {
            case Template::see_o:
                track[t] = step_pred_object_seen(env, p, q.slot1);
                break;
            case Template::see_o_in_r:
                track[t] = step_pred_object_seen(env, p, q.slot1) &&
                           step_pred_in_room(env, p, q.slot2 - C);
                break;
            case Template::visit_or:
                track[t] = q.slot2 < C ? step_pred_object_visited(env, p, q.slot2)
                                       : step_pred_in_room(env, p, q.slot2 - C);
                break;
            case Template::visit_o_in_r:
                track[t] = step_pred_object_visited(env, p, q.slot1) &&
                           step_pred_in_room(env, p, q.slot2 - C);
                break;
            default:
                throw std::logic_error("replay_track: not a simple template");
        }
    }
    return track;
}

// For "then" templates, the two component tracks.
std::pair<std::vector<bool>, std::vector<bool>> replay_then_tracks(
    const EnvironmentSpec& env, const std::vector<Pose>& poses, const MomentQuery& q) {
    const int C = static_cast<int>(env.object_taxonomy.size());
    std::vector<bool> a(poses.size()), b(poses.size());
    for (std::size_t t = 0; t < poses.size(); ++t) {
        const Pose& p = poses[t];
        switch (q.tmpl) {
            case Template::see_o_then_o:
                a[t] = step_pred_object_seen(env, p, q.slot1);
                b[t] = step_pred_object_seen(env, p, q.slot2);
                break;
            case Template::visit_o_then_o:
                a[t] = step_pred_object_visited(env, p, q.slot1);
                b[t] = step_pred_object_visited(env, p, q.slot2);
                break;
            case Template::visit_r_then_r:
                a[t] = step_pred_in_room(env, p, q.slot1);
                b[t] = step_pred_in_room(env, p, q.slot2 - C);
                break;
            default:
                throw std::logic_error("replay_then_tracks: not a then template");
        }
    }
    return {a, b};
}

bool check_against_candidates(const MomentQuery& q, const std::vector<Interval>& candidates) {
    if (candidates.empty()) return false;
    switch (q.qual) {
        case Qualifier::none:
            return candidates.size() == 1 && q.gt == candidates.front();
        case Qualifier::first:
            return q.gt == candidates.front();
        case Qualifier::last:
            return q.gt == candidates.back();
    }
    return false;
}

}  // namespace

bool verify_query(const EnvironmentSpec& env, const std::vector<Pose>& poses,
                  const MomentQuery& q) {
    const int T = static_cast<int>(poses.size());
    if (q.gt.s < 0 || q.gt.e < q.gt.s || q.gt.e >= T) return false;

    if (q.tmpl == Template::see_o_then_o || q.tmpl == Template::visit_o_then_o ||
        q.tmpl == Template::visit_r_then_r) {
        const auto [a, b] = replay_then_tracks(env, poses, q);
        const std::vector<Interval> ia = maximal_intervals(a);
        const std::vector<Interval> ib = maximal_intervals(b);
        const std::vector<Interval> candidates = then_moments(ia, ib);
        if (!check_against_candidates(q, candidates)) return false;
        // boundary semantics: gt.s ends a slot1 interval, gt.e ends a slot2 one
        if (!a[q.gt.s] || !b[q.gt.e]) return false;
        return true;
    }

    const std::vector<bool> track = replay_track(env, poses, q);
    // predicate holds on every step of the moment, and the moment is maximal
    for (int t = q.gt.s; t <= q.gt.e; ++t)
        if (!track[t]) return false;
    if (q.gt.s > 0 && track[q.gt.s - 1]) return false;
    if (q.gt.e + 1 < T && track[q.gt.e + 1]) return false;
    return check_against_candidates(q, maximal_intervals(track));
}

std::string query_to_jsonl(const MomentQuery& q) {
    nlohmann::json j;
    j["walkthrough_id"] = q.walkthrough_id;
    j["template"] = template_name(q.tmpl);
    j["slot1"] = q.slot1;
    j["slot2"] = q.slot2;
    j["qualifier"] = q.qual == Qualifier::none ? "none" : q.qual == Qualifier::first ? "first" : "last";
    j["t_s"] = q.gt.s;
    j["t_e"] = q.gt.e;
    return j.dump();
}

MomentQuery query_from_jsonl(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    MomentQuery q;
    q.walkthrough_id = j["walkthrough_id"].get<std::string>();
    const std::string t = j["template"].get<std::string>();
    bool found = false;
    for (int i = 0; i < kNumTemplates; ++i)
        if (t == template_name(static_cast<Template>(i))) {
            q.tmpl = static_cast<Template>(i);
            found = true;
        }
    if (!found) throw std::invalid_argument("query: unknown template " + t);
    q.slot1 = j["slot1"].get<int>();
    q.slot2 = j["slot2"].get<int>();
    const std::string qual = j["qualifier"].get<std::string>();
    q.qual = qual == "none"    ? Qualifier::none
             : qual == "first" ? Qualifier::first
             : qual == "last"  ? Qualifier::last
                               : throw std::invalid_argument("query: unknown qualifier " + qual);
    q.gt.s = j["t_s"].get<int>();
    q.gt.e = j["t_e"].get<int>();
    if (q.gt.s > q.gt.e) throw std::invalid_argument("query: malformed interval");
    return q;
}

std::vector<double> raw_query_encoding(const MomentQuery& q, std::size_t n_objects,
                                       std::size_t n_rooms) {
    const std::size_t len = kNumTemplates + n_objects + (n_objects + n_rooms) + 3;
    std::vector<double> enc(len, 0.0);
    enc[static_cast<int>(q.tmpl)] = 1.0;
    if (q.slot1 >= 0) {
        if (q.slot1 >= static_cast<int>(n_objects))
            throw std::invalid_argument("raw_query_encoding: slot1 out of range");
        enc[kNumTemplates + q.slot1] = 1.0;
    }
    if (q.slot2 >= 0) {
        if (q.slot2 >= static_cast<int>(n_objects + n_rooms))
            throw std::invalid_argument("raw_query_encoding: slot2 out of range");
        enc[kNumTemplates + n_objects + q.slot2] = 1.0;
    }
    enc[kNumTemplates + n_objects + (n_objects + n_rooms) + static_cast<int>(q.qual)] = 1.0;
    return enc;
}

LocalizerModel LocalizerModel::init(const LocalizerConfig& config, std::size_t G, std::size_t d,
                                    std::size_t n_objects, std::size_t n_rooms,
                                    std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    LocalizerModel m;
    m.use_env = config.use_env;
    m.G = G;
    m.d = d;
    m.n_objects = n_objects;
    m.n_rooms = n_rooms;
    m.n_clips = config.n_clips;
    m.max_span = config.max_span;
    if (m.use_env) m.fuse = Linear::init(G + d, config.g_prime, rng);
    const std::size_t raw = kNumTemplates + n_objects + (n_objects + n_rooms) + 3;
    m.query_proj = Linear::init(raw, config.d_q, rng);
    const std::size_t pooled = m.use_env ? config.g_prime : G;
    m.mlp1 = Linear::init(pooled + config.d_q, config.hidden, rng);
    m.mlp2 = Linear::init(config.hidden, 1, rng);
    return m;
}

std::vector<NamedParam> LocalizerModel::parameters() const {
    std::vector<NamedParam> out;
    if (use_env) fuse.collect("fuse", out);
    query_proj.collect("query_proj", out);
    mlp1.collect("mlp1", out);
    mlp2.collect("mlp2", out);
    return out;
}

void LocalizerModel::save(const std::string& path) const {
    nlohmann::json j;
    j["use_env"] = use_env;
    j["G"] = G;
    j["d"] = d;
    j["n_objects"] = n_objects;
    j["n_rooms"] = n_rooms;
    j["n_clips"] = n_clips;
    j["max_span"] = max_span;
    save_checkpoint(path, parameters(), j.dump());
}

LocalizerModel LocalizerModel::load(const std::string& path) {
    const LoadedCheckpoint loaded = load_checkpoint(path);
    nlohmann::json j = nlohmann::json::parse(loaded.hyper_json);
    LocalizerConfig cfg;
    cfg.use_env = j["use_env"].get<bool>();
    cfg.n_clips = j["n_clips"].get<std::size_t>();
    cfg.max_span = j["max_span"].get<std::size_t>();
    for (const NamedParam& p : loaded.params) {
        if (p.name == "fuse.w") cfg.g_prime = p.tensor.cols();
        if (p.name == "query_proj.w") cfg.d_q = p.tensor.cols();
        if (p.name == "mlp1.w") cfg.hidden = p.tensor.cols();
    }
    LocalizerModel m =
        init(cfg, j["G"].get<std::size_t>(), j["d"].get<std::size_t>(),
             j["n_objects"].get<std::size_t>(), j["n_rooms"].get<std::size_t>(), 0);
    restore_params(m.parameters(), loaded);
    return m;
}

ClipFeatures make_clip_features(const DatasetItem& item, std::size_t n_clips,
                                const EnvMemoryModel* env_model, PoseMode pose_mode) {
    if (item.T() < n_clips)
        throw std::invalid_argument("make_clip_features: walkthrough shorter than clip count");
    const std::size_t G = item.features.front().values.size();
    ClipFeatures out;
    out.g.resize(n_clips);
    out.centers.resize(n_clips);
    out.clip_steps.resize(n_clips);
    for (std::size_t i = 0; i < n_clips; ++i) {
        const std::size_t start = i * item.T() / n_clips;
        const std::size_t end = (i + 1 == n_clips ? item.T() : (i + 1) * item.T() / n_clips) - 1;
        out.clip_steps[i] = {static_cast<int>(start), static_cast<int>(end)};
        out.centers[i] = (start + end) / 2;
        std::vector<double> mean(G, 0.0);
        for (std::size_t t = start; t <= end; ++t)
            for (std::size_t k = 0; k < G; ++k) mean[k] += item.features[t].values[k];
        for (double& v : mean) v /= static_cast<double>(end - start + 1);
        out.g[i] = std::move(mean);
    }
    if (env_model != nullptr) {
        out.h.resize(n_clips);
        for (std::size_t i = 0; i < n_clips; ++i) {
            Rng rng(0);  // inference-mode sampling draws nothing
            out.h[i] = environment_feature(*env_model, item.features, item.poses, out.centers[i],
                                           env_model->config.K, SampleMode::inference, rng,
                                           pose_mode)
                           .h;
        }
    }
    return out;
}

ClipTable make_clip_table(const Dataset& dataset, std::size_t n_clips,
                          const EnvMemoryModel* env_model, PoseMode pose_mode,
                          std::size_t workers) {
    ClipTable table;
    table.train.resize(dataset.train.size());
    table.val.resize(dataset.val.size());
    parallel_for(dataset.train.size() + dataset.val.size(), workers, [&](std::size_t i) {
        if (i < dataset.train.size())
            table.train[i] = make_clip_features(dataset.train[i], n_clips, env_model, pose_mode);
        else
            table.val[i - dataset.train.size()] =
                make_clip_features(dataset.val[i - dataset.train.size()], n_clips, env_model,
                                   pose_mode);
    });
    return table;
}

std::vector<Interval> candidate_windows(std::size_t n_clips, std::size_t max_span) {
    std::vector<Interval> out;
    for (std::size_t i = 0; i < n_clips; ++i)
        for (std::size_t j = i; j < std::min(n_clips, i + max_span); ++j)
            out.push_back({static_cast<int>(i), static_cast<int>(j)});
    return out;
}

double window_target(Interval window_steps, Interval gt) {
    return std::clamp((iou(window_steps, gt) - 0.3) / 0.4, 0.0, 1.0);
}

namespace {

Tensor fused_clip_matrix(Tape& tape, const LocalizerModel& model, const ClipFeatures& clips) {
    std::vector<double> gflat;
    gflat.reserve(clips.g.size() * model.G);
    for (const auto& row : clips.g) gflat.insert(gflat.end(), row.begin(), row.end());
    const Tensor g = Tensor::from_values(clips.g.size(), model.G, std::move(gflat));
    if (!model.use_env) return g;
    if (clips.h.size() != clips.g.size())
        throw std::invalid_argument("localizer: clip table lacks environment features");
    std::vector<double> hflat;
    hflat.reserve(clips.h.size() * model.d);
    for (const auto& row : clips.h) hflat.insert(hflat.end(), row.begin(), row.end());
    const Tensor h = Tensor::from_values(clips.h.size(), model.d, std::move(hflat));
    return linear(tape, concat_cols(tape, {g, h}), model.fuse);
}

// One logit per candidate window (W x 1).
Tensor window_logits(Tape& tape, const LocalizerModel& model, const Tensor& fused,
                     const std::vector<Interval>& windows, const MomentQuery& q) {
    std::vector<Tensor> pooled;
    pooled.reserve(windows.size());
    for (const Interval& w : windows)
        pooled.push_back(max_rows(tape, slice_rows(tape, fused, w.s, w.e - w.s + 1)));
    const Tensor pool_mat = concat_rows(tape, pooled);
    const Tensor raw = Tensor::from_values(
        1, raw_query_encoding(q, model.n_objects, model.n_rooms).size(),
        raw_query_encoding(q, model.n_objects, model.n_rooms));
    const Tensor qe = linear(tape, raw, model.query_proj);
    const Tensor q_rep = add_row(tape, Tensor::zeros(pool_mat.rows(), qe.cols()), qe);
    const Tensor joint = concat_cols(tape, {pool_mat, q_rep});
    return linear(tape, gelu(tape, linear(tape, joint, model.mlp1)), model.mlp2);
}

}  // namespace

std::vector<ScoredWindow> localize(const LocalizerModel& model, const ClipFeatures& clips,
                                   const MomentQuery& q) {
    const std::vector<Interval> windows = candidate_windows(model.n_clips, model.max_span);
    Tape tape;
    const Tensor fused = fused_clip_matrix(tape, model, clips);
    const Tensor logits = window_logits(tape, model, fused, windows, q);
    std::vector<ScoredWindow> out(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        out[i].clips = windows[i];
        out[i].steps = {clips.clip_steps[windows[i].s].s, clips.clip_steps[windows[i].e].e};
        out[i].score = 1.0 / (1.0 + std::exp(-logits[i]));
    }
    std::stable_sort(out.begin(), out.end(), [](const ScoredWindow& a, const ScoredWindow& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.clips.s != b.clips.s) return a.clips.s < b.clips.s;
        return a.clips.e < b.clips.e;
    });
    return out;
}

bool rank_at(const std::vector<ScoredWindow>& ranked, Interval gt, std::size_t n, double m) {
    for (std::size_t i = 0; i < std::min(n, ranked.size()); ++i)
        if (iou(ranked[i].steps, gt) > m) return true;
    return false;
}

EpmTrainResult train_localizer(const Dataset& dataset, const ClipTable& clips,
                               const std::vector<EpmInstance>& instances,
                               const LocalizerConfig& config) {
    if (instances.empty()) throw std::invalid_argument("train_localizer: empty instance set");

    const std::size_t G = (clips.train.empty() ? clips.val : clips.train)
                              .front()
                              .g.front()
                              .size();
    std::size_t d = 0;
    if (config.use_env) {
        const auto& table = clips.train.empty() ? clips.val : clips.train;
        if (table.front().h.empty())
            throw std::invalid_argument("train_localizer: clip table lacks environment features");
        d = table.front().h.front().size();
    }
    const std::size_t n_objects = dataset.envs.front().object_taxonomy.size();
    const std::size_t n_rooms = dataset.envs.front().room_taxonomy.size();

    EpmTrainResult result;
    result.model = LocalizerModel::init(config, G, d, n_objects, n_rooms,
                                        derive_seed(config.seed, 0xe9eULL));

    // drop queries whose ground truth spans more than max_span clips
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const EpmInstance& inst = instances[i];
        const ClipFeatures& cf = inst.from_val ? clips.val[inst.item] : clips.train[inst.item];
        std::size_t cs = 0, ce = 0;
        for (std::size_t c = 0; c < cf.clip_steps.size(); ++c) {
            if (inst.query.gt.s >= cf.clip_steps[c].s && inst.query.gt.s <= cf.clip_steps[c].e)
                cs = c;
            if (inst.query.gt.e >= cf.clip_steps[c].s && inst.query.gt.e <= cf.clip_steps[c].e)
                ce = c;
        }
        if (ce - cs + 1 > config.max_span)
            ++result.dropped_long;
        else
            usable.push_back(i);
    }
    if (usable.empty()) throw std::invalid_argument("train_localizer: all instances dropped");

    std::vector<NamedParam> params = result.model.parameters();
    AdamHyper hyper;
    hyper.lr = config.lr;
    AdamState opt(hyper);

    const std::vector<Interval> windows = candidate_windows(config.n_clips, config.max_span);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order = usable;
        Rng shuffle_rng(derive_seed(config.seed, 0xe95f1eULL, epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - b);
            Tape tape;
            Tensor total;
            for (std::size_t i = 0; i < n; ++i) {
                const EpmInstance& inst = instances[order[b + i]];
                const ClipFeatures& cf =
                    inst.from_val ? clips.val[inst.item] : clips.train[inst.item];
                const Tensor fused = fused_clip_matrix(tape, result.model, cf);
                const Tensor logits = window_logits(tape, result.model, fused, windows, inst.query);
                std::vector<double> targets(windows.size());
                for (std::size_t w = 0; w < windows.size(); ++w) {
                    const Interval steps = {cf.clip_steps[windows[w].s].s,
                                            cf.clip_steps[windows[w].e].e};
                    targets[w] = window_target(steps, inst.query.gt);
                }
                const Tensor bce = bce_with_logits(tape, logits, targets);
                total = total.defined() ? add(tape, total, bce) : bce;
            }
            total = scale(tape, total, 1.0 / static_cast<double>(n));
            result.loss_curve.push_back(total.item());
            tape.backward(total);
            opt.step(params);
        }
    }
    return result;
}

std::string EpmEval::to_json() const {
    nlohmann::json j;
    for (const auto& [group, by_m] : r1)
        for (const auto& [m, v] : by_m) j["r1"][group][m] = v;
    for (const auto& [group, n] : counts) j["counts"][group] = n;
    return j.dump();
}

EpmEval eval_localizer(const LocalizerModel& model, const Dataset& dataset,
                       const ClipTable& clips, const std::vector<EpmInstance>& instances,
                       const std::vector<double>& thresholds, std::size_t workers) {
    (void)dataset;
    std::vector<std::vector<bool>> hits(instances.size());
    parallel_for(instances.size(), workers, [&](std::size_t i) {
        const EpmInstance& inst = instances[i];
        const ClipFeatures& cf = inst.from_val ? clips.val[inst.item] : clips.train[inst.item];
        const auto ranked = localize(model, cf, inst.query);
        std::vector<bool> h(thresholds.size());
        for (std::size_t m = 0; m < thresholds.size(); ++m)
            h[m] = rank_at(ranked, inst.query.gt, 1, thresholds[m]);
        hits[i] = std::move(h);
    });

    EpmEval eval;
    auto accumulate = [&](const std::string& group, std::size_t i) {
        auto& row = eval.r1[group];
        for (std::size_t m = 0; m < thresholds.size(); ++m) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%.1f", thresholds[m]);
            row[buf] += hits[i][m] ? 1.0 : 0.0;
        }
        ++eval.counts[group];
    };
    for (std::size_t i = 0; i < instances.size(); ++i) {
        accumulate("all", i);
        accumulate(is_visit_template(instances[i].query.tmpl) ? "visit" : "see", i);
        accumulate(std::string("template:") + template_name(instances[i].query.tmpl), i);
    }
    for (auto& [group, by_m] : eval.r1)
        for (auto& [m, v] : by_m) v /= static_cast<double>(eval.counts[group]);
    return eval;
}

}  // namespace egomem
