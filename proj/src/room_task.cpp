#include "egomem/room_task.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "egomem/checkpoint.hpp"
#include "egomem/util.hpp"

namespace egomem {

Tensor fuse(Tape& tape, const Tensor& g, const Tensor& h, const Linear& l) {
    if (g.rows() != h.rows())
        throw std::invalid_argument("fuse: row count mismatch between clip and environment features");
    return linear(tape, concat_cols(tape, {g, h}), l);
}

RoomModel RoomModel::init(const RoomConfig& config, std::size_t G, std::size_t d,
                          std::size_t n_rooms, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RoomModel m;
    m.use_env = config.use_env;
    m.G = G;
    m.d = d;
    m.n_rooms = n_rooms;
    if (m.use_env) m.fuse = Linear::init(G + d, config.g_prime, rng);
    const std::size_t in = m.use_env ? config.g_prime : G;
    m.mlp1 = Linear::init(in, config.hidden, rng);
    m.mlp2 = Linear::init(config.hidden, n_rooms, rng);
    return m;
}

std::vector<NamedParam> RoomModel::parameters() const {
    std::vector<NamedParam> out;
    if (use_env) fuse.collect("fuse", out);
    mlp1.collect("mlp1", out);
    mlp2.collect("mlp2", out);
    return out;
}

void RoomModel::save(const std::string& path) const {
    nlohmann::json j;
    j["use_env"] = use_env;
    j["G"] = G;
    j["d"] = d;
    j["n_rooms"] = n_rooms;
    save_checkpoint(path, parameters(), j.dump());
}

RoomModel RoomModel::load(const std::string& path) {
    const LoadedCheckpoint loaded = load_checkpoint(path);
    nlohmann::json j = nlohmann::json::parse(loaded.hyper_json);
    RoomModel m;
    m.use_env = j["use_env"].get<bool>();
    m.G = j["G"].get<std::size_t>();
    m.d = j["d"].get<std::size_t>();
    m.n_rooms = j["n_rooms"].get<std::size_t>();
    RoomConfig cfg;
    cfg.use_env = m.use_env;
    // shapes come from the checkpoint itself
    for (const NamedParam& p : loaded.params) {
        if (p.name == "fuse.w") cfg.g_prime = p.tensor.cols();
        if (p.name == "mlp1.w") cfg.hidden = p.tensor.cols();
    }
    m = RoomModel::init(cfg, m.G, m.d, m.n_rooms, 0);
    m.use_env = j["use_env"].get<bool>();
    m.G = j["G"].get<std::size_t>();
    m.d = j["d"].get<std::size_t>();
    m.n_rooms = j["n_rooms"].get<std::size_t>();
    restore_params(m.parameters(), loaded);
    return m;
}

namespace {

const DatasetItem& instance_item(const Dataset& dataset, const RoomInstance& inst) {
    return inst.from_val ? dataset.val[inst.item] : dataset.train[inst.item];
}

// Window feature matrix (window x G), boundary steps repeated at the ends.
Tensor window_features(const DatasetItem& item, std::size_t step, std::size_t window) {
    const std::size_t G = item.features.front().values.size();
    std::vector<double> values;
    values.reserve(window * G);
    const long T = static_cast<long>(item.T());
    for (long o = -static_cast<long>(window) / 2; o < static_cast<long>(window) / 2; ++o) {
        const long t = std::clamp(static_cast<long>(step) + o, 0L, T - 1);
        const auto& f = item.features[static_cast<std::size_t>(t)].values;
        values.insert(values.end(), f.begin(), f.end());
    }
    return Tensor::from_values(window, G, std::move(values));
}

Tensor instance_logits(Tape& tape, const RoomModel& model, const Dataset& dataset,
                       const RoomInstance& inst, const RoomConfig& config,
                       const EnvMemoryModel* env_model) {
    const DatasetItem& item = instance_item(dataset, inst);
    const Tensor g = window_features(item, inst.step, config.window);
    Tensor pooled;
    if (model.use_env) {
        Tensor h_row;
        if (config.freeze_env || env_model == nullptr) {
            if (inst.h.size() != model.d)
                throw std::invalid_argument("room task: instance lacks a precomputed h");
            h_row = Tensor::from_values(1, model.d, inst.h);
        } else {
            // joint fine-tuning: run the environment model on the shared tape
            Rng rng(0);  // inference-mode sampling draws nothing
            const auto steps =
                sample_memory_frames(item.T(), env_model->config.K, SampleMode::inference, rng);
            const PoseC p_q(item.poses[inst.step]);
            std::vector<FrameFeature> frames;
            std::vector<RelativePose> rels;
            for (std::size_t s : steps) {
                frames.push_back(item.features[s]);
                rels.push_back(pose_input(config.pose_mode, PoseC(item.poses[s]), p_q));
            }
            const Tensor memory = build_memory(tape, *env_model, frames, rels);
            h_row = decode_query(tape, *env_model, memory, item.features[inst.step]).h_q;
        }
        const Tensor h_rep = add_row(tape, Tensor::zeros(g.rows(), model.d), h_row);
        pooled = max_rows(tape, fuse(tape, g, h_rep, model.fuse));
    } else {
        pooled = max_rows(tape, g);
    }
    return linear(tape, gelu(tape, linear(tape, pooled, model.mlp1)), model.mlp2);
}

}  // namespace

std::vector<RoomInstance> make_room_instances(const Dataset& dataset, bool from_val,
                                              std::size_t per_walkthrough) {
    const auto& split = from_val ? dataset.val : dataset.train;
    std::vector<RoomInstance> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
        const DatasetItem& item = split[i];
        const EnvironmentSpec& env = dataset.envs[item.env_index];
        const std::size_t stride = std::max<std::size_t>(1, item.T() / per_walkthrough);
        for (std::size_t q = stride / 2; q < item.T(); q += stride) {
            const auto label = room_at(env, item.poses[q].x, item.poses[q].z);
            if (!label) continue;  // doorway: no room label
            RoomInstance inst;
            inst.from_val = from_val;
            inst.item = i;
            inst.step = q;
            inst.label = *label;
            out.push_back(std::move(inst));
        }
    }
    return out;
}

void attach_env_features(std::vector<RoomInstance>& instances, const Dataset& dataset,
                         const EnvMemoryModel& model, PoseMode pose_mode, std::size_t workers) {
    parallel_for(instances.size(), workers, [&](std::size_t i) {
        const DatasetItem& item = instance_item(dataset, instances[i]);
        Rng rng(0);  // inference-mode sampling draws nothing
        instances[i].h = environment_feature(model, item.features, item.poses, instances[i].step,
                                             model.config.K, SampleMode::inference, rng, pose_mode)
                             .h;
    });
}

RoomTrainResult train_room(const Dataset& dataset, const std::vector<RoomInstance>& instances,
                           const RoomConfig& config, EnvMemoryModel* env_model) {
    if (instances.empty()) throw std::invalid_argument("train_room: empty instance set");
    if (config.use_env && config.freeze_env)
        for (const RoomInstance& inst : instances)
            if (inst.h.empty())
                throw std::invalid_argument("train_room: attach_env_features first");

    const DatasetItem& first = instance_item(dataset, instances.front());
    const std::size_t G = first.features.front().values.size();
    const std::size_t d = config.use_env && env_model ? env_model->config.d
                          : config.use_env            ? instances.front().h.size()
                                                      : 0;
    const std::size_t n_rooms = dataset.envs.front().room_taxonomy.size();

    RoomTrainResult result;
    result.model = RoomModel::init(config, G, d, n_rooms, derive_seed(config.seed, 0x400fULL));

    std::vector<NamedParam> params = result.model.parameters();
    if (config.use_env && !config.freeze_env && env_model != nullptr)
        for (const NamedParam& p : env_model->parameters()) params.push_back(p);

    AdamHyper hyper;
    hyper.lr = config.lr;
    AdamState opt(hyper);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(instances.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(config.seed, 0x400f5f1eULL, epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - b);
            Tape tape;
            Tensor total;
            for (std::size_t i = 0; i < n; ++i) {
                const RoomInstance& inst = instances[order[b + i]];
                const Tensor logits =
                    instance_logits(tape, result.model, dataset, inst, config, env_model);
                const Tensor ce = cross_entropy(tape, logits, inst.label);
                total = total.defined() ? add(tape, total, ce) : ce;
            }
            total = scale(tape, total, 1.0 / static_cast<double>(n));
            result.loss_curve.push_back(total.item());
            tape.backward(total);
            opt.step(params);
        }
    }
    return result;
}

std::vector<std::vector<double>> room_probs(const RoomModel& model, const Dataset& dataset,
                                            const std::vector<RoomInstance>& instances,
                                            const RoomConfig& config, std::size_t workers) {
    std::vector<std::vector<double>> probs(instances.size());
    RoomConfig frozen = config;
    frozen.freeze_env = true;  // evaluation always uses precomputed h
    parallel_for(instances.size(), workers, [&](std::size_t i) {
        Tape tape;
        const Tensor logits =
            instance_logits(tape, model, dataset, instances[i], frozen, nullptr);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits[c]);
        double z = 0;
        std::vector<double> p(logits.cols());
        for (std::size_t c = 0; c < logits.cols(); ++c) z += p[c] = std::exp(logits[c] - mx);
        for (double& v : p) v /= z;
        probs[i] = std::move(p);
    });
    return probs;
}

double prediction_entropy(const std::vector<double>& probs) {
    double h = 0;
    for (double p : probs)
        if (p > 0) h -= p * std::log(p);
    return h;
}

EntropySplit entropy_split(const std::vector<std::vector<double>>& probs, double hard_fraction) {
    if (hard_fraction < 0 || hard_fraction > 1)
        throw std::invalid_argument("entropy_split: fraction out of [0,1]");
    std::vector<std::size_t> order(probs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> ent(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) ent[i] = prediction_entropy(probs[i]);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ent[a] > ent[b]; });
    const std::size_t n_hard =
        static_cast<std::size_t>(std::lround(hard_fraction * static_cast<double>(probs.size())));
    EntropySplit split;
    split.hard.assign(order.begin(), order.begin() + n_hard);
    split.easy.assign(order.begin() + n_hard, order.end());
    std::sort(split.hard.begin(), split.hard.end());
    std::sort(split.easy.begin(), split.easy.end());
    return split;
}

namespace {

std::optional<double> accuracy(const std::vector<std::vector<double>>& probs,
                               const std::vector<RoomInstance>& instances,
                               const std::vector<std::size_t>& subset) {
    if (subset.empty()) return std::nullopt;
    std::size_t correct = 0;
    for (std::size_t i : subset) {
        const auto& p = probs[i];
        const std::size_t pred = std::max_element(p.begin(), p.end()) - p.begin();
        correct += static_cast<int>(pred) == instances[i].label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(subset.size());
}

}  // namespace

std::string RoomEval::to_json() const {
    nlohmann::json j;
    j["all"] = all ? nlohmann::json(*all) : nlohmann::json(nullptr);
    j["easy"] = easy ? nlohmann::json(*easy) : nlohmann::json(nullptr);
    j["hard"] = hard ? nlohmann::json(*hard) : nlohmann::json(nullptr);
    return j.dump();
}

RoomEval eval_room(const std::vector<std::vector<double>>& probs,
                   const std::vector<RoomInstance>& instances, const EntropySplit& split) {
    if (probs.size() != instances.size())
        throw std::invalid_argument("eval_room: probability/instance count mismatch");
    std::vector<std::size_t> all(instances.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    RoomEval eval;
    eval.all = accuracy(probs, instances, all);
    eval.easy = accuracy(probs, instances, split.easy);
    eval.hard = accuracy(probs, instances, split.hard);
    return eval;
}

}  // namespace egomem
