#include "egomem/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "egomem/optim.hpp"
#include "egomem/util.hpp"

namespace egomem {

Objective objective_from_string(const std::string& name) {
    if (name == "env_state") return Objective::env_state;
    if (name == "ssl" || name == "ssl_masked") return Objective::ssl_masked;
    if (name == "pano" || name == "pano_feat") return Objective::pano_feat;
    if (name == "none") return Objective::none;
    throw std::invalid_argument("unknown objective: " + name);
}

std::string objective_to_string(Objective o) {
    switch (o) {
        case Objective::env_state: return "env_state";
        case Objective::ssl_masked: return "ssl_masked";
        case Objective::pano_feat: return "pano_feat";
        case Objective::none: return "none";
    }
    return "?";
}

PoseMode pose_mode_from_string(const std::string& name) {
    if (name == "relative") return PoseMode::relative;
    if (name == "global") return PoseMode::global;
    if (name == "none") return PoseMode::none;
    throw std::invalid_argument("unknown pose mode: " + name);
}

std::string pose_mode_to_string(PoseMode m) {
    switch (m) {
        case PoseMode::relative: return "relative";
        case PoseMode::global: return "global";
        case PoseMode::none: return "none";
    }
    return "?";
}

namespace {

// A fully assembled instance: everything random is decided here, so assembly
// can run in parallel lanes without affecting results.
struct Assembly {
    bool from_val = false;
    std::size_t item = 0;
    std::size_t query_step = 0;
    std::vector<std::size_t> memory_steps;
    std::vector<RelativePose> rels;
};

const DatasetItem& item_of(const Dataset& dataset, const Assembly& a) {
    return a.from_val ? dataset.val[a.item] : dataset.train[a.item];
}

Assembly assemble(const DatasetItem& item, std::size_t item_index, bool from_val,
                  const PretrainConfig& config, std::size_t K, SampleMode mode, Rng& rng,
                  std::optional<std::size_t> fixed_query = std::nullopt) {
    Assembly a;
    a.from_val = from_val;
    a.item = item_index;
    a.query_step = fixed_query ? *fixed_query : rng.uniform_int(item.T());
    a.memory_steps = sample_memory_frames(item.T(), K, mode, rng);
    NoiseParams noise;
    noise.enabled = config.noise_enabled && mode == SampleMode::train;
    const PoseC p_q = add_pose_noise(PoseC(item.poses[a.query_step]), rng, noise);
    a.rels.reserve(a.memory_steps.size());
    for (std::size_t s : a.memory_steps)
        a.rels.push_back(
            pose_input(config.pose_mode, add_pose_noise(PoseC(item.poses[s]), rng, noise), p_q));
    return a;
}

std::vector<FrameFeature> gather_frames(const DatasetItem& item, const Assembly& a) {
    std::vector<FrameFeature> frames;
    frames.reserve(a.memory_steps.size());
    for (std::size_t s : a.memory_steps) frames.push_back(item.features[s]);
    return frames;
}

Tensor mean_of(Tape& tape, const std::vector<Tensor>& terms) {
    Tensor total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(tape, total, terms[i]);
    return scale(tape, total, 1.0 / static_cast<double>(terms.size()));
}

using LossFn =
    std::function<Tensor(Tape&, const EnvMemoryModel&, const Dataset&, const Assembly&)>;

struct Engine {
    std::vector<NamedParam> extra_params;
    LossFn loss;
};

PretrainResult run_pretrain(const Dataset& dataset, const PretrainConfig& config,
                            EnvMemoryModel& model, const Engine& engine) {
    if (dataset.train.empty()) throw std::invalid_argument("pretrain: empty training set");
    if (config.epochs < 1) throw std::invalid_argument("pretrain: epochs must be >= 1");

    std::vector<NamedParam> params = model.parameters();
    for (const NamedParam& p : engine.extra_params) params.push_back(p);

    AdamHyper hyper;
    hyper.lr = config.lr;
    AdamState opt(hyper);

    // fixed held-out instances: 4 grid queries per val walkthrough,
    // inference-mode memory, no noise
    std::vector<Assembly> val_instances;
    for (std::size_t v = 0; v < dataset.val.size(); ++v) {
        const DatasetItem& item = dataset.val[v];
        const std::size_t stride = std::max<std::size_t>(1, item.T() / 4);
        for (std::size_t q = stride / 2; q < item.T(); q += stride) {
            Rng rng(derive_seed(config.seed, 0x7a1dULL + v, q));
            val_instances.push_back(assemble(item, v, /*from_val=*/true, config, model.config.K,
                                             SampleMode::inference, rng, q));
        }
    }

    PretrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_values;

    std::size_t global_idx = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(dataset.train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(config.seed, 0x5f1eULL, epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - b);
            std::vector<Assembly> batch(n);
            parallel_for(n, config.workers, [&](std::size_t i) {
                const std::size_t item_index = order[b + i];
                Rng rng(derive_seed(config.seed, 0xba7cULL + epoch, global_idx + i));
                batch[i] = assemble(dataset.train[item_index], item_index, /*from_val=*/false,
                                    config, model.config.K, SampleMode::train, rng);
            });
            global_idx += n;

            Tape tape;
            std::vector<Tensor> losses;
            losses.reserve(n);
            for (const Assembly& a : batch) losses.push_back(engine.loss(tape, model, dataset, a));
            const Tensor total = mean_of(tape, losses);
            result.loss_curve.push_back(total.item());
            tape.backward(total);
            opt.step(params);
        }

        double val_loss;
        if (!val_instances.empty()) {
            std::vector<double> per(val_instances.size());
            parallel_for(val_instances.size(), config.workers, [&](std::size_t i) {
                Tape tape;
                per[i] = engine.loss(tape, model, dataset, val_instances[i]).item();
            });
            val_loss = 0;
            for (double v : per) val_loss += v;
            val_loss /= static_cast<double>(per.size());
        } else {
            val_loss = result.loss_curve.back();
        }
        result.val_curve.push_back(val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            result.best_epoch = epoch;
            best_values.clear();
            for (const NamedParam& p : params) best_values.push_back(p.tensor.values());
        }
    }

    if (!best_values.empty())
        for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor.values() = best_values[i];
    return result;
}

Tensor env_state_loss(Tape& tape, const EnvMemoryModel& model, const Dataset& dataset,
                      const Assembly& a) {
    const DatasetItem& item = item_of(dataset, a);
    const Tensor memory = build_memory(tape, model, gather_frames(item, a), a.rels);
    const DecodeResult dec = decode_query(tape, model, memory, item.features[a.query_step]);
    const Tensor logits = predict_local_state(tape, model, dec.h_q, item.features[a.query_step]);
    const LocalStateLabel& y = item.labels[a.query_step];
    std::vector<Tensor> ces;
    ces.reserve(y.size());
    for (std::size_t c = 0; c < y.size(); ++c)
        ces.push_back(cross_entropy(tape, slice_rows(tape, logits, c, 1), y[c]));
    return mean_of(tape, ces);
}

}  // namespace

PretrainResult pretrain(const Dataset& dataset, const PretrainConfig& config,
                        EnvMemoryModel& model) {
    if (config.objective == Objective::none) return {};
    if (config.objective == Objective::ssl_masked) return pretrain_ssl(dataset, config, model);
    if (config.objective == Objective::pano_feat) return pretrain_pano(dataset, config, model);

    Engine engine;
    engine.loss = env_state_loss;
    return run_pretrain(dataset, config, model, engine);
}

PretrainResult pretrain_ssl(const Dataset& dataset, const PretrainConfig& config,
                            EnvMemoryModel& model) {
    std::mt19937_64 head_rng(derive_seed(config.seed, 0x55bULL));
    const std::size_t F = model.config.F();
    Tensor mask_token = Tensor::zeros(1, F, true);
    Linear reg_head = Linear::init(model.config.d, F, head_rng);

    Engine engine;
    engine.extra_params.push_back({"ssl.mask_token", mask_token});
    reg_head.collect("ssl.reg", engine.extra_params);
    engine.loss = [mask_token, reg_head](Tape& tape, const EnvMemoryModel& m,
                                         const Dataset& dataset, const Assembly& a) {
        const DatasetItem& item = item_of(dataset, a);
        const Tensor memory = build_memory(tape, m, gather_frames(item, a), a.rels);
        const Tensor token = encode_query_token(tape, m, mask_token);
        const DecodeResult dec = decode_query_token(tape, m, memory, token);
        const Tensor pred = linear(tape, dec.h_q, reg_head);
        return mse_loss(tape, pred, item.features[a.query_step].values);
    };
    return run_pretrain(dataset, config, model, engine);
}

PretrainResult pretrain_pano(const Dataset& dataset, const PretrainConfig& config,
                             EnvMemoryModel& model) {
    std::mt19937_64 head_rng(derive_seed(config.seed, 0x9a0ULL));
    const std::size_t F = model.config.F();
    Linear reg_head = Linear::init(model.config.d, 4 * F, head_rng);

    Engine engine;
    reg_head.collect("pano.reg", engine.extra_params);
    engine.loss = [reg_head](Tape& tape, const EnvMemoryModel& m, const Dataset& dataset,
                             const Assembly& a) {
        const DatasetItem& item = item_of(dataset, a);
        const EnvironmentSpec& env = dataset.envs[item.env_index];
        const Tensor memory = build_memory(tape, m, gather_frames(item, a), a.rels);
        const DecodeResult dec = decode_query(tape, m, memory, item.features[a.query_step]);
        const Tensor pred = linear(tape, dec.h_q, reg_head);
        return mse_loss(tape, pred,
                        pano_targets(env, item.poses[a.query_step], m.config.rays));
    };
    return run_pretrain(dataset, config, model, engine);
}

std::vector<double> pano_targets(const EnvironmentSpec& env, const Pose& q, std::size_t rays) {
    // features at the query position, heading rotated by 0/90/180/270 degrees
    // (3 heading bins each); the 0-degree block is the query's own feature
    std::vector<double> target;
    for (int o = 0; o < 4; ++o) {
        Pose p = q;
        p.heading = (q.heading + 3 * o) % kHeadingBins;
        const FrameFeature f = egocentric_features(env, p, static_cast<int>(rays));
        target.insert(target.end(), f.values.begin(), f.values.end());
    }
    return target;
}

// Uninterpolated AP: mean of precision-at-rank over positives, ties kept in
// stable input order.
std::optional<double> average_precision(std::vector<std::pair<double, bool>> scored) {
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t positives = 0, seen_pos = 0;
    double sum = 0;
    for (const auto& s : scored) positives += s.second ? 1 : 0;
    if (positives == 0) return std::nullopt;
    for (std::size_t r = 0; r < scored.size(); ++r) {
        if (!scored[r].second) continue;
        ++seen_pos;
        sum += static_cast<double>(seen_pos) / static_cast<double>(r + 1);
    }
    return sum / static_cast<double>(positives);
}

namespace {

// Number of memory frames in which class c registers on at least one ray.
std::size_t frames_with_class(const DatasetItem& item, const std::vector<std::size_t>& steps,
                              std::size_t c) {
    std::size_t count = 0;
    for (std::size_t s : steps) {
        const FrameFeature& f = item.features[s];
        const int block = f.block();
        bool present = false;
        for (int r = 0; r < f.rays && !present; ++r)
            present = f.values[static_cast<std::size_t>(r) * block + 1 + c] > 0;
        count += present ? 1 : 0;
    }
    return count;
}

}  // namespace

std::string EvalReport::to_json() const {
    nlohmann::json j;
    const char* names[4] = {"forward", "right", "behind", "left"};
    for (int d = 0; d < 4; ++d) {
        if (ap[d])
            j["ap"][names[d]] = *ap[d];
        else
            j["ap"][names[d]] = nullptr;
    }
    j["map"] = map;
    j["n_instances"] = n_instances;
    for (const auto& [k, frac] : rare_fractions) j["rare_lt_" + std::to_string(k)] = frac;
    return j.dump();
}

EvalReport eval_ap(const EnvMemoryModel& model, const Dataset& dataset, PoseMode pose_mode,
                   std::size_t workers) {
    if (dataset.val.empty()) throw std::invalid_argument("eval_ap: empty validation set");
    const std::size_t C = model.config.num_classes;

    struct Query {
        std::size_t item, step;
    };
    std::vector<Query> queries;
    for (std::size_t v = 0; v < dataset.val.size(); ++v) {
        const std::size_t stride = std::max<std::size_t>(1, dataset.val[v].T() / 16);
        for (std::size_t q = 0; q < dataset.val[v].T(); q += stride) queries.push_back({v, q});
    }

    // per query: softmax probabilities (C x 5) and memory steps
    std::vector<std::vector<double>> probs(queries.size());
    std::vector<std::vector<std::size_t>> mem_steps(queries.size());
    parallel_for(queries.size(), workers, [&](std::size_t qi) {
        const DatasetItem& item = dataset.val[queries[qi].item];
        Rng rng(0);  // unused in inference mode
        PretrainConfig cfg;
        cfg.pose_mode = pose_mode;
        cfg.noise_enabled = false;
        const Assembly a = assemble(item, queries[qi].item, true, cfg, model.config.K,
                                    SampleMode::inference, rng, queries[qi].step);
        Tape tape;
        const Tensor memory = build_memory(tape, model, gather_frames(item, a), a.rels);
        const DecodeResult dec = decode_query(tape, model, memory, item.features[a.query_step]);
        const Tensor logits = predict_local_state(tape, model, dec.h_q, item.features[a.query_step]);
        std::vector<double> p(C * 5);
        for (std::size_t c = 0; c < C; ++c) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int d = 0; d < 5; ++d) mx = std::max(mx, logits.at(c, d));
            double z = 0;
            for (int d = 0; d < 5; ++d) z += std::exp(logits.at(c, d) - mx);
            for (int d = 0; d < 5; ++d) p[c * 5 + d] = std::exp(logits.at(c, d) - mx) / z;
        }
        probs[qi] = std::move(p);
        mem_steps[qi] = a.memory_steps;
    });

    EvalReport report;
    std::vector<std::vector<std::pair<double, bool>>> pools(4);
    std::size_t rare_pos = 0;
    std::map<int, std::size_t> rare_counts = {{1, 0}, {2, 0}, {4, 0}, {8, 0}};
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const DatasetItem& item = dataset.val[queries[qi].item];
        const LocalStateLabel& y = item.labels[queries[qi].step];
        for (std::size_t c = 0; c < C; ++c) {
            for (int d = 1; d <= 4; ++d)
                pools[d - 1].push_back({probs[qi][c * 5 + d], y[c] == d});
            if (y[c] != 0) {
                ++rare_pos;
                const std::size_t k = frames_with_class(item, mem_steps[qi], c);
                for (auto& [kk, cnt] : rare_counts)
                    if (k < static_cast<std::size_t>(kk)) ++cnt;
            }
        }
        report.n_instances += C;
    }

    double sum = 0;
    int present = 0;
    for (int d = 0; d < 4; ++d) {
        report.ap[d] = average_precision(pools[d]);
        if (report.ap[d]) {
            sum += *report.ap[d];
            ++present;
        }
    }
    report.map = present > 0 ? sum / present : 0.0;
    for (const auto& [k, cnt] : rare_counts)
        report.rare_fractions[k] =
            rare_pos > 0 ? static_cast<double>(cnt) / static_cast<double>(rare_pos) : 0.0;
    return report;
}

std::map<int, double> rare_object_stats(const Dataset& dataset, std::size_t K) {
    std::map<int, std::size_t> counts = {{1, 0}, {2, 0}, {4, 0}, {8, 0}};
    std::size_t total = 0;
    Rng rng(0);
    for (const DatasetItem& item : dataset.train) {
        const std::vector<std::size_t> steps =
            sample_memory_frames(item.T(), std::min(K, item.T()), SampleMode::inference, rng);
        const std::size_t stride = std::max<std::size_t>(1, item.T() / 16);
        for (std::size_t q = 0; q < item.T(); q += stride) {
            const LocalStateLabel& y = item.labels[q];
            for (std::size_t c = 0; c < y.size(); ++c) {
                if (y[c] == 0) continue;
                ++total;
                const std::size_t k = frames_with_class(item, steps, c);
                for (auto& [kk, cnt] : counts)
                    if (k < static_cast<std::size_t>(kk)) ++cnt;
            }
        }
    }
    std::map<int, double> out;
    for (const auto& [k, cnt] : counts)
        out[k] = total > 0 ? static_cast<double>(cnt) / static_cast<double>(total) : 0.0;
    return out;
}

}  // namespace egomem
