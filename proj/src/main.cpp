#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "egomem/agent.hpp"
#include "egomem/checkpoint.hpp"
#include "egomem/envmemory.hpp"
#include "egomem/epm_task.hpp"
#include "egomem/localstate.hpp"
#include "egomem/manifest.hpp"
#include "egomem/observation.hpp"
#include "egomem/pretrain.hpp"
#include "egomem/room_task.hpp"
#include "egomem/util.hpp"
#include "egomem/viz.hpp"
#include "egomem/worldgen.hpp"

namespace {

using namespace egomem;
namespace fs = std::filesystem;

struct CommonOpts {
    std::string preset = "desk";
    std::string config_file;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--preset", opts.preset, "configuration preset: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--config", opts.config_file, "JSON config file layered over the preset");
    cmd->add_option("--set", opts.overrides, "key=value override, highest precedence");
}

Config build_config(const CommonOpts& opts) {
    Config cfg = Config::preset(opts.preset);
    if (!opts.config_file.empty()) cfg.apply_file(opts.config_file);
    for (const std::string& kv : opts.overrides) cfg.apply_override(kv);
    return cfg;
}

std::string default_data_dir() {
    const char* env = std::getenv("EGOMEM_DATA_DIR");
    return env ? env : "data";
}

// Timed manifest writer: constructed at command start, finished beside the
// primary output artifact.
struct ManifestScope {
    RunManifest manifest;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    ManifestScope(const std::string& command, const Config& cfg,
                  std::vector<std::uint64_t> seeds) {
        manifest.command = command;
        manifest.config_json = cfg.to_json();
        manifest.seeds = std::move(seeds);
    }

    void finish(const std::string& primary_out) {
        manifest.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        manifest.write(primary_out + ".manifest.json");
    }
};

std::string walkthrough_id(const std::string& env_id, std::size_t index) {
    return env_id + "#" + std::to_string(index);
}

std::vector<Walkthrough> read_walkthroughs(const std::string& path) {
    std::vector<Walkthrough> out;
    std::istringstream is(read_file(path));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(walkthrough_from_jsonl(line));
    }
    return out;
}

// Dataset directory convention: <dir>/{train,val}/<name>.json plus sibling
// <name>.walks.jsonl and <name>.labels.jsonl per environment.
Dataset load_dataset(const std::string& dir, std::size_t rays, bool need_labels,
                     std::size_t workers, RunManifest* manifest) {
    Dataset dataset;
    for (const char* split : {"train", "val"}) {
        const fs::path split_dir = fs::path(dir) / split;
        if (!fs::is_directory(split_dir))
            throw IoError("dataset split directory missing: " + split_dir.string());
        std::vector<fs::path> env_paths;
        for (const auto& entry : fs::directory_iterator(split_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.size() > 5 && name.ends_with(".json") &&
                !name.ends_with(".manifest.json") && name.find(".walks.") == std::string::npos &&
                name.find(".labels.") == std::string::npos)
                env_paths.push_back(entry.path());
        }
        std::sort(env_paths.begin(), env_paths.end());
        if (env_paths.empty())
            throw IoError("no environment files in " + split_dir.string());

        std::vector<DatasetItem>& items =
            std::string(split) == "train" ? dataset.train : dataset.val;
        for (const fs::path& env_path : env_paths) {
            const std::string stem = (env_path.parent_path() / env_path.stem()).string();
            const std::string walks_path = stem + ".walks.jsonl";
            const std::string labels_path = stem + ".labels.jsonl";
            if (manifest) {
                manifest->add_input(env_path.string());
                manifest->add_input(walks_path);
                if (need_labels) manifest->add_input(labels_path);
            }
            const std::size_t env_index = dataset.envs.size();
            dataset.envs.push_back(environment_from_json(read_file(env_path.string())));
            const EnvironmentSpec& env = dataset.envs.back();

            std::map<std::string, std::size_t> id_to_item;
            std::vector<Walkthrough> walks = read_walkthroughs(walks_path);
            for (std::size_t i = 0; i < walks.size(); ++i) {
                if (walks[i].env_id != env.id)
                    throw std::invalid_argument("walkthrough env_id mismatch in " + walks_path);
                DatasetItem item;
                item.env_index = env_index;
                item.walkthrough_id = walkthrough_id(env.id, i);
                item.poses = std::move(walks[i].poses);
                if (need_labels) item.labels.resize(item.poses.size());
                id_to_item[item.walkthrough_id] = items.size();
                items.push_back(std::move(item));
            }

            if (need_labels) {
                std::istringstream is(read_file(labels_path));
                std::string line;
                std::size_t line_no = 0;
                while (std::getline(is, line)) {
                    ++line_no;
                    if (line.empty()) continue;
                    const LabeledStep row = label_from_jsonl(line);
                    const auto it = id_to_item.find(row.walkthrough_id);
                    if (it == id_to_item.end() || row.step >= items[it->second].poses.size())
                        throw std::invalid_argument(labels_path + " line " +
                                                    std::to_string(line_no) +
                                                    ": no matching walkthrough step");
                    items[it->second].labels[row.step] = row.y;
                }
            }
        }
    }

    auto fill_features = [&](std::vector<DatasetItem>& items) {
        parallel_for(items.size(), workers, [&](std::size_t i) {
            DatasetItem& item = items[i];
            const EnvironmentSpec& env = dataset.envs[item.env_index];
            item.features.reserve(item.poses.size());
            for (const Pose& p : item.poses)
                item.features.push_back(egocentric_features(env, p, static_cast<int>(rays)));
        });
    };
    fill_features(dataset.train);
    fill_features(dataset.val);
    return dataset;
}

void print_metrics(const std::string& json_line) { std::cout << json_line << "\n"; }

// ---------------------------------------------------------------------------

int cmd_gen_env(const CommonOpts& common, std::uint64_t seed, const std::string& out) {
    const Config cfg = build_config(common);
    ManifestScope scope("gen-env", cfg, {seed});
    const EnvironmentSpec env = generate_environment(seed, cfg.worldgen_params());
    const std::vector<std::string> violations = check_environment(env);
    if (!violations.empty()) {
        for (const std::string& v : violations) std::cerr << "invalid environment: " << v << "\n";
        return 1;
    }
    write_file(out, environment_to_json(env));
    scope.manifest.add_output(out);
    scope.finish(out);
    print_metrics("{\"env_id\":\"" + env.id + "\",\"objects\":" +
                  std::to_string(env.objects.size()) + "}");
    return 0;
}

int cmd_gen_walkthroughs(const CommonOpts& common, std::uint64_t seed, const std::string& env_path,
                         std::size_t count, const std::string& out) {
    const Config cfg = build_config(common);
    ManifestScope scope("gen-walkthroughs", cfg, {seed});
    scope.manifest.add_input(env_path);
    const EnvironmentSpec env = environment_from_json(read_file(env_path));
    const std::size_t T = cfg.get_size("memory.T");
    std::string body;
    for (std::size_t i = 0; i < count; ++i)
        body += walkthrough_to_jsonl(generate_walkthrough(env, derive_seed(seed, i), T)) + "\n";
    write_file(out, body);
    scope.manifest.add_output(out);
    scope.finish(out);
    print_metrics("{\"walkthroughs\":" + std::to_string(count) + ",\"steps\":" +
                  std::to_string(T) + "}");
    return 0;
}

int cmd_label(const CommonOpts& common, const std::string& env_path,
              const std::string& walks_path, const std::string& out, std::size_t workers) {
    const Config cfg = build_config(common);
    ManifestScope scope("label", cfg, {});
    scope.manifest.add_input(env_path);
    scope.manifest.add_input(walks_path);
    const EnvironmentSpec env = environment_from_json(read_file(env_path));
    const std::vector<Walkthrough> walks = read_walkthroughs(walks_path);
    std::vector<std::string> chunks(walks.size());
    parallel_for(walks.size(), workers, [&](std::size_t i) {
        std::string chunk;
        for (std::size_t t = 0; t < walks[i].poses.size(); ++t) {
            LabeledStep row;
            row.walkthrough_id = walkthrough_id(env.id, i);
            row.step = t;
            row.y = local_state_label(env, walks[i].poses[t]);
            chunk += label_to_jsonl(row) + "\n";
        }
        chunks[i] = std::move(chunk);
    });
    std::string body;
    for (const std::string& c : chunks) body += c;
    write_file(out, body);
    scope.manifest.add_output(out);
    scope.finish(out);
    print_metrics("{\"rows\":" + std::to_string(walks.size() *
                                                (walks.empty() ? 0 : walks.front().T())) + "}");
    return 0;
}

int cmd_pretrain(const CommonOpts& common, std::uint64_t seed, const std::string& data_dir,
                 const std::string& out, std::size_t workers) {
    const Config cfg = build_config(common);
    ManifestScope scope("pretrain", cfg, {seed});
    PretrainConfig pc = cfg.pretrain_config();
    pc.seed = seed;
    pc.workers = workers;
    const Dataset dataset = load_dataset(data_dir, cfg.model_config().rays, true, workers,
                                         &scope.manifest);
    EnvMemoryModel model = EnvMemoryModel::init(cfg.model_config(), derive_seed(seed, 0x0de1));
    PretrainResult result;
    switch (pc.objective) {
        case Objective::ssl_masked: result = pretrain_ssl(dataset, pc, model); break;
        case Objective::pano_feat: result = pretrain_pano(dataset, pc, model); break;
        default: result = pretrain(dataset, pc, model); break;
    }
    model.save(out);
    scope.manifest.add_output(out);

    nlohmann::json j;
    j["objective"] = objective_to_string(pc.objective);
    j["best_epoch"] = result.best_epoch;
    j["steps"] = result.loss_curve.size();
    j["val_curve"] = result.val_curve;
    write_file(out + ".curves.json", j.dump(2) + "\n");
    scope.manifest.add_output(out + ".curves.json");
    scope.finish(out);
    print_metrics(j.dump());
    return 0;
}

int cmd_eval_pretrain(const CommonOpts& common, const std::string& data_dir,
                      const std::string& model_path, const std::string& out,
                      std::size_t workers) {
    const Config cfg = build_config(common);
    ManifestScope scope("eval-pretrain", cfg, {});
    scope.manifest.add_input(model_path);
    const EnvMemoryModel model = EnvMemoryModel::load(model_path);
    const Dataset dataset =
        load_dataset(data_dir, model.config.rays, true, workers, &scope.manifest);
    const EvalReport report =
        eval_ap(model, dataset, pose_mode_from_string(cfg.get_string("pretrain.pose")), workers);
    print_metrics(report.to_json());
    if (!out.empty()) {
        write_file(out, report.to_json() + "\n");
        scope.manifest.add_output(out);
        scope.finish(out);
    }
    return 0;
}

int cmd_train_room(const CommonOpts& common, std::uint64_t seed, const std::string& data_dir,
                   const std::string& env_model_path, const std::string& out,
                   std::size_t workers) {
    const Config cfg = build_config(common);
    ManifestScope scope("train-room", cfg, {seed});
    RoomConfig rc = cfg.room_config();
    rc.seed = seed;
    rc.workers = workers;
    if (rc.use_env && env_model_path.empty())
        throw std::invalid_argument("train-room: room.use_env requires --env-model");

    std::optional<EnvMemoryModel> env_model;
    if (rc.use_env) {
        scope.manifest.add_input(env_model_path);
        env_model = EnvMemoryModel::load(env_model_path);
    }
    const std::size_t rays = rc.use_env ? env_model->config.rays : cfg.model_config().rays;
    const Dataset dataset = load_dataset(data_dir, rays, false, workers, &scope.manifest);

    std::vector<RoomInstance> instances =
        make_room_instances(dataset, false, rc.queries_per_walkthrough);
    if (rc.use_env && rc.freeze_env)
        attach_env_features(instances, dataset, *env_model, rc.pose_mode, workers);
    RoomTrainResult result =
        train_room(dataset, instances, rc, env_model ? &*env_model : nullptr);
    result.model.save(out);
    scope.manifest.add_output(out);
    if (rc.use_env && !rc.freeze_env) {
        env_model->save(out + ".env");
        scope.manifest.add_output(out + ".env");
    }
    scope.finish(out);
    nlohmann::json j;
    j["instances"] = instances.size();
    j["final_loss"] = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
    print_metrics(j.dump());
    return 0;
}

int cmd_eval_room(const CommonOpts& common, const std::string& data_dir,
                  const std::string& model_path, const std::string& env_model_path,
                  const std::string& baseline_path, const std::string& out,
                  std::size_t workers) {
    const Config cfg = build_config(common);
    ManifestScope scope("eval-room", cfg, {});
    RoomConfig rc = cfg.room_config();
    rc.workers = workers;
    scope.manifest.add_input(model_path);
    const RoomModel model = RoomModel::load(model_path);
    rc.use_env = model.use_env;
    if (model.use_env && env_model_path.empty())
        throw std::invalid_argument("eval-room: model uses environment features; pass --env-model");

    std::optional<EnvMemoryModel> env_model;
    if (model.use_env) {
        scope.manifest.add_input(env_model_path);
        env_model = EnvMemoryModel::load(env_model_path);
    }
    const std::size_t rays = env_model ? env_model->config.rays : cfg.model_config().rays;
    const Dataset dataset = load_dataset(data_dir, rays, false, workers, &scope.manifest);

    std::vector<RoomInstance> instances =
        make_room_instances(dataset, true, rc.queries_per_walkthrough);
    if (model.use_env)
        attach_env_features(instances, dataset, *env_model, rc.pose_mode, workers);
    const std::vector<std::vector<double>> probs =
        room_probs(model, dataset, instances, rc, workers);

    // The hard split ranks instances by the frame-only baseline's entropy;
    // without a baseline the model's own probabilities are used.
    std::vector<std::vector<double>> split_probs = probs;
    if (!baseline_path.empty()) {
        scope.manifest.add_input(baseline_path);
        const RoomModel baseline = RoomModel::load(baseline_path);
        RoomConfig bc = rc;
        bc.use_env = baseline.use_env;
        split_probs = room_probs(baseline, dataset, instances, bc, workers);
    }
    const EntropySplit split =
        entropy_split(split_probs, cfg.get_double("room.hard_fraction"));
    const RoomEval eval = eval_room(probs, instances, split);
    print_metrics(eval.to_json());
    if (!out.empty()) {
        write_file(out, eval.to_json() + "\n");
        scope.manifest.add_output(out);
        scope.finish(out);
    }
    return 0;
}

int cmd_gen_queries(const CommonOpts& common, const std::string& env_path,
                    const std::string& walks_path, const std::string& out) {
    const Config cfg = build_config(common);
    ManifestScope scope("gen-queries", cfg, {});
    scope.manifest.add_input(env_path);
    scope.manifest.add_input(walks_path);
    const EnvironmentSpec env = environment_from_json(read_file(env_path));
    const std::vector<Walkthrough> walks = read_walkthroughs(walks_path);
    std::string body;
    std::size_t n = 0;
    for (std::size_t i = 0; i < walks.size(); ++i) {
        for (const MomentQuery& q :
             generate_queries(env, walks[i].poses, walkthrough_id(env.id, i))) {
            body += query_to_jsonl(q) + "\n";
            ++n;
        }
    }
    write_file(out, body);
    scope.manifest.add_output(out);
    scope.finish(out);
    print_metrics("{\"queries\":" + std::to_string(n) + "}");
    return 0;
}

std::vector<EpmInstance> epm_instances_for_split(const Dataset& dataset, bool from_val) {
    const std::vector<DatasetItem>& items = from_val ? dataset.val : dataset.train;
    std::vector<EpmInstance> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const EnvironmentSpec& env = dataset.envs[items[i].env_index];
        for (const MomentQuery& q :
             generate_queries(env, items[i].poses, items[i].walkthrough_id))
            out.push_back({from_val, i, q});
    }
    return out;
}

int cmd_train_epm(const CommonOpts& common, std::uint64_t seed, const std::string& data_dir,
                  const std::string& env_model_path, const std::string& out,
                  std::size_t workers) {
    const Config cfg = build_config(common);
    ManifestScope scope("train-epm", cfg, {seed});
    LocalizerConfig lc = cfg.epm_config();
    lc.seed = seed;
    lc.workers = workers;
    if (lc.use_env && env_model_path.empty())
        throw std::invalid_argument("train-epm: epm.use_env requires --env-model");

    std::optional<EnvMemoryModel> env_model;
    if (lc.use_env) {
        scope.manifest.add_input(env_model_path);
        env_model = EnvMemoryModel::load(env_model_path);
    }
    const std::size_t rays = env_model ? env_model->config.rays : cfg.model_config().rays;
    const Dataset dataset = load_dataset(data_dir, rays, false, workers, &scope.manifest);
    const ClipTable clips = make_clip_table(dataset, lc.n_clips,
                                            env_model ? &*env_model : nullptr, lc.pose_mode,
                                            workers);
    const std::vector<EpmInstance> instances = epm_instances_for_split(dataset, false);
    EpmTrainResult result = train_localizer(dataset, clips, instances, lc);
    result.model.save(out);
    scope.manifest.add_output(out);
    scope.finish(out);
    nlohmann::json j;
    j["instances"] = instances.size();
    j["dropped_long"] = result.dropped_long;
    j["final_loss"] = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
    print_metrics(j.dump());
    return 0;
}

int cmd_eval_epm(const CommonOpts& common, const std::string& data_dir,
                 const std::string& model_path, const std::string& env_model_path,
                 const std::string& out, std::size_t workers) {
    const Config cfg = build_config(common);
    ManifestScope scope("eval-epm", cfg, {});
    LocalizerConfig lc = cfg.epm_config();
    scope.manifest.add_input(model_path);
    const LocalizerModel model = LocalizerModel::load(model_path);
    if (model.use_env && env_model_path.empty())
        throw std::invalid_argument("eval-epm: model uses environment features; pass --env-model");

    std::optional<EnvMemoryModel> env_model;
    if (model.use_env) {
        scope.manifest.add_input(env_model_path);
        env_model = EnvMemoryModel::load(env_model_path);
    }
    const std::size_t rays = env_model ? env_model->config.rays : cfg.model_config().rays;
    const Dataset dataset = load_dataset(data_dir, rays, false, workers, &scope.manifest);
    const ClipTable clips = make_clip_table(dataset, model.n_clips,
                                            env_model ? &*env_model : nullptr, lc.pose_mode,
                                            workers);
    const std::vector<EpmInstance> instances = epm_instances_for_split(dataset, true);
    const EpmEval eval =
        eval_localizer(model, dataset, clips, instances, {0.1, 0.3, 0.5, 0.7}, workers);
    print_metrics(eval.to_json());
    if (!out.empty()) {
        write_file(out, eval.to_json() + "\n");
        scope.manifest.add_output(out);
        scope.finish(out);
    }
    return 0;
}

int cmd_viz(const CommonOpts& common, const std::string& mode, const std::string& env_path,
            const std::string& walks_path, std::size_t line, long step,
            const std::string& model_path, std::size_t k, const std::string& out) {
    const Config cfg = build_config(common);
    ManifestScope scope("viz", cfg, {});
    scope.manifest.add_input(env_path);
    scope.manifest.add_input(walks_path);
    const EnvironmentSpec env = environment_from_json(read_file(env_path));
    const std::vector<Walkthrough> walks = read_walkthroughs(walks_path);
    if (line >= walks.size())
        throw std::invalid_argument("viz: --line beyond walkthrough count");
    const Walkthrough& w = walks[line];

    SceneRender render;
    if (mode == "trajectory") {
        RenderOptions options;
        options.query_step = step;
        render = render_topdown(env, w, options);
    } else {
        if (model_path.empty())
            throw std::invalid_argument("viz: attention mode requires --model");
        if (step < 0) throw std::invalid_argument("viz: attention mode requires --step");
        scope.manifest.add_input(model_path);
        const EnvMemoryModel model = EnvMemoryModel::load(model_path);
        render = render_attention(env, w, model, static_cast<std::size_t>(step), k);
    }
    write_file(out, render.svg);
    scope.manifest.add_output(out);
    scope.finish(out);
    print_metrics("{\"bytes\":" + std::to_string(render.svg.size()) + "}");
    return 0;
}

int cmd_validate(const std::string& env_path, const std::string& walks_path,
                 const std::string& labels_path, const std::string& manifest_path) {
    std::vector<std::string> violations;
    if (!manifest_path.empty()) {
        const RunManifest manifest = RunManifest::read(manifest_path);
        violations = manifest.validate();
    } else {
        violations = validate_dataset(env_path, walks_path, labels_path);
    }
    nlohmann::json j;
    j["violations"] = violations;
    j["ok"] = violations.empty();
    print_metrics(j.dump());
    return violations.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"egocentric environment-memory pipeline"};
    app.require_subcommand(1);

    // shared state filled by whichever subcommand parses
    CommonOpts common;
    std::uint64_t seed = 0;
    std::string out, env_path, walks_path, labels_path, data_dir = default_data_dir();
    std::string model_path, env_model_path, baseline_path, manifest_path;
    std::string mode = "trajectory";
    std::size_t count = 1, workers = 1, line = 0, topk = 3;
    long step = -1;

    auto add_workers = [&](CLI::App* cmd) {
        cmd->add_option("--workers", workers, "worker threads (never changes outputs)");
    };
    auto add_data = [&](CLI::App* cmd) {
        cmd->add_option("--data", data_dir, "dataset root (default $EGOMEM_DATA_DIR or ./data)");
    };

    CLI::App* gen_env = app.add_subcommand("gen-env", "generate a synthetic environment");
    add_common(gen_env, common);
    gen_env->add_option("--seed", seed)->required();
    gen_env->add_option("--out", out)->required();

    CLI::App* gen_walks =
        app.add_subcommand("gen-walkthroughs", "generate agent walkthroughs for an environment");
    add_common(gen_walks, common);
    gen_walks->add_option("--seed", seed)->required();
    gen_walks->add_option("--env", env_path)->required();
    gen_walks->add_option("--count", count)->required();
    gen_walks->add_option("--out", out)->required();

    CLI::App* label = app.add_subcommand("label", "compute local-state labels for walkthroughs");
    add_common(label, common);
    label->add_option("--env", env_path)->required();
    label->add_option("--walkthroughs", walks_path)->required();
    label->add_option("--out", out)->required();
    add_workers(label);

    CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "pretrain the environment model");
    add_common(pretrain_cmd, common);
    pretrain_cmd->add_option("--seed", seed)->required();
    pretrain_cmd->add_option("--out", out)->required();
    add_data(pretrain_cmd);
    add_workers(pretrain_cmd);

    CLI::App* eval_pre = app.add_subcommand("eval-pretrain", "held-out AP of a pretrained model");
    add_common(eval_pre, common);
    eval_pre->add_option("--model", model_path)->required();
    eval_pre->add_option("--out", out);
    add_data(eval_pre);
    add_workers(eval_pre);

    CLI::App* train_room_cmd = app.add_subcommand("train-room", "train the room classifier");
    add_common(train_room_cmd, common);
    train_room_cmd->add_option("--seed", seed)->required();
    train_room_cmd->add_option("--env-model", env_model_path);
    train_room_cmd->add_option("--out", out)->required();
    add_data(train_room_cmd);
    add_workers(train_room_cmd);

    CLI::App* eval_room_cmd = app.add_subcommand("eval-room", "evaluate the room classifier");
    add_common(eval_room_cmd, common);
    eval_room_cmd->add_option("--model", model_path)->required();
    eval_room_cmd->add_option("--env-model", env_model_path);
    eval_room_cmd->add_option("--baseline", baseline_path,
                              "frame-only model defining the entropy hard split");
    eval_room_cmd->add_option("--out", out);
    add_data(eval_room_cmd);
    add_workers(eval_room_cmd);

    CLI::App* gen_queries_cmd =
        app.add_subcommand("gen-queries", "generate episodic-memory queries");
    add_common(gen_queries_cmd, common);
    gen_queries_cmd->add_option("--env", env_path)->required();
    gen_queries_cmd->add_option("--walkthroughs", walks_path)->required();
    gen_queries_cmd->add_option("--out", out)->required();

    CLI::App* train_epm_cmd = app.add_subcommand("train-epm", "train the moment localizer");
    add_common(train_epm_cmd, common);
    train_epm_cmd->add_option("--seed", seed)->required();
    train_epm_cmd->add_option("--env-model", env_model_path);
    train_epm_cmd->add_option("--out", out)->required();
    add_data(train_epm_cmd);
    add_workers(train_epm_cmd);

    CLI::App* eval_epm_cmd = app.add_subcommand("eval-epm", "evaluate the moment localizer");
    add_common(eval_epm_cmd, common);
    eval_epm_cmd->add_option("--model", model_path)->required();
    eval_epm_cmd->add_option("--env-model", env_model_path);
    eval_epm_cmd->add_option("--out", out);
    add_data(eval_epm_cmd);
    add_workers(eval_epm_cmd);

    CLI::App* viz = app.add_subcommand("viz", "render trajectory or attention figures");
    add_common(viz, common);
    viz->add_option("--mode", mode)->check(CLI::IsMember({"trajectory", "attention"}));
    viz->add_option("--env", env_path)->required();
    viz->add_option("--walkthrough", walks_path)->required();
    viz->add_option("--line", line, "walkthrough index within the file");
    viz->add_option("--step", step, "query step to mark / attend from");
    viz->add_option("--model", model_path, "environment model (attention mode)");
    viz->add_option("--k", topk, "number of attended poses to draw");
    viz->add_option("--out", out)->required();

    CLI::App* validate = app.add_subcommand("validate", "validate datasets or run manifests");
    validate->add_option("--env", env_path);
    validate->add_option("--walkthroughs", walks_path);
    validate->add_option("--labels", labels_path);
    validate->add_option("--manifest", manifest_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 64;
    }

    try {
        if (gen_env->parsed()) return cmd_gen_env(common, seed, out);
        if (gen_walks->parsed())
            return cmd_gen_walkthroughs(common, seed, env_path, count, out);
        if (label->parsed()) return cmd_label(common, env_path, walks_path, out, workers);
        if (pretrain_cmd->parsed()) return cmd_pretrain(common, seed, data_dir, out, workers);
        if (eval_pre->parsed())
            return cmd_eval_pretrain(common, data_dir, model_path, out, workers);
        if (train_room_cmd->parsed())
            return cmd_train_room(common, seed, data_dir, env_model_path, out, workers);
        if (eval_room_cmd->parsed())
            return cmd_eval_room(common, data_dir, model_path, env_model_path, baseline_path,
                                 out, workers);
        if (gen_queries_cmd->parsed()) return cmd_gen_queries(common, env_path, walks_path, out);
        if (train_epm_cmd->parsed())
            return cmd_train_epm(common, seed, data_dir, env_model_path, out, workers);
        if (eval_epm_cmd->parsed())
            return cmd_eval_epm(common, data_dir, model_path, env_model_path, out, workers);
        if (viz->parsed())
            return cmd_viz(common, mode, env_path, walks_path, line, step, model_path, topk, out);
        if (validate->parsed())
            return cmd_validate(env_path, walks_path, labels_path, manifest_path);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 64;
}
