#include "egomem/manifest.hpp"

#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "egomem/checkpoint.hpp"
#include "egomem/localstate.hpp"
#include "egomem/util.hpp"

namespace egomem {

namespace {

// key -> desk default; single source of truth for known keys
const std::map<std::string, std::string>& default_values() {
    static const std::map<std::string, std::string> defaults = {
        {"model.d", "64"},
        {"model.heads", "4"},
        {"model.layers_enc", "2"},
        {"model.layers_dec", "2"},
        {"model.rays", "24"},
        {"model.pose_dim", "16"},
        {"memory.K", "16"},
        {"memory.T", "128"},
        {"noise.enabled", "true"},
        {"noise.pos", "0.0125"},
        {"noise.heading", "0.157"},
        {"pretrain.objective", "env_state"},
        {"pretrain.pose", "relative"},
        {"pretrain.epochs", "40"},
        {"pretrain.lr", "0.0001"},
        {"pretrain.batch_size", "8"},
        {"room.use_env", "true"},
        {"room.freeze", "true"},
        {"room.window", "8"},
        {"room.g_prime", "64"},
        {"room.hidden", "128"},
        {"room.epochs", "10"},
        {"room.lr", "0.001"},
        {"room.batch_size", "16"},
        {"room.queries_per_walkthrough", "4"},
        {"room.hard_fraction", "0.3"},
        {"epm.use_env", "true"},
        {"epm.n_clips", "32"},
        {"epm.max_span", "16"},
        {"epm.d_q", "32"},
        {"epm.g_prime", "64"},
        {"epm.hidden", "128"},
        {"epm.epochs", "8"},
        {"epm.lr", "0.001"},
        {"epm.batch_size", "8"},
        {"world.rooms", "5"},
        {"world.size_x", "14"},
        {"world.size_z", "14"},
        {"world.objects_per_room", "3"},
        {"world.resolution", "0.125"},
        {"data.train_envs", "16"},
        {"data.val_envs", "4"},
        {"data.walkthroughs_per_env", "64"},
    };
    return defaults;
}

}  // namespace

void Config::check_known(const std::string& key) const {
    if (!default_values().count(key)) throw ConfigError("unknown config key: " + key);
}

Config Config::preset(const std::string& name) {
    Config c;
    c.values_ = default_values();
    if (name == "desk") return c;
    if (name == "paper") {
        c.values_["model.d"] = "128";
        c.values_["model.heads"] = "8";
        c.values_["memory.K"] = "32";
        c.values_["memory.T"] = "512";
        c.values_["pretrain.epochs"] = "200";
        c.values_["room.hidden"] = "512";
        c.values_["epm.hidden"] = "512";
        return c;
    }
    throw ConfigError("unknown preset: " + name);
}

void Config::set(const std::string& key, const std::string& value) {
    check_known(key);
    values_[key] = value;
}

void Config::apply_file(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object: " + path);
    for (const auto& [key, value] : j.items()) {
        check_known(key);
        values_[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
}

void Config::apply_override(const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be key=value: " + assignment);
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

double Config::get_double(const std::string& key) const {
    check_known(key);
    try {
        return std::stod(values_.at(key));
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not a number: " + values_.at(key));
    }
}

std::size_t Config::get_size(const std::string& key) const {
    const double v = get_double(key);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
        throw ConfigError("config key " + key + " is not a nonnegative integer");
    return static_cast<std::size_t>(v);
}

bool Config::get_bool(const std::string& key) const {
    check_known(key);
    const std::string& v = values_.at(key);
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw ConfigError("config key " + key + " is not a boolean: " + v);
}

std::string Config::get_string(const std::string& key) const {
    check_known(key);
    return values_.at(key);
}

std::string Config::to_json() const {
    nlohmann::json j;
    for (const auto& [k, v] : values_) j[k] = v;
    return j.dump();
}

ModelConfig Config::model_config() const {
    ModelConfig m;
    m.d = get_size("model.d");
    m.heads = get_size("model.heads");
    m.layers_enc = get_size("model.layers_enc");
    m.layers_dec = get_size("model.layers_dec");
    m.K = get_size("memory.K");
    m.T = get_size("memory.T");
    m.rays = get_size("model.rays");
    m.num_classes = default_object_taxonomy().size();
    m.pose_dim = get_size("model.pose_dim");
    return m;
}

PretrainConfig Config::pretrain_config() const {
    PretrainConfig p;
    p.objective = objective_from_string(get_string("pretrain.objective"));
    p.pose_mode = pose_mode_from_string(get_string("pretrain.pose"));
    p.noise_enabled = get_bool("noise.enabled");
    p.epochs = get_size("pretrain.epochs");
    p.lr = get_double("pretrain.lr");
    p.batch_size = get_size("pretrain.batch_size");
    return p;
}

RoomConfig Config::room_config() const {
    RoomConfig r;
    r.use_env = get_bool("room.use_env");
    r.freeze_env = get_bool("room.freeze");
    r.window = get_size("room.window");
    r.g_prime = get_size("room.g_prime");
    r.hidden = get_size("room.hidden");
    r.epochs = get_size("room.epochs");
    r.lr = get_double("room.lr");
    r.batch_size = get_size("room.batch_size");
    r.queries_per_walkthrough = get_size("room.queries_per_walkthrough");
    r.pose_mode = pose_mode_from_string(get_string("pretrain.pose"));
    return r;
}

LocalizerConfig Config::epm_config() const {
    LocalizerConfig l;
    l.use_env = get_bool("epm.use_env");
    l.n_clips = get_size("epm.n_clips");
    l.max_span = get_size("epm.max_span");
    l.d_q = get_size("epm.d_q");
    l.g_prime = get_size("epm.g_prime");
    l.hidden = get_size("epm.hidden");
    l.epochs = get_size("epm.epochs");
    l.lr = get_double("epm.lr");
    l.batch_size = get_size("epm.batch_size");
    l.pose_mode = pose_mode_from_string(get_string("pretrain.pose"));
    return l;
}

WorldgenParams Config::worldgen_params() const {
    WorldgenParams w;
    w.n_rooms = static_cast<int>(get_size("world.rooms"));
    w.grid_size_x = get_double("world.size_x");
    w.grid_size_z = get_double("world.size_z");
    w.objects_per_room = static_cast<int>(get_size("world.objects_per_room"));
    w.grid_resolution = get_double("world.resolution");
    return w;
}

void RunManifest::add_input(const std::string& path) { input_hashes[path] = hash_file(path); }
void RunManifest::add_output(const std::string& path) { output_hashes[path] = hash_file(path); }

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = nlohmann::json::parse(config_json.empty() ? "{}" : config_json);
    j["seeds"] = seeds;
    j["inputs"] = input_hashes;
    j["outputs"] = output_hashes;
    j["wall_time_s"] = wall_time_s;
    j["code_version"] = code_version;
    return j.dump(2);
}

void RunManifest::write(const std::string& path) const { write_file(path, to_json() + "\n"); }

RunManifest RunManifest::read(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    RunManifest m;
    m.command = j["command"].get<std::string>();
    m.config_json = j["config"].dump();
    m.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    m.input_hashes = j["inputs"].get<std::map<std::string, std::string>>();
    m.output_hashes = j["outputs"].get<std::map<std::string, std::string>>();
    m.wall_time_s = j["wall_time_s"].get<double>();
    m.code_version = j["code_version"].get<std::string>();
    return m;
}

std::vector<std::string> RunManifest::validate() const {
    std::vector<std::string> violations;
    auto check = [&](const std::map<std::string, std::string>& hashes, const char* kind) {
        for (const auto& [path, expected] : hashes) {
            try {
                const std::string actual = hash_file(path);
                if (actual != expected)
                    violations.push_back(std::string(kind) + " hash mismatch: " + path);
            } catch (const std::exception&) {
                violations.push_back(std::string(kind) + " missing: " + path);
            }
        }
    };
    check(input_hashes, "input");
    check(output_hashes, "output");
    return violations;
}

std::vector<std::string> validate_dataset(const std::string& env_path,
                                          const std::string& walkthroughs_path,
                                          const std::string& labels_path) {
    std::vector<std::string> violations;
    EnvironmentSpec env;
    try {
        env = environment_from_json(read_file(env_path));
    } catch (const std::exception& e) {
        violations.push_back(std::string("environment: ") + e.what());
        return violations;
    }
    for (const std::string& v : check_environment(env)) violations.push_back("environment: " + v);

    std::vector<Walkthrough> walkthroughs;
    {
        std::istringstream is(read_file(walkthroughs_path));
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                Walkthrough w = walkthrough_from_jsonl(line);
                if (w.env_id != env.id)
                    violations.push_back("walkthrough line " + std::to_string(line_no) +
                                         ": env_id mismatch");
                // pose replay: re-running the actions must reproduce the poses
                const auto replayed = replay_actions(env, w.poses.front(), w.actions);
                for (std::size_t t = 0; t < w.poses.size(); ++t) {
                    if (std::abs(replayed[t].x - w.poses[t].x) > 1e-9 ||
                        std::abs(replayed[t].z - w.poses[t].z) > 1e-9 ||
                        replayed[t].heading != w.poses[t].heading) {
                        violations.push_back("walkthrough line " + std::to_string(line_no) +
                                             ": pose replay diverges at step " + std::to_string(t));
                        break;
                    }
                }
                walkthroughs.push_back(std::move(w));
            } catch (const std::exception& e) {
                violations.push_back("walkthrough line " + std::to_string(line_no) + ": " +
                                     e.what());
            }
        }
    }

    std::istringstream is(read_file(labels_path));
    std::string line;
    std::size_t line_no = 0, n_rows = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        LabeledStep row;
        try {
            row = label_from_jsonl(line);
        } catch (const std::exception& e) {
            violations.push_back("label line " + std::to_string(line_no) + ": " + e.what());
            continue;
        }
        ++n_rows;
        if (row.y.size() != env.object_taxonomy.size()) {
            violations.push_back("label line " + std::to_string(line_no) + ": wrong class count");
            continue;
        }
        // 1% oracle spot check, deterministic by row index;
        // walkthrough ids follow the "<env_id>#<index>" convention
        if (n_rows % 100 == 1) {
            std::size_t w_idx = walkthroughs.size();
            const std::size_t hash_pos = row.walkthrough_id.rfind('#');
            if (hash_pos != std::string::npos) {
                try {
                    w_idx = std::stoul(row.walkthrough_id.substr(hash_pos + 1));
                } catch (const std::exception&) {
                    w_idx = walkthroughs.size();
                }
            }
            if (w_idx < walkthroughs.size() && row.step < walkthroughs[w_idx].poses.size()) {
                const LocalStateLabel oracle =
                    oracle_local_state(env, walkthroughs[w_idx].poses[row.step]);
                if (oracle != row.y)
                    violations.push_back("label line " + std::to_string(line_no) +
                                         ": oracle mismatch");
            }
        }
    }
    const std::size_t expected = walkthroughs.size() * (walkthroughs.empty() ? 0 : walkthroughs.front().T());
    if (n_rows != expected)
        violations.push_back("labels: row count " + std::to_string(n_rows) + " != expected " +
                             std::to_string(expected));
    return violations;
}

}  // namespace egomem
