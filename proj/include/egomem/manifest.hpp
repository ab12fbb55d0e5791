#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "egomem/envmemory.hpp"
#include "egomem/epm_task.hpp"
#include "egomem/pretrain.hpp"
#include "egomem/room_task.hpp"
#include "egomem/worldgen.hpp"

namespace egomem {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Layered flat key-value configuration: defaults < preset < file < overrides.
// Unknown keys are rejected at every layer.
class Config {
public:
    // preset: "desk" (default) or "paper"
    static Config preset(const std::string& name);

    void apply_file(const std::string& path);
    // "key=value" command-line override
    void apply_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    double get_double(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::string get_string(const std::string& key) const;

    // full resolved snapshot, sorted keys
    std::string to_json() const;

    ModelConfig model_config() const;
    PretrainConfig pretrain_config() const;
    RoomConfig room_config() const;
    LocalizerConfig epm_config() const;
    WorldgenParams worldgen_params() const;

private:
    std::map<std::string, std::string> values_;
    void check_known(const std::string& key) const;
};

inline constexpr const char* kCodeVersion = "egomem 1.0";

// Reproducibility record written beside every CLI output artifact.
struct RunManifest {
    std::string command;
    std::string config_json;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::string> input_hashes;   // path -> fnv1a
    std::map<std::string, std::string> output_hashes;  // path -> fnv1a
    double wall_time_s = 0;
    std::string code_version = kCodeVersion;

    void add_input(const std::string& path);
    void add_output(const std::string& path);
    std::string to_json() const;
    void write(const std::string& path) const;
    static RunManifest read(const std::string& path);

    // every referenced artifact exists with a matching hash
    std::vector<std::string> validate() const;
};

// Dataset sanity: schema versions, pose replay, row counts and a 1% label
// spot check against the independent oracle. Returns violations (empty = ok).
std::vector<std::string> validate_dataset(const std::string& env_path,
                                          const std::string& walkthroughs_path,
                                          const std::string& labels_path);

}  // namespace egomem
