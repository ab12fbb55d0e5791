#pragma once

#include <string>
#include <vector>

#include "egomem/optim.hpp"

namespace egomem {

// Thrown for unreadable/corrupt files across the IO surfaces.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Versioned binary weight file: magic "EGMM", format version u32, tensor
// count u32, then (name, rows, cols, f64 data) records, little-endian.
// Hyperparameters travel in a JSON sidecar at <path>.json.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params,
                     const std::string& hyper_json);

struct LoadedCheckpoint {
    std::vector<NamedParam> params;
    std::string hyper_json;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies loaded values into existing parameters, matching by name; every
// parameter must be present with identical shape.
void restore_params(const std::vector<NamedParam>& params, const LoadedCheckpoint& loaded);

}  // namespace egomem
